"""Function-preserving layer insertion guided by first-order sensitivities.

Where to put a new hidden layer is decided from a single gradient
evaluation on a *fully extended* network: a scratch copy of the current
network with an identity-initialized layer at every admissible position.
Holding the new parameters fixed at their identity values turns the current
training problem into an equality-constrained one, and the multiplier of
that constraint is the negated gradient with respect to the new parameters.
Its size, normalized by the layer width, predicts how much the objective can
drop once those parameters are released:

    FNN     merit = ||dF/dW||_F^2  / h^2
    ResNet  merit = ||dF/dW2||_F^2 / h^2

Bias gradients do not enter the merit, and for residual blocks the W1 and
bias gradients vanish at insertion time anyway.
"""

from dataclasses import dataclass, field

import numpy as np

from .autograd import GradientSet, backprop
from .network import FNN, FnnLayerParams, NetworkSpec, ParamSet, ResidualBlockParams

DEFAULT_W1_SCALE = 0.8


@dataclass(frozen=True, order=True)
class CandidatePosition:
    """Insert directly after hidden layer ``index`` (1-based)."""

    index: int


@dataclass(frozen=True)
class Strategy:
    """How to pick among candidate positions.

    ``kind`` is ``"LI"`` (largest merit), ``"LIother"`` (smallest merit) or
    ``"fixed"`` (always ``position``).
    """

    kind: str = "LI"
    position: int = None

    def __post_init__(self):
        if self.kind not in ("LI", "LIother", "fixed"):
            raise ValueError(f"unknown strategy {self.kind!r}")
        if (self.kind == "fixed") != (self.position is not None):
            raise ValueError("a position is required for, and only for, the fixed strategy")

    @classmethod
    def parse(cls, value):
        """Accept a Strategy, ``"LI"``, ``"LIother"``, ``"fixed:<k>"``, ``{"fixed": k}`` or ``None``."""
        if value is None or isinstance(value, cls):
            return value
        if isinstance(value, dict) and set(value) == {"fixed"}:
            return cls("fixed", int(value["fixed"]))
        text = str(value)
        if text.lower() in ("none", ""):
            return None
        if text.lower().startswith("fixed:"):
            return cls("fixed", int(text.split(":", 1)[1]))
        canon = {"li": "LI", "liother": "LIother", "li_other": "LIother"}.get(text.lower())
        if canon is None:
            raise ValueError(f"cannot parse strategy {value!r}")
        return cls(canon)

    def __str__(self):
        return f"fixed:{self.position}" if self.kind == "fixed" else self.kind


@dataclass
class MeritReport:
    """Merits of every candidate position and the position picked from them.

    ``new_grads[i]`` holds the gradient arrays of the i-th candidate's new
    parameters (``(W, b)`` for FNN, ``(W1, W2, b)`` for ResNet). The
    constraint multipliers are their negatives, see :meth:`multipliers`.
    """

    kind: str
    candidates: list
    merits: list
    weight_sq_norms: list
    bias_sq_norms: list
    new_grads: list = field(repr=False)
    chosen: CandidatePosition = None
    strategy: Strategy = None
    loss: float = None

    def multipliers(self):
        return [tuple(-g for g in grads) for grads in self.new_grads]

    def to_dict(self):
        return {
            "kind": self.kind,
            "strategy": str(self.strategy),
            "chosen": self.chosen.index,
            "loss": self.loss,
            "candidates": [c.index for c in self.candidates],
            "merits": list(self.merits),
            "weight_sq_norms": list(self.weight_sq_norms),
            "bias_sq_norms": list(self.bias_sq_norms),
        }


def init_fnn_identity_layer(width):
    if width < 1:
        raise ValueError("width must be >= 1")
    return FnnLayerParams(np.eye(width), np.zeros((width, 1)))


def init_resnet_identity_block(width, w1_scale=DEFAULT_W1_SCALE):
    """Residual block with ``W2 = 0``; it maps every input to itself.

    ``W1 = w1_scale * I`` and ``b = 0`` keep ``tanh(W1 x + b)`` away from
    zero so the ``W2`` gradient is informative.
    """
    if width < 1:
        raise ValueError("width must be >= 1")
    return ResidualBlockParams(w1_scale * np.eye(width), np.zeros((width, width)), np.zeros((width, 1)))


def candidate_positions(spec):
    """Admissible insertion points, in increasing order.

    FNN: after each hidden layer (never before the first, which would feed
    unrectified inputs to the identity layer). ResNet: strictly between two
    existing hidden layers.
    """
    n = spec.n_hidden
    last = n if spec.kind == FNN else n - 1
    if last < 1:
        raise ValueError(f"no admissible insertion position for {spec.kind} widths {spec.widths}")
    return [CandidatePosition(k) for k in range(1, last + 1)]


def _check_position(spec, position):
    if position not in candidate_positions(spec):
        raise ValueError(f"position {position.index} is not admissible for {spec.kind} widths {spec.widths}")


def insert_layer(base, position, w1_scale=DEFAULT_W1_SCALE):
    """Return ``base`` with one identity layer added after hidden layer ``position``."""
    position = position if isinstance(position, CandidatePosition) else CandidatePosition(int(position))
    spec = base.spec
    _check_position(spec, position)
    k = position.index
    w = spec.widths
    new_spec = NetworkSpec(spec.kind, w[: k + 1] + (w[k],) + w[k + 1 :])
    if spec.kind == FNN:
        layers = list(base.layers[:k]) + [init_fnn_identity_layer(w[k])] + list(base.layers[k:])
        return ParamSet(new_spec, layers=layers)
    # block j-1 (0-based) maps hidden layer j to j+1; the new block goes before it
    blocks = list(base.blocks[: k - 1]) + [init_resnet_identity_block(w[k], w1_scale)] + list(base.blocks[k - 1 :])
    return ParamSet(new_spec, entry=base.entry, blocks=blocks, exit=base.exit)


def build_fully_extended(base, w1_scale=DEFAULT_W1_SCALE):
    """Scratch network with an identity layer at every candidate position.

    Returns ``(ext, mapping)`` where ``mapping`` pairs each candidate with the
    index of its new layer in ``ext.layers`` (FNN) or ``ext.blocks`` (ResNet).
    Old parameters are copied, so ``ext`` shares no memory with ``base``.
    """
    base = base.copy()
    candidates = candidate_positions(base.spec)
    ext = base
    # insert from the back so earlier indices stay valid
    for pos in reversed(candidates):
        ext = insert_layer(ext, pos, w1_scale)
    if base.spec.kind == FNN:
        mapping = [(pos, 2 * pos.index - 1) for pos in candidates]
    else:
        mapping = [(pos, 2 * (pos.index - 1)) for pos in candidates]
    return ext, mapping


def choose(candidates, merits, strategy):
    strategy = Strategy.parse(strategy) or Strategy("LI")
    if strategy.kind == "fixed":
        pos = CandidatePosition(strategy.position)
        if pos not in candidates:
            raise ValueError(f"fixed position {strategy.position} not among candidates")
        return pos
    merits = np.asarray(merits)
    # np.argmax / argmin return the first extremum, i.e. the smallest index on ties
    i = int(np.argmax(merits)) if strategy.kind == "LI" else int(np.argmin(merits))
    return candidates[i]


def merits_from_gradients(ext, mapping, grads, strategy="LI", loss=None):
    """Build a :class:`MeritReport` from gradients of the fully extended net."""
    strategy = Strategy.parse(strategy) or Strategy("LI")
    kind = ext.spec.kind
    candidates, merits, w_sq, b_sq, new = [], [], [], [], []
    for pos, i in mapping:
        if kind == FNN:
            g = grads.layers[i]
            weight, tensors = g.weight, (g.weight, g.bias)
        else:
            g = grads.blocks[i]
            weight, tensors = g.w2, (g.w1, g.w2, g.bias)
        h = weight.shape[0]
        sq = float(np.sum(weight * weight))
        candidates.append(pos)
        merits.append(sq / h**2)
        w_sq.append(sq)
        b_sq.append(float(np.sum(g.bias * g.bias)))
        new.append(tuple(t.copy() for t in tensors))
    chosen = choose(candidates, merits, strategy)
    return MeritReport(kind, candidates, merits, w_sq, b_sq, new, chosen, strategy, loss)


def compute_merits(ext, mapping, data, strategy="LI"):
    """Merits from one full-batch forward/backward pass; ``ext`` is not modified."""
    if len(data) == 0:
        raise ValueError("merits need a nonempty dataset")
    loss, grads = backprop(ext, data)
    return merits_from_gradients(ext, mapping, grads, strategy, loss)


def compute_merits_minibatch(ext, mapping, data, batch_size, strategy="LI"):
    """Merits from one zero-learning-rate epoch over index-ordered mini-batches.

    Per-batch mean gradients are re-weighted by batch size and summed, which
    recovers the full-batch mean gradient up to summation order.
    """
    n = len(data)
    if not 1 <= batch_size <= n:
        raise ValueError(f"batch_size must lie in [1, {n}]")
    acc = np.zeros(ext.size)
    loss = 0.0
    for start in range(0, n, batch_size):
        batch = data.subset(np.arange(start, min(start + batch_size, n)))
        batch_loss, g = backprop(ext, batch)
        acc += g.flat() * len(batch)
        loss += batch_loss * len(batch)
    grads = ext.with_flat(acc / n)
    grads = GradientSet.from_tensors(ext.spec, grads.tensors(), batch_size=n)
    return merits_from_gradients(ext, mapping, grads, strategy, loss / n)


def select_and_insert(base, report, w1_scale=DEFAULT_W1_SCALE):
    """Insert the layer picked in ``report`` into ``base``; the scratch net is not reused."""
    _check_position(base.spec, report.chosen)
    return insert_layer(base, report.chosen, w1_scale)
