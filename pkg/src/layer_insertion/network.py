"""Architecture descriptors, parameter containers and forward propagation.

Two families are supported:

* ``fnn``: ``x_k = relu(W_k x_{k-1} + b_k)`` for every hidden layer, followed
  by an affine output layer ``W x + b`` without activation.
* ``resnet``: a bias-free entry map ``x_1 = W x_0``, residual blocks
  ``x_k = x_{k-1} + W2 tanh(W1 x_{k-1} + b)`` and a bias-free exit map.

Samples are processed column-wise: a batch of inputs is an ``(h_0, n)``
matrix.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .numerics import ACTIVATIONS, as_matrix, batch_softmax_cross_entropy
from .rng import stream

FNN = "fnn"
RESNET = "resnet"
KINDS = (FNN, RESNET)

HIDDEN_ACTIVATION = {FNN: "relu", RESNET: "tanh"}


@dataclass(frozen=True)
class NetworkSpec:
    """Network family and the widths ``h_0, ..., h_{L+1}``."""

    kind: str
    widths: tuple

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        widths = tuple(int(w) for w in self.widths)
        if len(widths) < 2 or min(widths) < 1:
            raise ValueError(f"need at least input and output width, all >= 1; got {widths}")
        if kind == RESNET:
            if len(widths) < 3:
                raise ValueError("a ResNet needs at least one hidden layer")
            if len(set(widths[1:-1])) != 1:
                raise ValueError(f"ResNet hidden widths must all be equal, got {widths[1:-1]}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "widths", widths)

    @property
    def n_hidden(self):
        return len(self.widths) - 2

    @property
    def n_blocks(self):
        return max(self.n_hidden - 1, 0) if self.kind == RESNET else 0

    @property
    def n_inputs(self):
        return self.widths[0]

    @property
    def n_outputs(self):
        return self.widths[-1]


@dataclass(frozen=True)
class FnnLayerParams:
    weight: np.ndarray
    bias: np.ndarray


@dataclass(frozen=True)
class ResidualBlockParams:
    w1: np.ndarray
    w2: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        h = self.w1.shape[0]
        if self.w1.shape != (h, h) or self.w2.shape != (h, h) or self.bias.shape != (h, 1):
            raise ValueError(
                f"residual block shapes inconsistent: w1 {self.w1.shape}, "
                f"w2 {self.w2.shape}, bias {self.bias.shape}"
            )


@dataclass(frozen=True)
class ParamSet:
    """Trainable parameters for a :class:`NetworkSpec`.

    FNN networks fill ``layers`` (hidden layers then the output layer).
    ResNets fill ``entry``, ``blocks`` and ``exit``.
    """

    spec: NetworkSpec
    layers: tuple = ()
    entry: np.ndarray = None
    blocks: tuple = ()
    exit: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "blocks", tuple(self.blocks))
        expected = expected_shapes(self.spec)
        got = [t.shape for t in self.tensors()]
        if got != expected:
            raise ValueError(f"parameter shapes {got} do not match spec {self.spec} (expected {expected})")

    def tensors(self):
        """All parameter arrays in canonical order."""
        if self.spec.kind == FNN:
            out = []
            for layer in self.layers:
                out += [layer.weight, layer.bias]
            return out
        out = [self.entry]
        for blk in self.blocks:
            out += [blk.w1, blk.w2, blk.bias]
        out.append(self.exit)
        return out

    @classmethod
    def from_tensors(cls, spec, tensors, **extra):
        tensors = [np.asarray(t, dtype=np.float64) for t in tensors]
        if spec.kind == FNN:
            layers = [FnnLayerParams(tensors[i], tensors[i + 1]) for i in range(0, len(tensors), 2)]
            return cls(spec, layers=layers, **extra)
        blocks = [
            ResidualBlockParams(*tensors[i : i + 3]) for i in range(1, len(tensors) - 1, 3)
        ]
        return cls(spec, entry=tensors[0], blocks=blocks, exit=tensors[-1], **extra)

    def flat(self):
        return np.concatenate([t.ravel() for t in self.tensors()])

    def with_flat(self, vector):
        vector = np.asarray(vector, dtype=np.float64)
        out, pos = [], 0
        for t in self.tensors():
            out.append(vector[pos : pos + t.size].reshape(t.shape))
            pos += t.size
        if pos != vector.size:
            raise ValueError(f"flat vector has {vector.size} entries, expected {pos}")
        return ParamSet.from_tensors(self.spec, out)

    def copy(self):
        return ParamSet.from_tensors(self.spec, [t.copy() for t in self.tensors()])

    @property
    def size(self):
        return sum(t.size for t in self.tensors())


def expected_shapes(spec):
    w = spec.widths
    if spec.kind == FNN:
        shapes = []
        for k in range(1, len(w)):
            shapes += [(w[k], w[k - 1]), (w[k], 1)]
        return shapes
    h = w[1]
    shapes = [(h, w[0])]
    shapes += [(h, h), (h, h), (h, 1)] * spec.n_blocks
    shapes.append((w[-1], h))
    return shapes


def param_count(spec):
    """Number of scalar trainable parameters of ``spec``."""
    w = spec.widths
    if spec.kind == FNN:
        return sum(w[k] * w[k - 1] + w[k] for k in range(1, len(w)))
    h = w[1]
    return h * w[0] + spec.n_blocks * (2 * h * h + h) + w[-1] * h


def init_params(spec, seed):
    """Uniform ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` draws for every entry.

    ``fan_in`` is the input width of the layer (``h`` for residual blocks).
    Draws follow the canonical tensor order from the ``init`` stream of
    ``seed``, so equal (spec, seed) pairs give identical parameters.
    """
    rng = stream(seed, "init")
    tensors = []
    for shape in expected_shapes(spec):
        if shape[1] == 1:
            fan_in = _bias_fan_in(spec, len(tensors))
        else:
            fan_in = shape[1]
        bound = 1.0 / np.sqrt(fan_in)
        tensors.append(rng.uniform(-bound, bound, size=shape))
    return ParamSet.from_tensors(spec, tensors)


def _bias_fan_in(spec, index):
    # bias follows its weight in canonical order (ResNet: after w1, w2)
    if spec.kind == FNN:
        return spec.widths[index // 2]
    return spec.widths[1]


@dataclass
class ForwardCache:
    """Intermediate states of a forward pass.

    ``states[k]`` is ``x_k`` for ``k = 0 .. L+1``. For an FNN ``pre[k]`` holds
    the pre-activation of layer ``k+1``; for a ResNet ``pre[j]`` and
    ``act[j]`` hold ``W1 x + b`` and ``tanh`` of it for block ``j``.
    """

    states: list = field(default_factory=list)
    pre: list = field(default_factory=list)
    act: list = field(default_factory=list)


def _check_input(params, x, kind):
    if params.spec.kind != kind:
        raise ValueError(f"expected a {kind} parameter set, got {params.spec.kind}")
    x = as_matrix(x)
    if x.shape[0] != params.spec.n_inputs:
        raise ValueError(f"input has {x.shape[0]} rows, network expects {params.spec.n_inputs}")
    return x


def forward_fnn(params, x):
    x = _check_input(params, x, FNN)
    act, _ = ACTIVATIONS[HIDDEN_ACTIVATION[FNN]]
    cache = ForwardCache(states=[x])
    for layer in params.layers[:-1]:
        z = layer.weight @ x + layer.bias
        x = act(z)
        cache.pre.append(z)
        cache.states.append(x)
    out = params.layers[-1]
    z = out.weight @ x + out.bias
    cache.pre.append(z)
    cache.states.append(z)
    return z, cache


def forward_resnet(params, x):
    x0 = _check_input(params, x, RESNET)
    act, _ = ACTIVATIONS[HIDDEN_ACTIVATION[RESNET]]
    x = params.entry @ x0
    cache = ForwardCache(states=[x0, x])
    for blk in params.blocks:
        z = blk.w1 @ x + blk.bias
        a = act(z)
        x = x + blk.w2 @ a
        cache.pre.append(z)
        cache.act.append(a)
        cache.states.append(x)
    out = params.exit @ x
    cache.states.append(out)
    return out, cache


def forward(params, x):
    """Dispatch to the forward pass of the parameter set's family."""
    if params.spec.kind == FNN:
        return forward_fnn(params, x)
    return forward_resnet(params, x)


def predict_logits(params, x):
    return forward(params, x)[0]


def objective(params, data):
    """Mean softmax cross entropy of the network over ``data``."""
    if len(data) == 0:
        raise ValueError("objective of an empty dataset is undefined")
    x, y = data.columns
    if y.shape[0] != params.spec.n_outputs:
        raise ValueError(f"labels have {y.shape[0]} classes, network outputs {params.spec.n_outputs}")
    logits, _ = forward(params, x)
    return batch_softmax_cross_entropy(logits, y)[0]


def classify(params, x):
    """Predicted class index per input column (ties go to the lowest index)."""
    logits, _ = forward(params, x)
    return np.argmax(logits, axis=0)


def test_error(params, data):
    """Fraction of rows of ``data`` whose argmax prediction is wrong."""
    if len(data) == 0:
        return float("nan")
    x, _ = data.columns
    return float(np.mean(classify(params, x) != data.classes))


test_error.__test__ = False  # not a pytest test when imported into test modules


def to_dict(params):
    """Checkpoint schema: ``{"kind", "widths", "layers": [...]}``.

    Each entry of ``layers`` maps parameter names to ``{"shape", "values"}``
    with row-major flat values. FNN entries carry ``weight``/``bias``; ResNet
    entries are the entry map (``weight``), one ``w1``/``w2``/``bias`` entry
    per block, then the exit map (``weight``), each tagged with ``role``.
    """

    def enc(a):
        return {"shape": list(a.shape), "values": [float(v) for v in a.ravel()]}

    spec = params.spec
    if spec.kind == FNN:
        layers = [{"role": "dense", "weight": enc(l.weight), "bias": enc(l.bias)} for l in params.layers]
    else:
        layers = [{"role": "entry", "weight": enc(params.entry)}]
        layers += [
            {"role": "block", "w1": enc(b.w1), "w2": enc(b.w2), "bias": enc(b.bias)}
            for b in params.blocks
        ]
        layers.append({"role": "exit", "weight": enc(params.exit)})
    return {"kind": spec.kind, "widths": list(spec.widths), "layers": layers}


def from_dict(d):
    spec = NetworkSpec(d["kind"], tuple(d["widths"]))

    def dec(e):
        return np.array(e["values"], dtype=np.float64).reshape(e["shape"])

    tensors = []
    for entry in d["layers"]:
        names = ("w1", "w2", "bias") if entry.get("role") == "block" else ("weight", "bias")
        tensors += [dec(entry[n]) for n in names if n in entry]
    return ParamSet.from_tensors(spec, tensors)


def save_checkpoint(params, path):
    with open(path, "w") as fh:
        json.dump(to_dict(params), fh, indent=1)
        fh.write("\n")


def load_checkpoint(path):
    with open(path) as fh:
        return from_dict(json.load(fh))
