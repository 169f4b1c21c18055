"""Reverse-mode gradients of the mean loss, and a finite-difference oracle."""

from dataclasses import dataclass

import numpy as np

from .network import FNN, HIDDEN_ACTIVATION, ParamSet, forward
from .numerics import ACTIVATIONS, batch_softmax_cross_entropy


@dataclass(frozen=True)
class GradientSet(ParamSet):
    """Gradients laid out exactly like the :class:`ParamSet` they belong to.

    ``batch_size`` is the number of samples the loss was averaged over.
    """

    batch_size: int = 0

    def norm(self):
        return float(np.sqrt(sum(np.sum(t * t) for t in self.tensors())))


def backprop(params, batch):
    """Mean cross-entropy loss over ``batch`` and its gradient.

    Returns ``(loss, GradientSet)``.
    """
    if len(batch) == 0:
        raise ValueError("cannot backpropagate an empty batch")
    x, y = batch.columns
    if y.shape[0] != params.spec.n_outputs:
        raise ValueError(f"labels have {y.shape[0]} classes, network outputs {params.spec.n_outputs}")
    logits, cache = forward(params, x)
    loss, delta = batch_softmax_cross_entropy(logits, y)
    if params.spec.kind == FNN:
        tensors = _backward_fnn(params, cache, delta)
    else:
        tensors = _backward_resnet(params, cache, delta)
    return loss, GradientSet.from_tensors(params.spec, tensors, batch_size=len(batch))


def _backward_fnn(params, cache, delta):
    # delta: d(mean loss)/d(pre-activation) of the current layer, per sample
    _, dact = ACTIVATIONS[HIDDEN_ACTIVATION[FNN]]
    pairs = []
    for k in range(len(params.layers) - 1, -1, -1):
        pairs.append((delta @ cache.states[k].T, delta.sum(axis=1, keepdims=True)))
        if k > 0:
            delta = (params.layers[k].weight.T @ delta) * dact(cache.pre[k - 1])
    return [t for pair in reversed(pairs) for t in pair]


def _backward_resnet(params, cache, delta):
    _, dact = ACTIVATIONS[HIDDEN_ACTIVATION[params.spec.kind]]
    n_blocks = len(params.blocks)
    exit_grad = delta @ cache.states[-2].T
    g = params.exit.T @ delta  # d/dx_L
    block_grads = []
    for j in range(n_blocks - 1, -1, -1):
        blk = params.blocks[j]
        x_in = cache.states[1 + j]
        d_w2 = g @ cache.act[j].T
        d_z = (blk.w2.T @ g) * dact(cache.pre[j])
        d_w1 = d_z @ x_in.T
        d_b = d_z.sum(axis=1, keepdims=True)
        block_grads.append([d_w1, d_w2, d_b])
        g = g + blk.w1.T @ d_z
    entry_grad = g @ cache.states[0].T
    tensors = [entry_grad]
    for bg in reversed(block_grads):
        tensors += bg
    tensors.append(exit_grad)
    return tensors


def _objective_extended(spec, tensors, x, y):
    # separate evaluation path in extended precision; keeps the oracle's
    # roundoff well below the central-difference signal at step 1e-6
    if spec.kind == FNN:
        for k in range(0, len(tensors), 2):
            x = tensors[k] @ x + tensors[k + 1]
            if k + 2 < len(tensors):
                x = np.maximum(x, 0)
    else:
        x = tensors[0] @ x
        for k in range(1, len(tensors) - 1, 3):
            w1, w2, b = tensors[k : k + 3]
            x = x + w2 @ np.tanh(w1 @ x + b)
        x = tensors[-1] @ x
    m = x.max(axis=0)
    lse = m + np.log(np.exp(x - m).sum(axis=0))
    return np.mean(lse - (x * y).sum(axis=0))


def finite_diff_gradient(params, batch, step=1e-6, scheme="central"):
    """Finite differences of the mean loss, one scalar parameter at a time.

    The objective is re-evaluated in ``np.longdouble`` so that roundoff does
    not swamp small gradient entries. ``scheme="backward"`` uses
    ``(f(theta) - f(theta - step)) / step``, the one-sided slope that agrees
    with the ``relu'(0) = 0`` convention for identity layers sitting on
    rectified zeros.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if scheme not in ("central", "backward"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if len(batch) == 0:
        raise ValueError("cannot differentiate over an empty batch")
    x, y = (np.asarray(a, dtype=np.longdouble) for a in batch.columns)
    tensors = [np.asarray(t, dtype=np.longdouble) for t in params.tensors()]
    h = np.longdouble(step)
    out = []
    for t in tensors:
        g = np.empty(t.shape)
        for idx in np.ndindex(t.shape):
            orig = t[idx]
            t[idx] = orig - h
            down = _objective_extended(params.spec, tensors, x, y)
            if scheme == "central":
                t[idx] = orig + h
                up = _objective_extended(params.spec, tensors, x, y)
                t[idx] = orig
                g[idx] = float((up - down) / (2 * h))
            else:
                t[idx] = orig
                g[idx] = float((_objective_extended(params.spec, tensors, x, y) - down) / h)
        out.append(g)
    return GradientSet.from_tensors(params.spec, out, batch_size=len(batch))


def kink_coordinates(params, batch, step=1e-6, tol=1e-6):
    """Flat mask of parameters whose finite difference may straddle a ReLU kink.

    A coordinate is flagged when perturbing it by ``+-step`` changes the sign
    pattern of any hidden pre-activation, or when any pre-activation already
    lies within ``tol`` of zero. Always all-False for tanh networks.
    """
    theta = params.flat()
    mask = np.zeros(theta.size, dtype=bool)
    if params.spec.kind != FNN:
        return mask
    x, _ = batch.columns

    def pattern(p):
        _, cache = forward(p, x)
        return [z > 0 for z in cache.pre[:-1]]

    _, cache = forward(params, x)
    if any(np.any(np.abs(z) < tol) for z in cache.pre[:-1]):
        mask[:] = True
        return mask
    base = pattern(params)
    for j in range(theta.size):
        for sgn in (1.0, -1.0):
            t = theta.copy()
            t[j] += sgn * step
            if any(np.any(a != b) for a, b in zip(pattern(params.with_flat(t)), base)):
                mask[j] = True
    return mask


def max_relative_error(analytic, numeric, mask=None, floor=1e-8):
    """Largest ``|a - n| / max(|a|, |n|)`` over coordinates with ``|a| > floor``."""
    a = analytic.flat() if isinstance(analytic, ParamSet) else np.ravel(analytic)
    n = numeric.flat() if isinstance(numeric, ParamSet) else np.ravel(numeric)
    keep = np.abs(a) > floor
    if mask is not None:
        keep &= ~mask
    if not np.any(keep):
        return 0.0
    return float(np.max(np.abs(a[keep] - n[keep]) / np.maximum(np.abs(a[keep]), np.abs(n[keep]))))

