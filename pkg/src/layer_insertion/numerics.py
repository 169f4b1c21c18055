"""Dense linear algebra, activations and the classification loss.

Matrices are 2-D float64 numpy arrays. Vectors are column matrices (n x 1);
a batch of vectors is stored column-wise as an (n x batch) matrix.
"""

import numpy as np


def as_matrix(x):
    """Coerce ``x`` to a float64 2-D array; 1-D input becomes a column."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise ValueError(f"expected a vector or matrix, got array of shape {a.shape}")
    return a


def matmul(a, b):
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"matmul shape mismatch: ({a.shape[0]} x {a.shape[1]}) @ "
            f"({b.shape[0]} x {b.shape[1]})"
        )
    return a @ b


def relu(x):
    return np.maximum(x, 0.0)


def relu_derivative(x):
    # subgradient at the kink is taken as 0
    return (np.asarray(x) > 0.0).astype(np.float64)


def tanh_act(x):
    return np.tanh(x)


def tanh_derivative(x):
    t = np.tanh(x)
    return 1.0 - t * t


ACTIVATIONS = {
    "relu": (relu, relu_derivative),
    "tanh": (tanh_act, tanh_derivative),
}


def softmax(logits):
    """Column-wise softmax, shifted by the column max for stability."""
    z = as_matrix(logits)
    z = z - z.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def _check_one_hot(labels):
    ok = np.all((labels == 0.0) | (labels == 1.0), axis=0) & (labels.sum(axis=0) == 1.0)
    if not np.all(ok):
        raise ValueError("labels must be one-hot columns")


def softmax_cross_entropy(logits, label):
    """Loss and gradient w.r.t. the logits for a single sample.

    Returns ``(loss, dloss_dlogits)`` where the gradient is ``softmax - label``
    as a column vector.
    """
    z = as_matrix(logits)
    y = as_matrix(label)
    if z.shape != y.shape or z.shape[1] != 1:
        raise ValueError(f"logits {z.shape} and label {y.shape} must be equal-length vectors")
    loss, grad = batch_softmax_cross_entropy(z, y)
    return loss, grad


def batch_softmax_cross_entropy(logits, labels):
    """Mean cross entropy over the columns and its gradient.

    The gradient is with respect to each logit column of the *averaged*
    loss, i.e. ``(softmax - labels) / n``.
    """
    z = as_matrix(logits)
    y = as_matrix(labels)
    if z.shape != y.shape:
        raise ValueError(f"logits {z.shape} and labels {y.shape} differ in shape")
    _check_one_hot(y)
    n = z.shape[1]
    shifted = z - z.max(axis=0, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=0, keepdims=True))
    log_p = shifted - log_norm
    per_sample = -(log_p * y).sum(axis=0)
    loss = float(per_sample.sum() / n)
    grad = (np.exp(log_p) - y) / n
    return loss, grad
