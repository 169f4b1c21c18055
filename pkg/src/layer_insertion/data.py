"""Labelled datasets, the two-spiral generator and train/test splitting."""

import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .rng import stream


@dataclass(frozen=True, eq=False)
class Dataset:
    """Features (N x d) and one-hot labels (N x c), one row per sample.

    ``roles`` optionally tags each row as ``"train"`` or ``"test"``.
    """

    features: np.ndarray
    labels: np.ndarray
    roles: tuple = field(default=None)

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.float64)
        if x.ndim != 2 or y.ndim != 2:
            raise ValueError("features and labels must be 2-D (rows are samples)")
        if x.shape[0] != y.shape[0]:
            raise ValueError(f"{x.shape[0]} feature rows but {y.shape[0]} label rows")
        if not np.all(np.isfinite(x)):
            raise ValueError("features must be finite")
        if y.size and not (np.all((y == 0.0) | (y == 1.0)) and np.all(y.sum(axis=1) == 1.0)):
            raise ValueError("labels must be one-hot rows")
        if self.roles is not None and len(self.roles) != x.shape[0]:
            raise ValueError("roles must tag every row")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    @property
    def n_classes(self):
        return self.labels.shape[1]

    @property
    def classes(self):
        return np.argmax(self.labels, axis=1)

    @cached_property
    def columns(self):
        """(features.T, labels.T) as contiguous column-per-sample matrices."""
        return np.ascontiguousarray(self.features.T), np.ascontiguousarray(self.labels.T)

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.intp)
        roles = None if self.roles is None else tuple(self.roles[i] for i in idx)
        return Dataset(self.features[idx], self.labels[idx], roles)

    def concat(self, other):
        if self.roles is None or other.roles is None:
            roles = None
        else:
            roles = tuple(self.roles) + tuple(other.roles)
        return Dataset(
            np.vstack([self.features, other.features]),
            np.vstack([self.labels, other.labels]),
            roles,
        )


def one_hot(classes, n_classes):
    classes = np.asarray(classes, dtype=np.intp)
    out = np.zeros((classes.shape[0], n_classes))
    out[np.arange(classes.shape[0]), classes] = 1.0
    return out


def generate_spirals(n_total=600, noise_std=0.05, turns=1.5, seed=0):
    """Two interleaved Archimedean spirals in the plane.

    For class ``c`` and a parameter ``t`` drawn uniformly from
    ``(0, 2*pi*turns]``, the point is ``r(t) * (cos(t + c*pi), sin(t + c*pi))``
    with ``r(t) = t / (2*pi*turns)`` (so radii lie in (0, 1]), plus isotropic
    Gaussian noise of standard deviation ``noise_std``. Rows are ordered
    class 0 first, then class 1.
    """
    if n_total % 2:
        raise ValueError("n_total must be even")
    if noise_std < 0:
        raise ValueError("noise_std must be nonnegative")
    rng = stream(seed, "data")
    n = n_total // 2
    t_max = 2.0 * np.pi * turns
    feats = []
    for c in (0, 1):
        t = t_max * (1.0 - rng.random(n))  # uniform on (0, t_max]
        r = t / t_max
        angle = t + c * np.pi
        pts = np.column_stack([r * np.cos(angle), r * np.sin(angle)])
        pts = pts + noise_std * rng.standard_normal((n, 2))
        feats.append(pts)
    labels = one_hot(np.repeat([0, 1], n), 2)
    return Dataset(np.vstack(feats), labels)


def split_train_test(data, n_train=450, seed=0):
    """Stratified, seeded train/test split.

    Each class contributes ``round(n_train * n_c / N)`` rows to the training
    set; the remaining rows form the test set. Both parts are returned in a
    seeded random order with their role tags set.
    """
    n = len(data)
    if not 0 < n_train < n:
        raise ValueError(f"n_train must lie in (0, {n}), got {n_train}")
    rng = stream(seed, "split")
    cls = data.classes
    train_idx, test_idx = [], []
    labels_present = np.unique(cls)
    counts = [int(np.sum(cls == c)) for c in labels_present]
    quotas = [int(round(n_train * k / n)) for k in counts]
    # fix rounding so quotas sum to n_train
    quotas[-1] += n_train - sum(quotas)
    for c, q in zip(labels_present, quotas):
        members = np.flatnonzero(cls == c)
        members = members[rng.permutation(members.shape[0])]
        train_idx.append(members[:q])
        test_idx.append(members[q:])
    train_idx = np.concatenate(train_idx)
    test_idx = np.concatenate(test_idx)
    train_idx = train_idx[rng.permutation(train_idx.shape[0])]
    test_idx = test_idx[rng.permutation(test_idx.shape[0])]
    train = data.subset(train_idx)
    test = data.subset(test_idx)
    train = Dataset(train.features, train.labels, ("train",) * len(train))
    test = Dataset(test.features, test.labels, ("test",) * len(test))
    return train, test


def save_dataset(path, train, test):
    """Write a split dataset as CSV: ``x0,...,label,role`` with 17 digits."""
    d = train.n_features
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{j}" for j in range(d)] + ["label", "role"])
        for part, role in ((train, "train"), (test, "test")):
            for row, c in zip(part.features, part.classes):
                w.writerow([f"{v:.17g}" for v in row] + [int(c), role])


def load_dataset(path, n_classes=2):
    """Inverse of :func:`save_dataset`; returns ``(train, test)``."""
    rows = {"train": ([], []), "test": ([], [])}
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        d = len(header) - 2
        for rec in r:
            feats, cls = rows[rec[-1]]
            feats.append([float(v) for v in rec[:d]])
            cls.append(int(rec[d]))
    out = []
    for role in ("train", "test"):
        feats, cls = rows[role]
        out.append(Dataset(np.array(feats, dtype=np.float64).reshape(-1, d), one_hot(cls, n_classes), (role,) * len(cls)))
    return tuple(out)
