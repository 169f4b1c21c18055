"""Gradient descent with an optional mid-training layer insertion."""

import logging
from dataclasses import dataclass, field

import numpy as np

from .autograd import backprop
from .insertion import (
    DEFAULT_W1_SCALE,
    Strategy,
    build_fully_extended,
    compute_merits,
    compute_merits_minibatch,
    select_and_insert,
)
from .network import NetworkSpec, ParamSet, init_params, objective, param_count, test_error
from .rng import stream

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    spec: NetworkSpec
    learning_rate: float = 0.2
    total_iterations: int = 1850
    insertion_iteration: int = None
    strategy: Strategy = None
    post_insertion_learning_rate: float = None
    seed: int = 0
    batch_size: int = None  # None means full-batch gradient descent
    w1_scale: float = DEFAULT_W1_SCALE

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy.parse(self.strategy))
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.post_insertion_learning_rate is not None and self.post_insertion_learning_rate <= 0:
            raise ValueError("post_insertion_learning_rate must be positive")
        if self.total_iterations < 0:
            raise ValueError("total_iterations must be nonnegative")
        if self.insertion_iteration is not None:
            if not 0 <= self.insertion_iteration < self.total_iterations:
                raise ValueError("insertion_iteration must lie in [0, total_iterations)")
            if self.strategy is None:
                object.__setattr__(self, "strategy", Strategy("LI"))
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def inserts(self):
        return self.insertion_iteration is not None


@dataclass
class Event:
    iteration: int
    event: str
    param_count: int
    position: int = None
    merits: list = None
    detail: dict = field(default_factory=dict)


@dataclass
class TrainingHistory:
    """Per-iteration records plus the event list of one run.

    ``train_loss[i]`` and ``test_error[i]`` describe the parameters after
    ``i`` updates, so there are ``total_iterations + 1`` records.
    """

    iterations: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    test_error: list = field(default_factory=list)
    events: list = field(default_factory=list)
    params: ParamSet = None
    merit_report: object = None

    def record(self, it, loss, err):
        self.iterations.append(it)
        self.train_loss.append(loss)
        self.test_error.append(err)


class TrainingDiverged(RuntimeError):
    """Raised when the loss becomes non-finite; carries the partial history."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


def gd_step(params, grads, lr):
    """One step ``theta - lr * grad``; returns a new parameter set."""
    if lr < 0:
        raise ValueError("learning rate must be nonnegative")
    p, g = params.tensors(), grads.tensors()
    if [t.shape for t in p] != [t.shape for t in g]:
        raise ValueError("gradient does not match parameter shapes")
    if lr == 0:
        return params
    return ParamSet.from_tensors(params.spec, [a - lr * b for a, b in zip(p, g)])


class _MiniBatches:
    """Contiguous slices of a per-epoch seeded permutation."""

    def __init__(self, data, batch_size, seed):
        self.data = data
        self.batch_size = min(batch_size, len(data))
        self.seed = seed
        self.epoch = -1
        self.queue = []

    def next(self):
        if not self.queue:
            self.epoch += 1
            perm = stream(self.seed, "sgd", self.epoch).permutation(len(self.data))
            self.queue = [
                self.data.subset(perm[s : s + self.batch_size])
                for s in range(0, len(self.data), self.batch_size)
            ]
        return self.queue.pop(0)


def train(config, train_data, test_data=None, params=None):
    """Run gradient descent according to ``config``.

    Parameters start from ``init_params(config.spec, config.seed)`` unless
    ``params`` is given. With an insertion configured, training stops after
    ``insertion_iteration`` updates, the merit of every candidate position is
    evaluated on ``train_data``, one identity layer is inserted per the
    strategy and training resumes (optionally with a new learning rate).
    """
    if params is None:
        params = init_params(config.spec, config.seed)
    elif params.spec != config.spec:
        raise ValueError("initial parameters do not match config.spec")
    hist = TrainingHistory()
    hist.events.append(Event(0, "start", param_count(params.spec), detail={"widths": list(params.spec.widths)}))
    lr = config.learning_rate
    batches = _MiniBatches(train_data, config.batch_size, config.seed) if config.batch_size else None

    def err(p):
        return test_error(p, test_data) if test_data is not None else float("nan")

    for it in range(config.total_iterations + 1):
        if batches is None:
            loss, grads = backprop(params, train_data)
        else:
            loss = objective(params, train_data)
        hist.record(it, loss, err(params))
        if not np.isfinite(loss):
            hist.params = params
            raise TrainingDiverged(f"non-finite loss {loss} at iteration {it}", hist)
        if it == config.total_iterations:
            break
        if config.inserts and it == config.insertion_iteration:
            params = _insert(config, params, train_data, hist, it, loss)
            if config.post_insertion_learning_rate is not None and config.post_insertion_learning_rate != lr:
                lr = config.post_insertion_learning_rate
                hist.events.append(Event(it, "lr_change", param_count(params.spec), detail={"learning_rate": lr}))
            if batches is None:
                loss, grads = backprop(params, train_data)
        if batches is not None:
            _, grads = backprop(params, batches.next())
        params = gd_step(params, grads, lr)
    hist.params = params
    return hist


def _insert(config, params, train_data, hist, it, loss_before):
    ext, mapping = build_fully_extended(params, config.w1_scale)
    if config.batch_size:
        report = compute_merits_minibatch(ext, mapping, train_data, min(config.batch_size, len(train_data)), config.strategy)
    else:
        report = compute_merits(ext, mapping, train_data, config.strategy)
    new_params = select_and_insert(params, report, config.w1_scale)
    loss_after = objective(new_params, train_data)
    log.debug("iteration %d: merits %s, inserting after hidden layer %d", it, report.merits, report.chosen.index)
    hist.merit_report = report
    hist.events.append(
        Event(
            it,
            "insert",
            param_count(new_params.spec),
            position=report.chosen.index,
            merits=list(report.merits),
            detail={
                "loss_before": loss_before,
                "loss_after": loss_after,
                "widths": list(new_params.spec.widths),
                "report": report.to_dict(),
            },
        )
    )
    return new_params
