"""scikit-learn compatible classifier around the layer-insertion trainer."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.preprocessing import LabelEncoder
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted, validate_data

from .data import Dataset, one_hot
from .insertion import DEFAULT_W1_SCALE
from .network import NetworkSpec, forward
from .numerics import softmax
from .training import TrainConfig, train


class LayerInsertionClassifier(ClassifierMixin, BaseEstimator):
    """Small FNN or ResNet trained by gradient descent that grows by one layer.

    Parameters
    ----------
    kind : {"fnn", "resnet"}
        ReLU feedforward network or tanh residual network.
    hidden_widths : tuple of int
        Widths of the hidden layers at the start of training. ResNets need
        equal widths and at least two hidden layers to admit an insertion.
    learning_rate : float
    post_insertion_learning_rate : float or None
        Learning rate after the insertion; ``None`` keeps ``learning_rate``.
    max_iter : int
        Total number of gradient steps.
    insertion_iteration : int or None
        Number of steps after which one layer is inserted; ``None`` trains
        the initial architecture throughout.
    strategy : {"LI", "LIother"} or "fixed:<k>"
        Placement rule: largest merit, smallest merit, or a fixed position.
    batch_size : int or None
        ``None`` for full-batch gradient descent, else mini-batch SGD.
    w1_scale : float
        Scale of the identity ``W1`` in new residual blocks.
    random_state : int
        Seed for parameter initialization and mini-batch shuffling.
    """

    def __init__(
        self,
        kind="fnn",
        hidden_widths=(5,),
        learning_rate=0.2,
        post_insertion_learning_rate=None,
        max_iter=1850,
        insertion_iteration=450,
        strategy="LI",
        batch_size=None,
        w1_scale=DEFAULT_W1_SCALE,
        random_state=0,
    ):
        self.kind = kind
        self.hidden_widths = hidden_widths
        self.learning_rate = learning_rate
        self.post_insertion_learning_rate = post_insertion_learning_rate
        self.max_iter = max_iter
        self.insertion_iteration = insertion_iteration
        self.strategy = strategy
        self.batch_size = batch_size
        self.w1_scale = w1_scale
        self.random_state = random_state

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=np.float64)
        check_classification_targets(y)
        self._label_encoder = LabelEncoder().fit(y)
        self.classes_ = self._label_encoder.classes_
        if len(self.classes_) < 2:
            raise ValueError(f"need at least two classes; got 1 class ({self.classes_[0]!r})")
        codes = self._label_encoder.transform(y)
        data = Dataset(X, one_hot(codes, len(self.classes_)))
        spec = NetworkSpec(self.kind, (X.shape[1], *self.hidden_widths, len(self.classes_)))
        config = TrainConfig(
            spec=spec,
            learning_rate=self.learning_rate,
            total_iterations=self.max_iter,
            insertion_iteration=self.insertion_iteration,
            strategy=self.strategy if self.insertion_iteration is not None else None,
            post_insertion_learning_rate=self.post_insertion_learning_rate,
            seed=int(self.random_state) if self.random_state is not None else 0,
            batch_size=self.batch_size,
            w1_scale=self.w1_scale,
        )
        self.history_ = train(config, data)
        self.params_ = self.history_.params
        self.merit_report_ = self.history_.merit_report
        self.loss_curve_ = list(self.history_.train_loss)
        self.n_iter_ = self.max_iter
        return self

    def _logits(self, X):
        check_is_fitted(self, "params_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return forward(self.params_, X.T)[0].T

    def decision_function(self, X):
        """Network outputs; for two classes the margin of ``classes_[1]``."""
        logits = self._logits(X)
        if logits.shape[1] == 2:
            return logits[:, 1] - logits[:, 0]
        return logits

    def predict_proba(self, X):
        return softmax(self._logits(X).T).T

    def predict(self, X):
        idx = np.argmax(self._logits(X), axis=1)
        return self.classes_[idx]
