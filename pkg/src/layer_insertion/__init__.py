"""Training small FNNs and ResNets that grow by one hidden layer mid-training.

The insertion position is picked by a first-order sensitivity (merit) of the
objective with respect to the parameters of identity-initialized candidate
layers.
"""

from .autograd import GradientSet, backprop, finite_diff_gradient
from .data import Dataset, generate_spirals, split_train_test
from .estimator import LayerInsertionClassifier
from .insertion import (
    CandidatePosition,
    MeritReport,
    Strategy,
    build_fully_extended,
    candidate_positions,
    compute_merits,
    compute_merits_minibatch,
    init_fnn_identity_layer,
    init_resnet_identity_block,
    insert_layer,
    select_and_insert,
)
from .network import (
    NetworkSpec,
    ParamSet,
    classify,
    forward,
    forward_fnn,
    forward_resnet,
    init_params,
    objective,
    param_count,
    test_error,
)
from .training import TrainConfig, TrainingDiverged, TrainingHistory, gd_step, train

__version__ = "0.1.0"
