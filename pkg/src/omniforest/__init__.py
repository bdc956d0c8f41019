"""Lifelong learning with honest decision-forest representers.

The learner grows one forest representer per task and keeps a full matrix of
voters so every task's decisions ensemble every representation learned so
far, enabling both forward and backward transfer without ever mutating
previously fitted state.
"""

from .config import ConfigError, ExperimentConfig, config_from_dict, load_config
from .data import (
    DataError,
    TaskDataset,
    TaskSequence,
    load_csv,
    save_csv,
    split_train_test,
    subsample_indices,
)
from .environments import (
    SpiralSpec,
    XorSpec,
    generate_spirals,
    generate_xor,
    rotate_features,
    shuffle_labels,
)
from .experiments import ExperimentResult, ResultRow, run_experiment
from .forest import (
    ForestConfig,
    ForestRepresenter,
    Internal,
    Leaf,
    Tree,
    best_split,
    fit_representer,
    grow_tree,
)
from .learner import (
    HonestForestClassifier,
    OmniLearner,
    RecruitedTreesVoter,
    StrategyConfig,
    pool_datasets,
)
from .metrics import (
    ErrorEstimate,
    Ratio,
    TaskTransfer,
    TransferReport,
    backward_transfer,
    build_transfer,
    estimate_error,
    factorization_check,
    forward_transfer,
    spearman_correlation,
    transfer_efficiency,
)
from .seeding import SeedStream
from .serialize import SerializationError, load_model, save_model
from .voters import (
    KnnVoter,
    LeafVoter,
    fit_cross_task_voter,
    fit_in_task_voter,
    fit_knn_voter,
    knn_vote,
    vote,
)

__version__ = "0.1.0"
