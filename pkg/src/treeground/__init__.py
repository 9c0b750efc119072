"""Coarse-to-fine temporal interval grounding with a tree-structured policy.

An agent starts from a fixed initial interval inside a clip sequence and
iteratively edits it (scale, shift, adjust) to match a query embedding.
A two-level actor-critic policy picks a semantic branch then a primitive
edit; the two levels train alternately with task-oriented rewards, and a
supervised confidence head decides when to stop at test time.
"""

from .agent import fresh_store, seed_stream
from .autodiff import Tensor, concat, softmax
from .encoder import EncoderConfig, sample_interval_features
from .episodes import (
    Episode,
    GenSpec,
    generate_dataset,
    generate_episode,
    read_episodes,
    write_episodes,
)
from .errors import (
    CheckpointFormatError,
    ConfigError,
    ContractViolation,
    EpisodeFormatError,
    NumericError,
)
from .estimator import TemporalGrounder, validate_episodes
from .evaluation import compute_metrics, infer_batch, infer_episode
from .interval import (
    Boundary,
    Branch,
    EnvConfig,
    GroundTruth,
    PrimitiveAction,
    apply_action,
    enumerate_branch,
    initial_boundary,
    temporal_iou,
)
from .nn import ParamStore, finite_difference_check, softmax_categorical
from .rewards import RewardConfig, accumulate_returns, leaf_reward, root_reward
from .training import TrainConfig, psi_of, rollout, train_loop, train_step

__version__ = "0.1.0"

__all__ = [
    "Boundary",
    "Branch",
    "CheckpointFormatError",
    "ConfigError",
    "ContractViolation",
    "EncoderConfig",
    "EnvConfig",
    "Episode",
    "EpisodeFormatError",
    "GenSpec",
    "GroundTruth",
    "NumericError",
    "ParamStore",
    "PrimitiveAction",
    "RewardConfig",
    "TemporalGrounder",
    "Tensor",
    "TrainConfig",
    "accumulate_returns",
    "apply_action",
    "compute_metrics",
    "concat",
    "enumerate_branch",
    "finite_difference_check",
    "fresh_store",
    "generate_dataset",
    "generate_episode",
    "infer_batch",
    "infer_episode",
    "initial_boundary",
    "leaf_reward",
    "psi_of",
    "read_episodes",
    "rollout",
    "root_reward",
    "sample_interval_features",
    "seed_stream",
    "softmax",
    "softmax_categorical",
    "temporal_iou",
    "train_loop",
    "train_step",
    "validate_episodes",
    "write_episodes",
]
