"""Scikit-learn style estimator wrapping the full train/infer pipeline.

``fit`` trains the tree-structured agent on a list of episodes (or an
episode file path); ``predict`` returns one [start, end] interval per
episode; ``score`` is the mean clamped IoU in [0, 1]. All constructor
arguments are plain values so ``get_params``/``set_params``/``clone``
work as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .agent import TRAIN_STREAM, fresh_store, seed_stream
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .encoder import EncoderConfig
from .episodes import Episode, read_episodes
from .errors import ContractViolation
from .interval import EnvConfig
from .evaluation import build_report, compute_metrics, infer_batch
from .rewards import RewardConfig
from .training import TrainConfig, train_loop


def validate_episodes(X) -> list[Episode]:
    """Accept a path or a sequence of episodes; require consistent dims."""
    if isinstance(X, (str, bytes)) or hasattr(X, "__fspath__"):
        X = read_episodes(X)
    episodes = list(X)
    if not episodes:
        raise ContractViolation("need at least one episode")
    for ep in episodes:
        if not isinstance(ep, Episode):
            raise ContractViolation(f"expected Episode instances, got {type(ep).__name__}")
        ep.validate()
    n = episodes[0].n_clips
    d_u = episodes[0].unit_features.shape[1]
    d_e = episodes[0].query.shape[0]
    for ep in episodes:
        if (ep.n_clips, ep.unit_features.shape[1], ep.query.shape[0]) != (n, d_u, d_e):
            raise ContractViolation(
                f"episode {ep.episode_id!r} dims differ from the first episode"
            )
    return episodes


class TemporalGrounder(BaseEstimator):
    """Grounds a query to a temporal interval by iterative refinement."""

    def __init__(
        self,
        k_samples: int = 10,
        d_state: int = 128,
        d_hidden: int = 128,
        t_max: int = 10,
        batch_size: int = 8,
        iterations: int = 1000,
        alternation_k: int = 200,
        entropy_weight: float = 0.1,
        alignment_weight: float = 1.0,
        lr: float = 0.001,
        gamma: float = 0.4,
        zeta: float = 1.0,
        grad_clip: float | None = 5.0,
        bootstrap: str = "final",
        nu: float | None = None,
        delta_adj: float = 1.0,
        w_min: float = 1.0,
        seed: int = 0,
    ):
        self.k_samples = k_samples
        self.d_state = d_state
        self.d_hidden = d_hidden
        self.t_max = t_max
        self.batch_size = batch_size
        self.iterations = iterations
        self.alternation_k = alternation_k
        self.entropy_weight = entropy_weight
        self.alignment_weight = alignment_weight
        self.lr = lr
        self.gamma = gamma
        self.zeta = zeta
        self.grad_clip = grad_clip
        self.bootstrap = bootstrap
        self.nu = nu
        self.delta_adj = delta_adj
        self.w_min = w_min
        self.seed = seed

    # -- configuration assembly -------------------------------------------

    def _configs(self, episodes: list[Episode]):
        ep = episodes[0]
        env_cfg = EnvConfig(
            n_clips=ep.n_clips, nu=self.nu, delta_adj=self.delta_adj, w_min=self.w_min
        )
        enc_cfg = EncoderConfig(
            d_u=ep.unit_features.shape[1],
            d_E=ep.query.shape[0],
            k_samples=self.k_samples,
            d_state=self.d_state,
            d_hidden=self.d_hidden,
        )
        reward_cfg = RewardConfig(zeta=self.zeta, gamma=self.gamma)
        train_cfg = TrainConfig(
            batch_size=self.batch_size,
            t_max=self.t_max,
            alternation_k=self.alternation_k,
            entropy_weight=self.entropy_weight,
            alignment_weight=self.alignment_weight,
            lr=self.lr,
            total_iterations=self.iterations,
            seed=self.seed,
            grad_clip=self.grad_clip,
            bootstrap=self.bootstrap,
        )
        return env_cfg, enc_cfg, reward_cfg, train_cfg

    def _check_fitted(self):
        if not hasattr(self, "store_"):
            raise NotFittedError("this TemporalGrounder instance is not fitted yet")

    # -- estimator API -------------------------------------------------------

    def fit(self, X, y=None):
        episodes = validate_episodes(X)
        env_cfg, enc_cfg, reward_cfg, train_cfg = self._configs(episodes)
        store = fresh_store(enc_cfg, train_cfg.seed)
        rng = seed_stream(train_cfg.seed, TRAIN_STREAM)
        self.history_ = train_loop(
            episodes, store, env_cfg, enc_cfg, reward_cfg, train_cfg, rng
        )
        self.store_ = store
        self.env_cfg_ = env_cfg
        self.enc_cfg_ = enc_cfg
        self.reward_cfg_ = reward_cfg
        self.train_cfg_ = train_cfg
        self.n_iter_ = train_cfg.total_iterations
        return self

    def _infer(self, X):
        self._check_fitted()
        episodes = validate_episodes(X)
        return episodes, infer_batch(
            episodes, self.store_, self.env_cfg_, self.enc_cfg_, self.reward_cfg_,
            self.train_cfg_.t_max,
        )

    def predict(self, X) -> np.ndarray:
        """Predicted [start, end] in clip units, one row per episode."""
        _, results = self._infer(X)
        return np.array([[r.boundary.start, r.boundary.end] for r in results])

    def score(self, X, y=None) -> float:
        """Mean clamped IoU against the episodes' ground truth, in [0, 1]."""
        _, results = self._infer(X)
        return float(np.mean([max(r.terminal_iou, 0.0) for r in results]))

    def evaluate(self, X, thresholds=(0.3, 0.5, 0.7)) -> dict:
        """Full evaluation report (aggregates, branch analytics, per-episode)."""
        _, results = self._infer(X)
        return build_report(results, thresholds, self.train_cfg_.t_max)

    def metrics(self, X, thresholds=(0.3, 0.5, 0.7)) -> dict:
        _, results = self._infer(X)
        return compute_metrics([r.terminal_iou for r in results], thresholds)

    # -- persistence -----------------------------------------------------------

    def save(self, path):
        self._check_fitted()
        save_checkpoint(
            path,
            Checkpoint(
                store=self.store_,
                env_cfg=self.env_cfg_,
                enc_cfg=self.enc_cfg_,
                reward_cfg=self.reward_cfg_,
                train_cfg=self.train_cfg_,
                iteration=self.n_iter_,
                rng_state=None,
            ),
        )

    @classmethod
    def load(cls, path) -> "TemporalGrounder":
        ckpt = load_checkpoint(path)
        est = cls(
            k_samples=ckpt.enc_cfg.k_samples,
            d_state=ckpt.enc_cfg.d_state,
            d_hidden=ckpt.enc_cfg.d_hidden,
            t_max=ckpt.train_cfg.t_max,
            batch_size=ckpt.train_cfg.batch_size,
            iterations=ckpt.train_cfg.total_iterations,
            alternation_k=ckpt.train_cfg.alternation_k,
            entropy_weight=ckpt.train_cfg.entropy_weight,
            alignment_weight=ckpt.train_cfg.alignment_weight,
            lr=ckpt.train_cfg.lr,
            gamma=ckpt.reward_cfg.gamma,
            zeta=ckpt.reward_cfg.zeta,
            grad_clip=ckpt.train_cfg.grad_clip,
            bootstrap=ckpt.train_cfg.bootstrap,
            nu=ckpt.env_cfg.nu,
            delta_adj=ckpt.env_cfg.delta_adj,
            w_min=ckpt.env_cfg.w_min,
            seed=ckpt.train_cfg.seed,
        )
        est.store_ = ckpt.store
        est.env_cfg_ = ckpt.env_cfg
        est.enc_cfg_ = ckpt.enc_cfg
        est.reward_cfg_ = ckpt.reward_cfg
        est.train_cfg_ = ckpt.train_cfg
        est.history_ = []
        est.n_iter_ = ckpt.iteration
        return est
