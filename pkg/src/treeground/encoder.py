"""State encoder: interval feature sampling, gated query fusion, recurrence.

The per-step state seen by the policy is built from four pieces: global
video features (fixed per episode), features sampled inside the current
boundary, the normalized boundary itself, and the query embedding. Each
stream is gated by a sigmoid projection of the query, concatenated,
projected through a tanh dense layer and passed through a GRU whose
hidden state is reset to zeros at the start of every episode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, concat
from .errors import ContractViolation
from .interval import Boundary
from .nn import ParamStore, add_dense, add_gru, dense_from, gru_step


@dataclass(frozen=True)
class EncoderConfig:
    d_u: int
    d_E: int
    k_samples: int = 10
    d_state: int = 128
    d_hidden: int = 128

    def __post_init__(self):
        if self.k_samples < 2:
            raise ContractViolation("k_samples must be >= 2")
        if min(self.d_u, self.d_E, self.d_state, self.d_hidden) < 1:
            raise ContractViolation("encoder dimensions must be positive")

    @property
    def d_video(self) -> int:
        return self.k_samples * self.d_u

    @property
    def d_fused(self) -> int:
        # gated global + gated current + gated normalized boundary
        return 2 * self.d_video + 2


def init_encoder_params(store: ParamStore, cfg: EncoderConfig, rng: np.random.Generator):
    add_dense(store, "enc/gate_global", cfg.d_E, cfg.d_video, rng)
    add_dense(store, "enc/gate_current", cfg.d_E, cfg.d_video, rng)
    add_dense(store, "enc/gate_boundary", cfg.d_E, 2, rng)
    add_dense(store, "enc/fc", cfg.d_fused, cfg.d_state, rng)
    add_gru(store, "enc/gru", cfg.d_state, cfg.d_hidden, rng)


def sample_indices(boundary: Boundary, k: int, n_clips: int) -> np.ndarray:
    """Midpoints of k equal sub-intervals of the boundary, floored to clip
    indices. Piecewise-constant in the boundary, so no gradient flows here."""
    j = np.arange(k)
    positions = boundary.start + (j + 0.5) * boundary.width / k
    return np.clip(np.floor(positions).astype(int), 0, n_clips - 1)


def sample_interval_features(unit_features: np.ndarray, boundary: Boundary, k: int) -> np.ndarray:
    """Concatenate k uniformly sampled unit-feature rows into one vector."""
    idx = sample_indices(boundary, k, unit_features.shape[0])
    return unit_features[idx].reshape(-1)


def fuse_state(
    v_global: Tensor,
    v_current: Tensor,
    l_prev: Tensor,
    query: Tensor,
    store: ParamStore,
) -> Tensor:
    """Gated-attention fusion followed by the tanh projection.

    Each stream is multiplied elementwise by a sigmoid gate computed from
    the query (the boundary stream has its own 2-dim gate); ``l_prev`` is
    the boundary normalized by N into [0, 1]^2.
    """
    if v_global.shape != v_current.shape:
        raise ContractViolation(
            f"global/current video features disagree: {v_global.shape} vs {v_current.shape}"
        )
    gate_g = dense_from(store, "enc/gate_global", query).sigmoid()
    gate_c = dense_from(store, "enc/gate_current", query).sigmoid()
    gate_l = dense_from(store, "enc/gate_boundary", query).sigmoid()
    fused = concat([gate_g * v_global, gate_c * v_current, gate_l * l_prev], axis=-1)
    return dense_from(store, "enc/fc", fused).tanh()


def recurrent_state(pre_state: Tensor, hidden: Tensor, store: ParamStore) -> Tensor:
    """One GRU step; the output doubles as the next hidden state."""
    return gru_step(pre_state, hidden, store, "enc/gru")


def initial_hidden(batch: int, cfg: EncoderConfig) -> Tensor:
    return Tensor(np.zeros((batch, cfg.d_hidden)))
