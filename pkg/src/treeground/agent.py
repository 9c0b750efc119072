"""Agent assembly: parameter initialization and seed-stream derivation."""

from __future__ import annotations

import numpy as np

from .encoder import EncoderConfig, init_encoder_params
from .nn import ParamStore
from .policy import init_policy_params

# Distinct child streams of the global seed so data generation, parameter
# initialization and action sampling never share draws.
PARAM_STREAM = 0
TRAIN_STREAM = 1


def seed_stream(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, stream)))


def fresh_store(enc_cfg: EncoderConfig, seed: int) -> ParamStore:
    """Build and initialize every network parameter for one agent."""
    rng = seed_stream(seed, PARAM_STREAM)
    store = ParamStore()
    init_encoder_params(store, enc_cfg, rng)
    init_policy_params(store, enc_cfg.d_hidden, rng)
    return store
