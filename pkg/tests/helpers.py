"""Shared builders for trainer and acceptance tests."""

import numpy as np

from treeground.agent import TRAIN_STREAM, fresh_store, seed_stream
from treeground.encoder import EncoderConfig
from treeground.episodes import GenSpec, generate_dataset
from treeground.interval import EnvConfig
from treeground.rewards import RewardConfig
from treeground.training import (
    TrainConfig,
    combined_both_sides,
    compute_returns,
    loss_parts,
    rollout,
)


def tiny_setup(seed=0, n_episodes=2, t_max=3, batch_size=2):
    """Small but fully wired configuration for gradient and contract tests."""
    gen = GenSpec(
        n_clips=8, d_u=4, d_E=4, d_latent=2, noise_sigma=0.1,
        min_gt_width=2, max_gt_width=5, seed=seed,
    )
    env = EnvConfig(n_clips=8, delta_adj=0.25)
    enc = EncoderConfig(d_u=4, d_E=4, k_samples=4, d_state=8, d_hidden=8)
    reward = RewardConfig()
    train = TrainConfig(
        batch_size=batch_size, t_max=t_max, alternation_k=2,
        total_iterations=4, seed=seed,
    )
    episodes = generate_dataset(gen, n_episodes)
    store = fresh_store(enc, seed)
    rng = seed_stream(seed, TRAIN_STREAM)
    return episodes, store, env, enc, reward, train, rng


def frozen_loss_fn(episodes, store, env, enc, reward, train, seed=0, expression=None):
    """Deterministic full-loss closure for finite-difference checking.

    Actions are sampled once and frozen, as are the return targets (they
    are constants in the update), so the closure is a smooth function of
    the parameters.
    """
    rng = np.random.default_rng(seed)
    ref = rollout(episodes, store, env, enc, reward, train.t_max, rng=rng, mode="sample")
    forced = (ref.branches.copy(), ref.primitives.copy())
    ret_root, ret_leaf = compute_returns(ref, reward, "final")
    root_baseline = ref.root_v.copy()
    leaf_baseline = ref.leaf_v.copy()
    expression = expression or (lambda parts: combined_both_sides(parts, train.alignment_weight))

    def loss_fn():
        ro = rollout(
            episodes, store, env, enc, reward, train.t_max,
            mode="sample", forced_actions=forced,
        )
        parts = loss_parts(
            ro, ret_root, ret_leaf, train,
            root_baseline=root_baseline, leaf_baseline=leaf_baseline,
        )
        return expression(parts)

    return loss_fn
