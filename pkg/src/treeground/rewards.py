"""Task-oriented rewards and discounted accumulated returns.

The leaf reward scores the executed primitive by the realized IoU change;
the root reward adds an intrinsic term comparing the chosen branch
against the best counterfactual branch (the IoU the greedy primitive of
each branch would have reached).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .interval import Boundary, EnvConfig, GroundTruth, PrimitiveAction, apply_action, temporal_iou


@dataclass(frozen=True)
class RewardConfig:
    zeta: float = 1.0
    gamma: float = 0.4
    iou_gate: float = 0.5
    tie_eps: float = 1e-9

    def __post_init__(self):
        if self.zeta <= 0.0 or not 0.0 < self.gamma < 1.0 or not 0.0 < self.iou_gate < 1.0:
            raise ContractViolation("need zeta > 0, 0 < gamma < 1, 0 < iou_gate < 1")


def leaf_reward(u_prev: float, u_curr: float, cfg: RewardConfig) -> float:
    """Case table over (previous IoU, current IoU):

    improved above the gate  -> zeta + u_curr
    improved below the gate  -> zeta
    no better but still >= 0 -> -zeta / 10
    otherwise (u_curr < 0)   -> -zeta
    """
    if u_curr > u_prev:
        return cfg.zeta + u_curr if u_curr > cfg.iou_gate else cfg.zeta
    if u_curr >= 0.0:
        return -cfg.zeta / 10.0
    return -cfg.zeta


def root_reward(u_prev: float, u_curr: float, u_max: float, cfg: RewardConfig) -> float:
    """Intrinsic branch-choice term plus extrinsic improvement term.

    ``u_max`` must dominate ``u_curr``: it is the best IoU over all
    branches, including the realized outcome of the selected branch.
    """
    if u_curr > u_max + cfg.tie_eps:
        raise ContractViolation(
            f"u_curr ({u_curr}) exceeds u_max ({u_max}); the branch oracle must "
            "include the realized IoU"
        )
    extrinsic = u_curr - u_prev
    if u_curr >= u_max - cfg.tie_eps:
        return cfg.zeta + extrinsic
    return (u_curr - u_max) + extrinsic


def compute_u_max(
    ground_truth: GroundTruth,
    boundary: Boundary,
    candidates: list[PrimitiveAction],
    env_cfg: EnvConfig,
) -> tuple[float, list[float]]:
    """IoU each candidate branch action would reach from ``boundary``.

    Side-effect free: candidates are applied to copies, the environment
    state is never advanced.
    """
    per_branch = [
        temporal_iou(apply_action(boundary, action, env_cfg), ground_truth)
        for action in candidates
    ]
    return max(per_branch), per_branch


def accumulate_returns(rewards, terminal_value: float, gamma: float) -> np.ndarray:
    """Backward recursion R_t = r_t + gamma * R_{t+1}, seeded at the final
    step with gamma * terminal_value (the critic's estimate there).

    ``rewards`` may be [T] with scalar terminal value or [T, batch] with a
    per-column terminal value.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    out = np.empty_like(rewards)
    acc = np.asarray(terminal_value, dtype=np.float64)
    for t in range(rewards.shape[0] - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out
