"""Test-time inference and evaluation metrics.

Inference runs the full greedy horizon, then stops retroactively at the
step whose alignment confidence is highest: the boundary *before* that
step is the prediction (the confidence at step t scores the boundary the
state encodes, which is the one reached after t-1 actions).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import EncoderConfig
from .episodes import Episode
from .errors import ContractViolation
from .interval import BRANCH_NAMES, Boundary, Branch, EnvConfig
from .nn import ParamStore
from .rewards import RewardConfig
from .training import BatchRollout, Trajectory, rollout, trajectories

IOU_BUCKET_WIDTH = 0.05
NUM_IOU_BUCKETS = 20


@dataclass
class EpisodeResult:
    episode_id: str
    boundary: Boundary
    stop_step: int          # 1-based argmax step t*; boundary is after t*-1 actions
    terminal_iou: float     # signed IoU of the returned boundary
    full_horizon_iou: float # signed IoU if the agent never stopped early
    trajectory: Trajectory


def stop_steps(align_logits: np.ndarray) -> np.ndarray:
    """1-based argmax of the stop confidence per column; first occurrence
    wins ties, biasing toward fewer steps."""
    sigma = 1.0 / (1.0 + np.exp(-align_logits))  # [T, M]
    return np.argmax(sigma, axis=0) + 1


def infer_batch(
    episodes: list[Episode],
    store: ParamStore,
    env_cfg: EnvConfig,
    enc_cfg: EncoderConfig,
    reward_cfg: RewardConfig,
    t_max: int,
) -> list[EpisodeResult]:
    """Greedy rollout plus alignment-selected stopping for many episodes."""
    ro = rollout(episodes, store, env_cfg, enc_cfg, reward_cfg, t_max, mode="greedy")
    trajs = trajectories(ro)
    stops = stop_steps(ro.align_logits)
    results = []
    for i, ep in enumerate(episodes):
        t_star = int(stops[i])
        chosen = ro.boundaries[t_star - 1, i]
        results.append(
            EpisodeResult(
                episode_id=ep.episode_id,
                boundary=Boundary(float(chosen[0]), float(chosen[1])),
                stop_step=t_star,
                terminal_iou=float(ro.u[t_star - 1, i]),
                full_horizon_iou=float(ro.u[-1, i]),
                trajectory=trajs[i],
            )
        )
    return results


def infer_episode(
    episode: Episode,
    store: ParamStore,
    env_cfg: EnvConfig,
    enc_cfg: EncoderConfig,
    reward_cfg: RewardConfig,
    t_max: int,
):
    """Single-episode inference: (boundary, stop step, trajectory)."""
    result = infer_batch([episode], store, env_cfg, enc_cfg, reward_cfg, t_max)[0]
    return result.boundary, result.stop_step, result.trajectory


def compute_metrics(ious, thresholds) -> dict:
    """IoU@eps (strict 'larger than', in %) and MIoU (negative IoU counts
    as zero overlap in the headline number; the signed values stay in the
    per-episode results)."""
    ious = np.asarray(list(ious), dtype=np.float64)
    if ious.size == 0:
        raise ContractViolation("compute_metrics needs at least one result")
    return {
        "iou_at": {f"{eps:g}": 100.0 * float(np.mean(ious > eps)) for eps in thresholds},
        "miou": 100.0 * float(np.mean(np.clip(ious, 0.0, None))),
        "mean_signed_iou": 100.0 * float(np.mean(ious)),
        "count": int(ious.size),
    }


def branch_proportions(trajs: list[Trajectory], t_max: int):
    """Column-normalized branch-selection frequencies.

    Returns (by_step [5, t_max], by_iou [5, 20], visits_by_iou [20]).
    Steps are bucketed by the IoU the decision was made from (the
    pre-action IoU), clamped into [0, 1] at 0.05 granularity.
    """
    by_step = np.zeros((len(Branch), t_max))
    by_iou = np.zeros((len(Branch), NUM_IOU_BUCKETS))
    for traj in trajs:
        u_prev = traj.u0
        for t, step in enumerate(traj.steps):
            by_step[step.branch, t] += 1.0
            bucket = min(int(np.clip(u_prev, 0.0, 1.0) / IOU_BUCKET_WIDTH), NUM_IOU_BUCKETS - 1)
            by_iou[step.branch, bucket] += 1.0
            u_prev = step.u
    visits = by_iou.sum(axis=0)
    with np.errstate(invalid="ignore"):
        by_step_norm = np.where(by_step.sum(axis=0) > 0, by_step / by_step.sum(axis=0), 0.0)
        by_iou_norm = np.where(visits > 0, by_iou / visits, 0.0)
    return by_step_norm, by_iou_norm, visits


def build_report(
    results: list[EpisodeResult],
    thresholds,
    t_max: int,
    config_echo: dict | None = None,
) -> dict:
    """JSON-serializable evaluation report."""
    aggregates = compute_metrics([r.terminal_iou for r in results], thresholds)
    by_step, by_iou, visits = branch_proportions([r.trajectory for r in results], t_max)
    report = {
        "aggregates": {
            **aggregates,
            "mean_stop_step": float(np.mean([r.stop_step for r in results])),
            "full_horizon_miou": 100.0
            * float(np.mean([max(r.full_horizon_iou, 0.0) for r in results])),
        },
        "branch_proportions_by_step": by_step.tolist(),
        "branch_proportions_by_iou": by_iou.tolist(),
        "iou_bucket_visits": visits.tolist(),
        "episodes": [
            {
                "episode_id": r.episode_id,
                "boundary": [r.boundary.start, r.boundary.end],
                "stop_step": r.stop_step,
                "iou": r.terminal_iou,
                "full_horizon_iou": r.full_horizon_iou,
            }
            for r in results
        ],
    }
    if config_echo is not None:
        report["config"] = config_echo
    return report


def proportions_csv(matrix: np.ndarray, column_label: str) -> str:
    """One branch per row, one column per step/bucket."""
    header = "branch," + ",".join(f"{column_label}{j}" for j in range(matrix.shape[1]))
    lines = [header]
    for b in Branch:
        lines.append(BRANCH_NAMES[b] + "," + ",".join(f"{x:.6f}" for x in matrix[b]))
    return "\n".join(lines) + "\n"
