"""Progressive training loop: rollouts, actor-critic losses, alternation.

One iteration rolls out a mini-batch of episodes with sampled actions,
computes task rewards and discounted returns online (frozen as constants
for the update), then takes one optimizer step on the side selected by
the alternation schedule. The encoder and the alignment head train every
iteration; the root and leaf actor-critic heads alternate every K
iterations, and the frozen side is left out of the update entirely so it
stays bitwise unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .encoder import (
    EncoderConfig,
    fuse_state,
    initial_hidden,
    recurrent_state,
    sample_interval_features,
)
from .episodes import Episode
from .errors import ContractViolation, NumericError
from .interval import (
    BRANCH_SIZES,
    Boundary,
    Branch,
    EnvConfig,
    PrimitiveAction,
    apply_action,
    initial_boundary,
    temporal_iou,
)
from .nn import ParamStore, clip_global_norm
from .policy import (
    NUM_BRANCHES,
    HeadOutputs,
    counterfactual_actions,
    forward_heads,
    select_branches,
    select_primitives,
)
from .rewards import RewardConfig, accumulate_returns, compute_u_max, leaf_reward, root_reward

BOOTSTRAP_MODES = ("final", "successor", "none")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 8
    t_max: int = 10
    alternation_k: int = 200
    entropy_weight: float = 0.1
    alignment_weight: float = 1.0
    lr: float = 0.001
    total_iterations: int = 1000
    seed: int = 0
    grad_clip: float | None = 5.0
    bootstrap: str = "final"
    checkpoint_every: int = 0

    def __post_init__(self):
        if min(self.batch_size, self.t_max, self.alternation_k, self.total_iterations) < 1:
            raise ContractViolation("batch_size, t_max, alternation_k, iterations must be >= 1")
        if self.lr <= 0.0:
            raise ContractViolation("lr must be positive")
        if self.bootstrap not in BOOTSTRAP_MODES:
            raise ContractViolation(f"bootstrap must be one of {BOOTSTRAP_MODES}")


def psi_of(iteration: int, alternation_k: int) -> int:
    """Alternation indicator: 0 trains the leaf side, 1 the root side."""
    return (iteration // alternation_k) % 2


@dataclass
class StepRecord:
    state: np.ndarray
    root_probs: np.ndarray
    branch: int
    root_log_prob: float
    root_entropy: float
    leaf_probs: np.ndarray
    primitive: int
    leaf_log_prob: float
    leaf_entropy: float
    root_value: float
    leaf_value: float
    align_logit: float
    boundary: tuple[float, float]
    u: float
    u_max: float
    per_branch_u: np.ndarray
    reward_root: float
    reward_leaf: float


@dataclass
class Trajectory:
    episode_id: str
    initial: tuple[float, float]
    u0: float
    steps: list[StepRecord] = field(default_factory=list)


@dataclass
class BatchRollout:
    """One batched interaction pass; taped activations plus plain-array
    records of everything the losses and diagnostics need."""

    episodes: list[Episode]
    mode: str
    heads: list[HeadOutputs]          # length T, taped
    hiddens: list[Tensor]             # length T, taped recurrent states
    branches: np.ndarray              # [T, M]
    primitives: np.ndarray            # [T, M]
    boundaries: np.ndarray            # [T+1, M, 2]
    u: np.ndarray                     # [T+1, M]; u[0] is the initial IoU
    u_max: np.ndarray                 # [T, M]
    per_branch_u: np.ndarray          # [T, M, 5]
    r_root: np.ndarray                # [T, M]
    r_leaf: np.ndarray                # [T, M]
    root_v: np.ndarray                # [T, M] critic values (constants)
    leaf_v: np.ndarray                # [T, M] selected-branch critic values
    align_logits: np.ndarray          # [T, M]
    succ_root_v: np.ndarray | None    # [M] successor-state values, if computed
    succ_leaf_v: np.ndarray | None

    @property
    def t_max(self) -> int:
        return len(self.heads)

    @property
    def batch(self) -> int:
        return len(self.episodes)


def _batch_inputs(episodes, boundaries, enc_cfg, env_cfg):
    k = enc_cfg.k_samples
    n = float(env_cfg.n_clips)
    v_curr = np.stack(
        [sample_interval_features(ep.unit_features, b, k) for ep, b in zip(episodes, boundaries)]
    )
    l_prev = np.array([[b.start / n, b.end / n] for b in boundaries])
    return Tensor(v_curr), Tensor(l_prev)


def rollout(
    episodes: list[Episode],
    store: ParamStore,
    env_cfg: EnvConfig,
    enc_cfg: EncoderConfig,
    reward_cfg: RewardConfig,
    t_max: int,
    rng: np.random.Generator | None = None,
    mode: str = "sample",
    forced_actions: tuple[np.ndarray, np.ndarray] | None = None,
    bootstrap: str = "final",
) -> BatchRollout:
    """Run ``t_max`` policy steps on a batch of episodes.

    Episodes always run the full horizon (stopping is a test-time
    decision). Counterfactual branch IoUs are evaluated without touching
    the environment; reward computation includes the realized IoU in the
    branch oracle's max so the dominance contract holds under sampled
    actions.
    """
    m = len(episodes)
    if m == 0:
        raise ContractViolation("rollout needs at least one episode")
    for ep in episodes:
        if ep.n_clips != env_cfg.n_clips:
            raise ContractViolation(
                f"episode {ep.episode_id!r} has N={ep.n_clips}, config expects {env_cfg.n_clips}"
            )
    n = float(env_cfg.n_clips)
    k = enc_cfg.k_samples
    full = Boundary(0.0, n)
    v_global = Tensor(
        np.stack([sample_interval_features(ep.unit_features, full, k) for ep in episodes])
    )
    query = Tensor(np.stack([ep.query for ep in episodes]))
    gts = [ep.ground_truth for ep in episodes]

    current = [initial_boundary(env_cfg) for _ in range(m)]
    boundaries = np.zeros((t_max + 1, m, 2))
    u = np.zeros((t_max + 1, m))
    boundaries[0] = [[b.start, b.end] for b in current]
    u[0] = [temporal_iou(b, g) for b, g in zip(current, gts)]

    heads_seq: list[HeadOutputs] = []
    hiddens: list[Tensor] = []
    branches = np.zeros((t_max, m), dtype=int)
    primitives = np.zeros((t_max, m), dtype=int)
    u_max = np.zeros((t_max, m))
    per_branch_u = np.zeros((t_max, m, NUM_BRANCHES))
    r_root = np.zeros((t_max, m))
    r_leaf = np.zeros((t_max, m))
    root_v = np.zeros((t_max, m))
    leaf_v = np.zeros((t_max, m))
    align_logits = np.zeros((t_max, m))

    hidden = initial_hidden(m, enc_cfg)
    for t in range(t_max):
        v_curr, l_prev = _batch_inputs(episodes, current, enc_cfg, env_cfg)
        pre = fuse_state(v_global, v_curr, l_prev, query, store)
        hidden = recurrent_state(pre, hidden, store)
        heads = forward_heads(hidden, store)
        heads_seq.append(heads)
        hiddens.append(hidden)

        if forced_actions is not None:
            b_t = np.asarray(forced_actions[0][t], dtype=int)
            p_t = np.asarray(forced_actions[1][t], dtype=int)
        else:
            b_t = select_branches(heads, mode, rng)
            p_t = select_primitives(heads, b_t, mode, rng)
        branches[t] = b_t
        primitives[t] = p_t

        for i in range(m):
            branch = Branch(int(b_t[i]))
            action = PrimitiveAction(branch, int(p_t[i]))
            candidates = counterfactual_actions(heads, row=i)
            cf_max, cf_all = compute_u_max(gts[i], current[i], candidates, env_cfg)
            moved = apply_action(current[i], action, env_cfg)
            u_next = temporal_iou(moved, gts[i])
            # Sampled actions can beat every greedy counterfactual; the
            # realized IoU joins the max so dominance holds by construction.
            dominating = max(cf_max, u_next)
            r_leaf[t, i] = leaf_reward(u[t, i], u_next, reward_cfg)
            r_root[t, i] = root_reward(u[t, i], u_next, dominating, reward_cfg)
            u_max[t, i] = dominating
            per_branch_u[t, i] = cf_all
            current[i] = moved
            boundaries[t + 1, i] = (moved.start, moved.end)
            u[t + 1, i] = u_next

        root_v[t] = heads.root_value.data
        align_logits[t] = heads.align_logit.data
        for b in range(NUM_BRANCHES):
            rows = b_t == b
            if rows.any():
                leaf_v[t, rows] = heads.leaf_values[b].data[rows]

    succ_root_v = succ_leaf_v = None
    if bootstrap == "successor":
        v_curr, l_prev = _batch_inputs(episodes, current, enc_cfg, env_cfg)
        pre = fuse_state(v_global, v_curr, l_prev, query, store)
        succ_hidden = recurrent_state(pre, hidden, store)
        succ_heads = forward_heads(succ_hidden, store)
        succ_root_v = succ_heads.root_value.data.copy()
        greedy_branch = np.argmax(succ_heads.root.log_probs.data, axis=-1)
        succ_leaf_v = np.array(
            [float(succ_heads.leaf_values[b].data[i]) for i, b in enumerate(greedy_branch)]
        )

    return BatchRollout(
        episodes=episodes,
        mode=mode,
        heads=heads_seq,
        hiddens=hiddens,
        branches=branches,
        primitives=primitives,
        boundaries=boundaries,
        u=u,
        u_max=u_max,
        per_branch_u=per_branch_u,
        r_root=r_root,
        r_leaf=r_leaf,
        root_v=root_v,
        leaf_v=leaf_v,
        align_logits=align_logits,
        succ_root_v=succ_root_v,
        succ_leaf_v=succ_leaf_v,
    )


def trajectories(ro: BatchRollout) -> list[Trajectory]:
    """Per-episode step records, for traces and consistency checks."""
    out = []
    for i, ep in enumerate(ro.episodes):
        traj = Trajectory(
            episode_id=ep.episode_id,
            initial=tuple(ro.boundaries[0, i]),
            u0=float(ro.u[0, i]),
        )
        for t in range(ro.t_max):
            b = int(ro.branches[t, i])
            heads = ro.heads[t]
            traj.steps.append(
                StepRecord(
                    state=ro.hiddens[t].data[i].copy(),
                    root_probs=heads.root.probs.data[i].copy(),
                    branch=b,
                    root_log_prob=float(heads.root.log_probs.data[i, b]),
                    root_entropy=float(heads.root.entropy.data[i]),
                    leaf_probs=heads.leaf[b].probs.data[i].copy(),
                    primitive=int(ro.primitives[t, i]),
                    leaf_log_prob=float(heads.leaf[b].log_probs.data[i, ro.primitives[t, i]]),
                    leaf_entropy=float(heads.leaf[b].entropy.data[i]),
                    root_value=float(ro.root_v[t, i]),
                    leaf_value=float(ro.leaf_v[t, i]),
                    align_logit=float(ro.align_logits[t, i]),
                    boundary=tuple(ro.boundaries[t + 1, i]),
                    u=float(ro.u[t + 1, i]),
                    u_max=float(ro.u_max[t, i]),
                    per_branch_u=ro.per_branch_u[t, i].copy(),
                    reward_root=float(ro.r_root[t, i]),
                    reward_leaf=float(ro.r_leaf[t, i]),
                )
            )
        out.append(traj)
    return out


def compute_returns(ro: BatchRollout, reward_cfg: RewardConfig, bootstrap: str = "final"):
    """Discounted returns for both policy levels, as plain arrays.

    ``final`` seeds the recursion with the critic value of the last
    visited state (the published formula); ``successor`` uses the state
    reached after the last action; ``none`` uses zero.
    """
    if bootstrap == "final":
        tv_root, tv_leaf = ro.root_v[-1], ro.leaf_v[-1]
    elif bootstrap == "successor":
        if ro.succ_root_v is None:
            raise ContractViolation("rollout was not run with bootstrap='successor'")
        tv_root, tv_leaf = ro.succ_root_v, ro.succ_leaf_v
    elif bootstrap == "none":
        tv_root = tv_leaf = np.zeros(ro.batch)
    else:
        raise ContractViolation(f"bootstrap must be one of {BOOTSTRAP_MODES}")
    ret_root = accumulate_returns(ro.r_root, tv_root, reward_cfg.gamma)
    ret_leaf = accumulate_returns(ro.r_leaf, tv_leaf, reward_cfg.gamma)
    return ret_root, ret_leaf


def _root_selected(heads: HeadOutputs, branches_t: np.ndarray):
    m = branches_t.shape[0]
    onehot = np.zeros((m, NUM_BRANCHES))
    onehot[np.arange(m), branches_t] = 1.0
    log_prob = (heads.root.log_probs * onehot).sum(axis=-1)
    return log_prob, heads.root.entropy, heads.root_value


def _leaf_selected(heads: HeadOutputs, branches_t: np.ndarray, prims_t: np.ndarray):
    """Selected-branch quantities assembled with constant masks, so only the
    chosen sub-policy of each row receives gradient."""
    m = branches_t.shape[0]
    log_prob = entropy = value = None
    for b in range(NUM_BRANCHES):
        rows = branches_t == b
        if not rows.any():
            continue
        onehot = np.zeros((m, BRANCH_SIZES[b]))
        onehot[rows, prims_t[rows]] = 1.0
        mask = rows.astype(float)
        lp = (heads.leaf[b].log_probs * onehot).sum(axis=-1)
        en = heads.leaf[b].entropy * mask
        va = heads.leaf_values[b] * mask
        log_prob = lp if log_prob is None else log_prob + lp
        entropy = en if entropy is None else entropy + en
        value = va if value is None else value + va
    return log_prob, entropy, value


def policy_loss(
    ro: BatchRollout,
    returns: np.ndarray,
    which: str,
    cfg: TrainConfig,
    baseline: np.ndarray | None = None,
) -> Tensor:
    """-(1/M) sum_t [log pi(a_t) * (R_t - V) + alpha * H(pi)].

    Advantages are constants: no gradient flows into the critics from
    here. ``baseline`` defaults to the rollout's own critic values; the
    gradient checker passes the reference rollout's values explicitly so
    the advantage stays fixed under parameter perturbation.
    """
    total = None
    for t in range(ro.t_max):
        if which == "root":
            log_prob, entropy, _ = _root_selected(ro.heads[t], ro.branches[t])
            values = ro.root_v if baseline is None else baseline
        elif which == "leaf":
            log_prob, entropy, _ = _leaf_selected(ro.heads[t], ro.branches[t], ro.primitives[t])
            values = ro.leaf_v if baseline is None else baseline
        else:
            raise ContractViolation("which must be 'root' or 'leaf'")
        advantage = returns[t] - values[t]
        term = (log_prob * advantage + cfg.entropy_weight * entropy).sum()
        total = term if total is None else total + term
    return -(total / ro.batch)


def value_loss(ro: BatchRollout, returns: np.ndarray, which: str) -> Tensor:
    """(1/M) sum_t (R_t - V)^2 with the returns as constant targets."""
    total = None
    for t in range(ro.t_max):
        if which == "root":
            value = ro.heads[t].root_value
        elif which == "leaf":
            _, _, value = _leaf_selected(ro.heads[t], ro.branches[t], ro.primitives[t])
        else:
            raise ContractViolation("which must be 'root' or 'leaf'")
        term = (Tensor(returns[t]) - value).square().sum()
        total = term if total is None else total + term
    return total / ro.batch


def alignment_loss(ro: BatchRollout) -> Tensor:
    """Binary cross-entropy between the stop-confidence logit at step t and
    the IoU of the boundary that state encodes (clamped into [0, 1])."""
    total = None
    for t in range(ro.t_max):
        target = np.clip(ro.u[t], 0.0, 1.0)  # U_{t-1}: pre-action IoU
        logit = ro.heads[t].align_logit
        term = (logit.softplus() - logit * target).sum()
        total = term if total is None else total + term
    return total / ro.batch


def loss_parts(
    ro: BatchRollout,
    ret_root,
    ret_leaf,
    cfg: TrainConfig,
    root_baseline: np.ndarray | None = None,
    leaf_baseline: np.ndarray | None = None,
) -> dict[str, Tensor]:
    return {
        "root_policy": policy_loss(ro, ret_root, "root", cfg, baseline=root_baseline),
        "root_value": value_loss(ro, ret_root, "root"),
        "leaf_policy": policy_loss(ro, ret_leaf, "leaf", cfg, baseline=leaf_baseline),
        "leaf_value": value_loss(ro, ret_leaf, "leaf"),
        "align": alignment_loss(ro),
    }


def tree_loss(parts: dict[str, Tensor], psi: int) -> Tensor:
    return float(psi) * (parts["root_policy"] + parts["root_value"]) + float(1 - psi) * (
        parts["leaf_policy"] + parts["leaf_value"]
    )


def full_loss(parts: dict[str, Tensor], psi: int, alignment_weight: float) -> Tensor:
    return tree_loss(parts, psi) + alignment_weight * parts["align"]


def combined_both_sides(parts: dict[str, Tensor], alignment_weight: float) -> Tensor:
    """Every term at once (no alternation); used by the gradient checker."""
    return (
        parts["root_policy"]
        + parts["root_value"]
        + parts["leaf_policy"]
        + parts["leaf_value"]
        + alignment_weight * parts["align"]
    )


def trainable_names(store: ParamStore, psi: int) -> list[str]:
    """Encoder and alignment always train; the policy side alternates."""
    side = "root/" if psi == 1 else "leaf/"
    return [
        name
        for name in store.names()
        if name.startswith(("enc/", "align/")) or name.startswith(side)
    ]


def train_step(
    iteration: int,
    batch: list[Episode],
    store: ParamStore,
    env_cfg: EnvConfig,
    enc_cfg: EncoderConfig,
    reward_cfg: RewardConfig,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> dict:
    """One alternating-optimization iteration; returns a metrics record."""
    psi = psi_of(iteration, cfg.alternation_k)
    ro = rollout(
        batch,
        store,
        env_cfg,
        enc_cfg,
        reward_cfg,
        cfg.t_max,
        rng=rng,
        mode="sample",
        bootstrap=cfg.bootstrap,
    )
    ret_root, ret_leaf = compute_returns(ro, reward_cfg, cfg.bootstrap)
    parts = loss_parts(ro, ret_root, ret_leaf, cfg)
    loss = full_loss(parts, psi, cfg.alignment_weight)
    if not np.isfinite(loss.data):
        raise NumericError(
            f"non-finite loss at iteration {iteration}",
            diagnostics=_diagnostics(iteration, ro, parts),
        )
    store.zero_grad()
    loss.backward()
    names = trainable_names(store, psi)
    grads = store.gradients(names)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(
                f"non-finite gradient for {name!r} at iteration {iteration}",
                diagnostics=_diagnostics(iteration, ro, parts),
            )
    grad_norm = clip_global_norm(grads, cfg.grad_clip)
    store.adam_step(grads, cfg.lr, names=names)
    store.check_finite()

    return {
        "iteration": iteration,
        "psi": psi,
        "loss": float(loss.data),
        "loss_root_policy": float(parts["root_policy"].data),
        "loss_root_value": float(parts["root_value"].data),
        "loss_leaf_policy": float(parts["leaf_policy"].data),
        "loss_leaf_value": float(parts["leaf_value"].data),
        "loss_align": float(parts["align"].data),
        "grad_norm": float(grad_norm),
        "mean_reward_root": float(ro.r_root.mean()),
        "mean_reward_leaf": float(ro.r_leaf.mean()),
        "mean_terminal_iou": float(ro.u[-1].mean()),
        "branch_counts": np.bincount(ro.branches.ravel(), minlength=NUM_BRANCHES).tolist(),
    }


def _diagnostics(iteration: int, ro: BatchRollout, parts) -> dict:
    traj = trajectories(ro)[0]
    return {
        "iteration": iteration,
        "losses": {k: float(v.data) for k, v in parts.items()},
        "episode_id": traj.episode_id,
        "u0": traj.u0,
        "steps": [
            {
                "branch": s.branch,
                "primitive": s.primitive,
                "boundary": list(s.boundary),
                "u": s.u,
                "reward_root": s.reward_root,
                "reward_leaf": s.reward_leaf,
            }
            for s in traj.steps
        ],
    }


def train_loop(
    episodes: list[Episode],
    store: ParamStore,
    env_cfg: EnvConfig,
    enc_cfg: EncoderConfig,
    reward_cfg: RewardConfig,
    cfg: TrainConfig,
    rng: np.random.Generator,
    start_iteration: int = 0,
    on_metrics=None,
    on_checkpoint=None,
) -> list[dict]:
    """Run iterations ``start_iteration .. total_iterations-1``.

    ``on_metrics`` receives each record as it is produced; ``on_checkpoint``
    fires every ``checkpoint_every`` iterations (and at the end) with the
    current iteration number.
    """
    if len(episodes) == 0:
        raise ContractViolation("training needs at least one episode")
    records = []
    for i in range(start_iteration, cfg.total_iterations):
        idx = rng.choice(len(episodes), size=cfg.batch_size, replace=len(episodes) < cfg.batch_size)
        batch = [episodes[j] for j in idx]
        record = train_step(i, batch, store, env_cfg, enc_cfg, reward_cfg, cfg, rng)
        records.append(record)
        if on_metrics is not None:
            on_metrics(record)
        if on_checkpoint is not None and cfg.checkpoint_every > 0 and (i + 1) % cfg.checkpoint_every == 0:
            on_checkpoint(i + 1)
    if on_checkpoint is not None:
        on_checkpoint(cfg.total_iterations)
    return records
