"""Tree-structured policy: root branch head, per-branch leaf heads, values,
and the alignment (stop-confidence) head.

All heads are single linear layers over the recurrent state. Parameter
names are prefixed ``root/``, ``leaf/<i>/`` and ``align/`` so the
trainer can freeze one policy side by name.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .errors import ContractViolation
from .interval import BRANCH_SIZES, Branch, PrimitiveAction
from .nn import CategoricalStats, ParamStore, add_dense, categorical_stats, dense_from, sample_rows

NUM_BRANCHES = len(BRANCH_SIZES)


def init_policy_params(store: ParamStore, d_hidden: int, rng: np.random.Generator):
    add_dense(store, "root/pi", d_hidden, NUM_BRANCHES, rng)
    add_dense(store, "root/v", d_hidden, 1, rng)
    for b in range(NUM_BRANCHES):
        add_dense(store, f"leaf/{b}/pi", d_hidden, BRANCH_SIZES[b], rng)
        add_dense(store, f"leaf/{b}/v", d_hidden, 1, rng)
    add_dense(store, "align/c", d_hidden, 1, rng)


@dataclass
class HeadOutputs:
    """Taped head activations for a batch of states."""

    root: CategoricalStats          # over the 5 branches
    root_value: Tensor              # [batch]
    leaf: list[CategoricalStats]    # one per branch, over its primitives
    leaf_values: list[Tensor]       # [batch] each
    align_logit: Tensor             # [batch]


def forward_heads(state: Tensor, store: ParamStore) -> HeadOutputs:
    batch = state.shape[0]
    root = categorical_stats(dense_from(store, "root/pi", state))
    root_value = dense_from(store, "root/v", state).reshape(batch)
    leaf = []
    leaf_values = []
    for b in range(NUM_BRANCHES):
        leaf.append(categorical_stats(dense_from(store, f"leaf/{b}/pi", state)))
        leaf_values.append(dense_from(store, f"leaf/{b}/v", state).reshape(batch))
    align_logit = dense_from(store, "align/c", state).reshape(batch)
    return HeadOutputs(root, root_value, leaf, leaf_values, align_logit)


def select_branches(heads: HeadOutputs, mode: str, rng: np.random.Generator | None) -> np.ndarray:
    if mode == "greedy":
        return np.argmax(heads.root.log_probs.data, axis=-1)
    if mode == "sample":
        return sample_rows(heads.root.probs.data, rng)
    raise ContractViolation(f"unknown action mode {mode!r}")


def select_primitives(
    heads: HeadOutputs, branches: np.ndarray, mode: str, rng: np.random.Generator | None
) -> np.ndarray:
    """Pick one primitive index per row from the selected branch's sub-policy.

    One uniform draw per row regardless of branch keeps the rng stream
    independent of which branches were chosen.
    """
    batch = branches.shape[0]
    out = np.zeros(batch, dtype=int)
    if mode == "sample":
        u = rng.random(batch)
    for b in range(NUM_BRANCHES):
        rows = np.nonzero(branches == b)[0]
        if rows.size == 0:
            continue
        probs = heads.leaf[b].probs.data[rows]
        if mode == "greedy":
            out[rows] = np.argmax(probs, axis=-1)
        else:
            cdf = np.cumsum(probs, axis=-1)
            idx = (cdf < u[rows, None]).sum(axis=-1)
            out[rows] = np.minimum(idx, probs.shape[-1] - 1)
    return out


def act(state: Tensor, store: ParamStore, mode: str = "sample", rng=None):
    """Choose (branch, primitive) for a single state vector.

    Sampling draws the branch first, then a primitive from the selected
    sub-policy; greedy takes argmax at both levels. Diagnostics carry
    log-probs, entropies, values and the stop-confidence logit.
    """
    if state.data.ndim == 1:
        state = state.reshape(1, state.data.size)
    if mode == "sample" and rng is None:
        raise ContractViolation("sample mode needs an rng")
    heads = forward_heads(state, store)
    branch_idx = int(select_branches(heads, mode, rng)[0])
    prim_idx = int(select_primitives(heads, np.array([branch_idx]), mode, rng)[0])
    branch = Branch(branch_idx)
    diagnostics = {
        "root_log_prob": float(heads.root.log_probs.data[0, branch_idx]),
        "root_entropy": float(heads.root.entropy.data[0]),
        "leaf_log_prob": float(heads.leaf[branch_idx].log_probs.data[0, prim_idx]),
        "leaf_entropy": float(heads.leaf[branch_idx].entropy.data[0]),
        "root_value": float(heads.root_value.data[0]),
        "leaf_value": float(heads.leaf_values[branch_idx].data[0]),
        "align_logit": float(heads.align_logit.data[0]),
    }
    return branch, PrimitiveAction(branch, prim_idx), diagnostics


def counterfactual_actions(heads: HeadOutputs, row: int = 0) -> list[PrimitiveAction]:
    """Greedy primitive for every branch; feeds the branch-selection oracle.

    Read from plain arrays, never the tape: counterfactuals carry no
    gradient.
    """
    return [
        PrimitiveAction(Branch(b), int(np.argmax(heads.leaf[b].probs.data[row])))
        for b in range(NUM_BRANCHES)
    ]
