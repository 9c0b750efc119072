"""Boundary-refinement environment: intervals, hierarchical actions, IoU.

The agent's hypothesis is a real-valued interval in clip units inside
[0, N].  Sixteen primitive actions are grouped into five semantic
branches; the branch/primitive ordering below is frozen because policy
logits index into it.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum


class Branch(IntEnum):
    SCALE = 0
    LEFT_SHIFT = 1
    RIGHT_SHIFT = 2
    LEFT_ADJUST = 3
    RIGHT_ADJUST = 4


BRANCH_NAMES = {
    Branch.SCALE: "scale-variation",
    Branch.LEFT_SHIFT: "marked-left-shift",
    Branch.RIGHT_SHIFT: "marked-right-shift",
    Branch.LEFT_ADJUST: "marginal-left-adjust",
    Branch.RIGHT_ADJUST: "marginal-right-adjust",
}

# Scale branch: width multiplied (extend) or divided (shrink) about the center.
SCALE_FACTORS = (1.2, 1.5, 1.0 / 1.2, 1.0 / 1.5)
SCALE_NAMES = ("extend-x1.2", "extend-x1.5", "shrink-x1.2", "shrink-x1.5")
# Shift/adjust branches: which endpoint(s) move.
MOVE_NAMES = ("move-start", "move-end", "move-both")

BRANCH_SIZES = (4, 3, 3, 3, 3)
NUM_PRIMITIVES = sum(BRANCH_SIZES)


@dataclass(frozen=True)
class Boundary:
    start: float
    end: float

    @property
    def width(self) -> float:
        return self.end - self.start

    @property
    def center(self) -> float:
        return 0.5 * (self.start + self.end)


@dataclass(frozen=True)
class GroundTruth:
    start: float
    end: float


@dataclass(frozen=True)
class PrimitiveAction:
    branch: Branch
    index: int

    def __post_init__(self):
        if not 0 <= self.index < BRANCH_SIZES[self.branch]:
            raise ValueError(f"primitive index {self.index} out of range for {self.branch}")

    @property
    def name(self) -> str:
        if self.branch == Branch.SCALE:
            return SCALE_NAMES[self.index]
        return MOVE_NAMES[self.index]


@dataclass(frozen=True)
class EnvConfig:
    """Geometry parameters. ``nu`` is the marked-shift step (N/10 unless
    overridden); ``delta_adj`` the marginal-adjust step in clip units."""

    n_clips: int
    nu: float | None = None
    delta_adj: float = 1.0
    w_min: float = 1.0

    def __post_init__(self):
        if self.nu is None:
            object.__setattr__(self, "nu", self.n_clips / 10.0)
        if self.n_clips < 1:
            raise ValueError("n_clips must be positive")
        if not 0.0 < self.delta_adj < self.nu < self.n_clips:
            raise ValueError(
                f"need 0 < delta_adj ({self.delta_adj}) < nu ({self.nu}) < N ({self.n_clips})"
            )
        if self.w_min < 1.0:
            raise ValueError("w_min must be >= 1 clip")


def validate_boundary(b: Boundary, cfg: EnvConfig):
    if not (0.0 <= b.start < b.end <= cfg.n_clips):
        raise ValueError(f"boundary {b} outside [0, {cfg.n_clips}]")
    if b.width < cfg.w_min - 1e-12:
        raise ValueError(f"boundary {b} narrower than w_min={cfg.w_min}")


def initial_boundary(cfg: EnvConfig) -> Boundary:
    n = cfg.n_clips
    return Boundary(n / 4.0, 3.0 * n / 4.0)


def enumerate_branch(branch: Branch) -> list[PrimitiveAction]:
    return [PrimitiveAction(branch, i) for i in range(BRANCH_SIZES[branch])]


def all_actions() -> list[PrimitiveAction]:
    return [a for branch in Branch for a in enumerate_branch(branch)]


def temporal_iou(b: Boundary, g: GroundTruth) -> float:
    """Signed intersection-over-union; negative when the intervals are
    disjoint (the reward case tables rely on the sign)."""
    return (min(g.end, b.end) - max(g.start, b.start)) / (
        max(g.end, b.end) - min(g.start, b.start)
    )


def _move_endpoints(b: Boundary, delta: float, which: int, cfg: EnvConfig) -> Boundary:
    n = float(cfg.n_clips)
    if which == 2:
        # Rigid translation clamped to the feasible range: width is preserved.
        delta = min(max(delta, -b.start), n - b.end)
        return Boundary(b.start + delta, b.end + delta)
    if which == 0:
        start = min(max(b.start + delta, 0.0), n)
        if b.end - start < cfg.w_min:
            start = b.end - cfg.w_min
        return Boundary(start, b.end)
    end = min(max(b.end + delta, 0.0), n)
    if end - b.start < cfg.w_min:
        end = b.start + cfg.w_min
    return Boundary(b.start, end)


def _scale(b: Boundary, factor: float, cfg: EnvConfig) -> Boundary:
    n = float(cfg.n_clips)
    width = min(max(b.width * factor, cfg.w_min), n)
    start = b.center - 0.5 * width
    end = b.center + 0.5 * width
    # Translate minimally back into [0, N]; width <= N keeps this feasible.
    if start < 0.0:
        end -= start
        start = 0.0
    elif end > n:
        start -= end - n
        end = n
    return Boundary(start, end)


def apply_action(b: Boundary, action: PrimitiveAction, cfg: EnvConfig) -> Boundary:
    """Transition function: pure, total (clamping), preserves validity."""
    if action.branch == Branch.SCALE:
        return _scale(b, SCALE_FACTORS[action.index], cfg)
    if action.branch == Branch.LEFT_SHIFT:
        return _move_endpoints(b, -cfg.nu, action.index, cfg)
    if action.branch == Branch.RIGHT_SHIFT:
        return _move_endpoints(b, cfg.nu, action.index, cfg)
    if action.branch == Branch.LEFT_ADJUST:
        return _move_endpoints(b, -cfg.delta_adj, action.index, cfg)
    return _move_endpoints(b, cfg.delta_adj, action.index, cfg)
