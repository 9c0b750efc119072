import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treeground.interval import (
    BRANCH_SIZES,
    Boundary,
    Branch,
    EnvConfig,
    GroundTruth,
    PrimitiveAction,
    all_actions,
    apply_action,
    enumerate_branch,
    initial_boundary,
    temporal_iou,
    validate_boundary,
)

CFG40 = EnvConfig(n_clips=40)


def boundaries(n_clips=40, w_min=1.0):
    """Random valid boundaries inside [0, n_clips]."""
    return (
        st.tuples(
            st.floats(0.0, n_clips - w_min, allow_nan=False, width=64),
            st.floats(w_min, n_clips, allow_nan=False, width=64),
        )
        .map(lambda t: Boundary(t[0], min(t[0] + t[1], float(n_clips))))
        .filter(lambda b: b.width >= w_min)
    )


def actions():
    return st.sampled_from(all_actions())


class TestInitialBoundary:
    def test_formula_quarters(self):
        b = initial_boundary(CFG40)
        assert (b.start, b.end) == (10.0, 30.0)

    def test_small_video(self):
        b = initial_boundary(EnvConfig(n_clips=4, delta_adj=0.2))
        assert (b.start, b.end) == (1.0, 3.0)

    def test_n32(self):
        b = initial_boundary(EnvConfig(n_clips=32))
        assert (b.start, b.end) == (8.0, 24.0)


class TestActionTables:
    def test_scale_branch_has_four_primitives(self):
        assert len(enumerate_branch(Branch.SCALE)) == 4

    def test_shift_branches_have_three(self):
        assert len(enumerate_branch(Branch.LEFT_SHIFT)) == 3
        assert len(enumerate_branch(Branch.RIGHT_SHIFT)) == 3

    def test_total_sixteen(self):
        assert len(all_actions()) == 16
        assert BRANCH_SIZES == (4, 3, 3, 3, 3)

    def test_primitive_index_bounds(self):
        with pytest.raises(ValueError):
            PrimitiveAction(Branch.LEFT_SHIFT, 3)


class TestApplyAction:
    def test_shift_both_moves_rigidly(self):
        b = apply_action(Boundary(10, 20), PrimitiveAction(Branch.RIGHT_SHIFT, 2), CFG40)
        assert (b.start, b.end) == (14.0, 24.0)

    def test_scale_extend_about_center(self):
        b = apply_action(Boundary(10, 20), PrimitiveAction(Branch.SCALE, 1), CFG40)
        assert (b.start, b.end) == (7.5, 22.5)

    def test_shift_both_clamped_at_edge(self):
        b = apply_action(Boundary(0, 10), PrimitiveAction(Branch.LEFT_SHIFT, 2), CFG40)
        assert (b.start, b.end) == (0.0, 10.0)

    def test_shrink_respects_minimum_width(self):
        b = apply_action(Boundary(10, 11), PrimitiveAction(Branch.SCALE, 3), CFG40)
        assert (b.start, b.end) == (10.0, 11.0)

    def test_adjust_moves_by_delta(self):
        b = apply_action(Boundary(10, 20), PrimitiveAction(Branch.RIGHT_ADJUST, 0), CFG40)
        assert (b.start, b.end) == (11.0, 20.0)

    def test_single_endpoint_clamp_pushes_back_to_w_min(self):
        # moving the start right past the end is pushed back to width w_min
        big_nu = EnvConfig(n_clips=40, nu=15.0)
        b = apply_action(Boundary(10, 12), PrimitiveAction(Branch.RIGHT_SHIFT, 0), big_nu)
        assert (b.start, b.end) == (11.0, 12.0)

    @given(boundaries(), actions())
    @settings(max_examples=500, deadline=None)
    def test_totality(self, b, action):
        out = apply_action(b, action, CFG40)
        validate_boundary(out, CFG40)

    @given(boundaries())
    @settings(max_examples=200, deadline=None)
    def test_shift_both_preserves_width(self, b):
        for branch in (Branch.LEFT_SHIFT, Branch.RIGHT_SHIFT, Branch.LEFT_ADJUST, Branch.RIGHT_ADJUST):
            out = apply_action(b, PrimitiveAction(branch, 2), CFG40)
            assert out.width == pytest.approx(b.width, abs=1e-9)

    @given(boundaries())
    @settings(max_examples=200, deadline=None)
    def test_scale_preserves_center_if_unclamped(self, b):
        for idx in range(4):
            out = apply_action(b, PrimitiveAction(Branch.SCALE, idx), CFG40)
            if 0.0 < out.start and out.end < 40.0 and out.width > 1.0:
                assert abs(out.center - b.center) < 1e-12

    @given(boundaries(), st.integers(0, 2))
    @settings(max_examples=300, deadline=None)
    def test_left_right_mirror_symmetry(self, b, k):
        """Reflecting about N/2 swaps the roles of the two endpoints, so the
        left-shift of endpoint e mirrors the right-shift of the other one."""
        n = 40.0
        mirror = Boundary(n - b.end, n - b.start)
        mirror_k = {0: 1, 1: 0, 2: 2}[k]
        left = apply_action(b, PrimitiveAction(Branch.LEFT_SHIFT, k), CFG40)
        right = apply_action(mirror, PrimitiveAction(Branch.RIGHT_SHIFT, mirror_k), CFG40)
        assert right.start == pytest.approx(n - left.end, abs=1e-9)
        assert right.end == pytest.approx(n - left.start, abs=1e-9)

    def test_idempotent_at_left_edge(self):
        b = Boundary(0.0, 10.0)
        action = PrimitiveAction(Branch.LEFT_SHIFT, 2)
        once = apply_action(b, action, CFG40)
        twice = apply_action(once, action, CFG40)
        assert (once.start, once.end) == (twice.start, twice.end)


def grid_iou(b: Boundary, g: GroundTruth, resolution=200_000) -> float:
    """Discrete overlap-counting oracle on a fine grid (positive IoU only)."""
    lo = min(b.start, g.start)
    hi = max(b.end, g.end)
    xs = np.linspace(lo, hi, resolution)
    inside_b = (xs >= b.start) & (xs <= b.end)
    inside_g = (xs >= g.start) & (xs <= g.end)
    return (inside_b & inside_g).sum() / (inside_b | inside_g).sum()


class TestTemporalIoU:
    def test_identical_intervals(self):
        assert temporal_iou(Boundary(4, 8), GroundTruth(4, 8)) == 1.0

    def test_partial_overlap_matches_grid_oracle(self):
        b, g = Boundary(2, 6), GroundTruth(4, 8)
        assert temporal_iou(b, g) == pytest.approx(1.0 / 3.0, abs=1e-12)
        assert temporal_iou(b, g) == pytest.approx(grid_iou(b, g), abs=1e-4)

    def test_disjoint_is_negative(self):
        assert temporal_iou(Boundary(0, 2), GroundTruth(6, 8)) == pytest.approx(-0.5)

    @given(boundaries(), boundaries())
    @settings(max_examples=300, deadline=None)
    def test_symmetry_and_bounds(self, b1, b2):
        g = GroundTruth(b2.start, b2.end)
        u = temporal_iou(b1, g)
        u_swapped = temporal_iou(b2, GroundTruth(b1.start, b1.end))
        assert u == pytest.approx(u_swapped, abs=1e-12)
        assert u <= 1.0
        overlaps = min(b1.end, b2.end) > max(b1.start, b2.start)
        assert (u > 0) == overlaps

    @given(boundaries())
    @settings(max_examples=100, deadline=None)
    def test_equals_one_iff_identical(self, b):
        assert temporal_iou(b, GroundTruth(b.start, b.end)) == pytest.approx(1.0)
        shifted = GroundTruth(b.start + 0.25, b.end + 0.25)
        if shifted.end <= 40.0:
            assert temporal_iou(b, shifted) < 1.0


class TestEnvConfig:
    def test_nu_defaults_to_tenth(self):
        assert EnvConfig(n_clips=40).nu == 4.0

    def test_step_ordering_enforced(self):
        with pytest.raises(ValueError):
            EnvConfig(n_clips=40, delta_adj=5.0)  # delta_adj >= nu

    def test_w_min_floor(self):
        with pytest.raises(ValueError):
            EnvConfig(n_clips=40, w_min=0.5)
