import numpy as np
import pytest

from treeground.autodiff import Tensor
from treeground.encoder import (
    EncoderConfig,
    fuse_state,
    init_encoder_params,
    initial_hidden,
    recurrent_state,
    sample_indices,
    sample_interval_features,
)
from treeground.errors import ContractViolation
from treeground.interval import Boundary
from treeground.nn import ParamStore, finite_difference_check

CFG = EncoderConfig(d_u=3, d_E=4, k_samples=5, d_state=6, d_hidden=6)


def make_store(cfg=CFG, seed=0) -> ParamStore:
    store = ParamStore()
    init_encoder_params(store, cfg, np.random.default_rng(seed))
    return store


class TestSampling:
    def test_full_boundary_visits_every_clip_once(self):
        feats = np.arange(10 * 2, dtype=float).reshape(10, 2)
        out = sample_interval_features(feats, Boundary(0, 10), k=10)
        np.testing.assert_array_equal(out, feats.reshape(-1))

    def test_two_clip_window_splits_samples_evenly(self):
        idx = sample_indices(Boundary(4, 6), k=10, n_clips=40)
        np.testing.assert_array_equal(idx, [4] * 5 + [5] * 5)

    def test_minimum_width_repeats_single_clip(self):
        idx = sample_indices(Boundary(0, 1), k=7, n_clips=40)
        np.testing.assert_array_equal(idx, np.zeros(7, dtype=int))

    def test_translation_consistency(self):
        # shifting the boundary by one clip shifts every index by one
        rng = np.random.default_rng(0)
        for _ in range(50):
            start = rng.uniform(0, 30)
            width = rng.uniform(1, 8)
            base = sample_indices(Boundary(start, start + width), k=10, n_clips=64)
            moved = sample_indices(Boundary(start + 1, start + width + 1), k=10, n_clips=64)
            np.testing.assert_array_equal(moved, base + 1)


class TestFuseState:
    def batch_inputs(self, rng, batch=2):
        d_video = CFG.d_video
        return (
            Tensor(rng.standard_normal((batch, d_video))),
            Tensor(rng.standard_normal((batch, d_video))),
            Tensor(rng.uniform(0, 1, (batch, 2))),
            Tensor(rng.standard_normal((batch, CFG.d_E))),
        )

    def test_closed_gates_leave_only_bias(self):
        store = make_store()
        for name in ("enc/gate_global/b", "enc/gate_current/b", "enc/gate_boundary/b"):
            store[name].data[:] = -60.0
        for name in ("enc/gate_global/W", "enc/gate_current/W", "enc/gate_boundary/W"):
            store[name].data[:] = 0.0
        v_g, v_c, l_prev, query = self.batch_inputs(np.random.default_rng(1))
        out = fuse_state(v_g, v_c, l_prev, query, store)
        expected = np.tanh(store["enc/fc/b"].data)
        np.testing.assert_allclose(out.data, np.tile(expected, (2, 1)), atol=1e-12)

    def test_open_gates_pass_inputs_through(self):
        store = make_store()
        for name in ("enc/gate_global/b", "enc/gate_current/b", "enc/gate_boundary/b"):
            store[name].data[:] = 60.0
        for name in ("enc/gate_global/W", "enc/gate_current/W", "enc/gate_boundary/W"):
            store[name].data[:] = 0.0
        v_g, v_c, l_prev, query = self.batch_inputs(np.random.default_rng(2))
        out = fuse_state(v_g, v_c, l_prev, query, store)
        fused = np.concatenate([v_g.data, v_c.data, l_prev.data], axis=-1)
        expected = np.tanh(fused @ store["enc/fc/W"].data + store["enc/fc/b"].data)
        np.testing.assert_allclose(out.data, expected, atol=1e-12)

    def test_gradient_wrt_query_matches_finite_differences(self):
        store = make_store(seed=3)
        rng = np.random.default_rng(4)
        v_g, v_c, l_prev, _ = self.batch_inputs(rng)
        q_data = rng.standard_normal((2, CFG.d_E))

        query = Tensor(q_data.copy(), requires_grad=True)
        fuse_state(v_g, v_c, l_prev, query, store).sum().backward()
        analytic = query.grad

        numeric = np.zeros_like(q_data)
        step = 1e-5
        flat = q_data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = float(fuse_state(v_g, v_c, l_prev, Tensor(q_data), store).sum().data)
            flat[i] = orig - step
            down = float(fuse_state(v_g, v_c, l_prev, Tensor(q_data), store).sum().data)
            flat[i] = orig
            numeric.reshape(-1)[i] = (up - down) / (2 * step)
        rel = np.abs(analytic - numeric) / np.maximum(
            np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6
        )
        assert rel.max() < 1e-4

    def test_output_depends_on_boundary(self):
        store = make_store(seed=5)
        rng = np.random.default_rng(6)
        v_g, v_c, _, query = self.batch_inputs(rng, batch=1)
        out_a = fuse_state(v_g, v_c, Tensor([[0.25, 0.75]]), query, store)
        out_b = fuse_state(v_g, v_c, Tensor([[0.30, 0.75]]), query, store)
        assert not np.allclose(out_a.data, out_b.data)

    def test_mismatched_video_streams_rejected(self):
        store = make_store()
        with pytest.raises(ContractViolation):
            fuse_state(
                Tensor(np.zeros((2, CFG.d_video))),
                Tensor(np.zeros((2, CFG.d_video + 1))),
                Tensor(np.zeros((2, 2))),
                Tensor(np.zeros((2, CFG.d_E))),
                store,
            )


def test_end_to_end_encoder_gradients():
    """Sampling is piecewise-constant in the boundary (no gradient); the
    fuse + recurrence chain must pass the finite-difference oracle on
    every encoder parameter."""
    store = make_store(seed=7)
    rng = np.random.default_rng(8)
    feats = rng.standard_normal((12, CFG.d_u))
    query_data = rng.standard_normal((1, CFG.d_E))
    steps = [Boundary(3, 9), Boundary(4, 10), Boundary(4, 8)]

    def loss_fn():
        hidden = initial_hidden(1, CFG)
        v_g = Tensor(sample_interval_features(feats, Boundary(0, 12), CFG.k_samples)[None, :])
        for b in steps:
            v_c = Tensor(sample_interval_features(feats, b, CFG.k_samples)[None, :])
            l_prev = Tensor([[b.start / 12.0, b.end / 12.0]])
            pre = fuse_state(v_g, v_c, l_prev, Tensor(query_data), store)
            hidden = recurrent_state(pre, hidden, store)
        return hidden.sum()

    report = finite_difference_check(
        loss_fn, store, n_samples=300, rng=np.random.default_rng(9)
    )
    assert report.max_rel_error < 1e-4
