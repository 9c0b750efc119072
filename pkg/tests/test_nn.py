import math

import numpy as np
import pytest

from treeground.autodiff import Tensor
from treeground.errors import ContractViolation
from treeground.nn import (
    ParamStore,
    add_gru,
    clip_global_norm,
    dense,
    finite_difference_check,
    gru_step,
    softmax_categorical,
    uniform_init,
)


def make_gru_store(d_in, d_hidden, seed=0) -> ParamStore:
    store = ParamStore()
    add_gru(store, "gru", d_in, d_hidden, np.random.default_rng(seed))
    return store


class TestGru:
    def test_all_zero_fixed_point(self):
        # h' = z*0 + (1-z)*tanh(0) = 0 when everything is zero
        store = make_gru_store(3, 4)
        for name in store.names():
            store[name].data[:] = 0.0
        out = gru_step(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 4))), store, "gru")
        np.testing.assert_array_equal(out.data, np.zeros((2, 4)))

    def test_saturated_update_gate_keeps_hidden(self):
        store = make_gru_store(1, 1)
        for name in store.names():
            store[name].data[:] = 0.0
        store["gru/update/b"].data[:] = 50.0  # z ~= 1
        h_prev = Tensor([[0.73]])
        out = gru_step(Tensor([[2.0]]), h_prev, store, "gru")
        np.testing.assert_allclose(out.data, h_prev.data, atol=1e-12)

    def test_closed_form_single_unit(self):
        # Hand-evaluated GRU equations with fixed scalar parameters.
        store = make_gru_store(1, 1)
        values = {
            "gru/update/Wx": 0.5, "gru/update/Wh": -0.3, "gru/update/b": 0.1,
            "gru/reset/Wx": 0.2, "gru/reset/Wh": 0.4, "gru/reset/b": -0.2,
            "gru/cand/Wx": 0.7, "gru/cand/Wh": -0.5, "gru/cand/b": 0.3,
        }
        for name, v in values.items():
            store[name].data[:] = v
        x, h = 0.9, -0.4
        sig = lambda v: 1.0 / (1.0 + math.exp(-v))
        z = sig(0.5 * x - 0.3 * h + 0.1)
        r = sig(0.2 * x + 0.4 * h - 0.2)
        n = math.tanh(0.7 * x + (r * h) * -0.5 + 0.3)
        expected = z * h + (1 - z) * n
        out = gru_step(Tensor([[x]]), Tensor([[h]]), store, "gru")
        np.testing.assert_allclose(out.data, [[expected]], rtol=1e-12)

    def test_backprop_through_five_chained_steps(self):
        store = make_gru_store(3, 4, seed=5)
        rng = np.random.default_rng(11)
        inputs = rng.standard_normal((5, 2, 3))

        def loss_fn():
            h = Tensor(np.zeros((2, 4)))
            for t in range(5):
                h = gru_step(Tensor(inputs[t]), h, store, "gru")
            return h.sum()

        report = finite_difference_check(
            loss_fn, store, n_samples=10_000, rng=np.random.default_rng(0)
        )
        assert report.max_rel_error < 1e-5

    def test_shape_mismatch_raises(self):
        store = make_gru_store(3, 4)
        with pytest.raises(ContractViolation):
            gru_step(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 4))), store, "gru")


class TestSoftmaxCategorical:
    def test_uniform_logits(self):
        probs, _ = softmax_categorical(np.zeros(5), np.random.default_rng(0))
        np.testing.assert_allclose(probs.data, [0.2] * 5, atol=1e-12)
        entropy = -(probs.data * np.log(probs.data)).sum()
        assert abs(entropy - math.log(5)) < 1e-12

    def test_two_way_probabilities(self):
        probs, _ = softmax_categorical(np.array([10.0, 0.0]), np.random.default_rng(0))
        np.testing.assert_allclose(probs.data, [0.9999546, 4.5398e-05], rtol=1e-4)

    def test_fixed_seed_reproducible_sequence(self):
        logits = np.array([0.3, -0.2, 1.0])
        draws_a = [softmax_categorical(logits, np.random.default_rng(42))[1] for _ in range(20)]
        draws_b = [softmax_categorical(logits, np.random.default_rng(42))[1] for _ in range(20)]
        assert draws_a == draws_b

    def test_single_category_rejected(self):
        with pytest.raises(ContractViolation):
            softmax_categorical(np.zeros(1), np.random.default_rng(0))

    def test_sampling_matches_distribution(self):
        rng = np.random.default_rng(9)
        logits = np.log(np.array([0.5, 0.3, 0.2]))
        n = 20_000
        _, draws = softmax_categorical(np.tile(logits, (n, 1)), rng)
        freq = np.bincount(draws, minlength=3) / n
        sigma = np.sqrt(np.array([0.5, 0.3, 0.2]) * np.array([0.5, 0.7, 0.8]) / n)
        assert np.all(np.abs(freq - [0.5, 0.3, 0.2]) < 4 * sigma)


class TestAdam:
    def test_zero_gradient_leaves_parameters_unchanged(self):
        store = ParamStore()
        store.add("w", np.array([1.0, -2.0]))
        store.adam_step({"w": np.zeros(2)}, lr=0.1)
        np.testing.assert_array_equal(store["w"].data, [1.0, -2.0])

    def test_first_step_size_is_learning_rate(self):
        # Bias correction makes the first step ~lr for any constant gradient.
        store = ParamStore()
        store.add("w", np.array([0.5]))
        store.adam_step({"w": np.array([1.0])}, lr=0.001)
        np.testing.assert_allclose(store["w"].data, [0.5 - 0.001], rtol=1e-7)

    def test_quadratic_loss_decreases_monotonically(self):
        store = ParamStore()
        w = store.add("w", np.array([3.0]))
        losses = []
        for _ in range(100):
            store.zero_grad()
            loss = (w * w).sum()
            loss.backward()
            losses.append(float(loss.data))
            store.adam_step(store.gradients(), lr=0.05)
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_missing_gradient_rejected(self):
        store = ParamStore()
        store.add("w", np.array([1.0]))
        store.add("b", np.array([1.0]))
        with pytest.raises(ContractViolation):
            store.adam_step({"w": np.array([0.1])}, lr=0.1, names=["w", "b"])

    def test_update_respects_name_subset(self):
        store = ParamStore()
        store.add("a", np.array([1.0]))
        store.add("b", np.array([1.0]))
        before = store["b"].data.copy()
        store.adam_step({"a": np.array([1.0]), "b": np.array([1.0])}, lr=0.1, names=["a"])
        np.testing.assert_array_equal(store["b"].data, before)
        assert store["a"].data[0] != 1.0


class TestFiniteDifferenceCheck:
    def test_linear_loss_is_exact(self):
        store = ParamStore()
        w = store.add("w", np.linspace(-1, 1, 7))
        report = finite_difference_check(lambda: w.sum(), store)
        assert report.max_rel_error < 1e-9

    def test_corrupted_gradient_detected(self):
        store = ParamStore()
        w = store.add("w", np.linspace(-1, 1, 7))

        def loss_fn():
            out = w.sum()

            def bad_backward(g):
                w._accumulate(np.full_like(w.data, 3.0))  # wrong on purpose

            out._backward = bad_backward
            return out

        report = finite_difference_check(loss_fn, store)
        assert report.max_rel_error > 1e-4
        assert not report.passed(1e-4)

    def test_subsamples_large_parameter_sets(self):
        store = ParamStore()
        w = store.add("w", uniform_init(np.random.default_rng(0), 50, (50, 50)))
        report = finite_difference_check(
            lambda: (w * w).sum(), store, n_samples=120, rng=np.random.default_rng(1)
        )
        assert report.n_checked == 120
        assert report.max_rel_error < 1e-6


def test_clip_global_norm_scales_in_place():
    grads = {"a": np.array([3.0, 0.0]), "b": np.array([0.0, 4.0])}
    norm = clip_global_norm(grads, 1.0)
    assert norm == pytest.approx(5.0)
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    assert total == pytest.approx(1.0)


def test_clip_disabled_with_none():
    grads = {"a": np.array([30.0])}
    clip_global_norm(grads, None)
    np.testing.assert_array_equal(grads["a"], [30.0])


def test_dense_bias_shape_mismatch():
    with pytest.raises(ContractViolation):
        dense(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 4))), Tensor(np.ones(3)))
