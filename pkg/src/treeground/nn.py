"""Parameter storage, layer primitives and the adaptive-moment optimizer.

Parameters live in a :class:`ParamStore` under stable string names; the
trainer freezes one policy side simply by leaving its names out of the
update. Optimizer moments and per-parameter step counters are part of
the store so checkpoints can resume bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, softmax
from .errors import ContractViolation, NumericError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class ParamStore:
    """Named trainable tensors plus their optimizer state."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._t: dict[str, int] = {}

    def add(self, name: str, data) -> Tensor:
        if name in self._params:
            raise ContractViolation(f"duplicate parameter name {name!r}")
        tensor = Tensor(np.array(data, dtype=np.float64), requires_grad=True)
        self._params[name] = tensor
        self._m[name] = np.zeros_like(tensor.data)
        self._v[name] = np.zeros_like(tensor.data)
        self._t[name] = 0
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grad(self):
        for tensor in self._params.values():
            tensor.grad = None

    def gradients(self, names=None) -> dict[str, np.ndarray]:
        """Collect grads for ``names`` (default all), zero-filling params
        the backward pass never reached."""
        names = self.names() if names is None else list(names)
        grads = {}
        for name in names:
            tensor = self._params[name]
            grads[name] = (
                np.zeros_like(tensor.data) if tensor.grad is None else tensor.grad
            )
        return grads

    def adam_step(
        self,
        grads: dict[str, np.ndarray],
        lr: float,
        beta1: float = ADAM_BETA1,
        beta2: float = ADAM_BETA2,
        eps: float = ADAM_EPS,
        names=None,
    ):
        """One bias-corrected adaptive-moment update over ``names``.

        Every updated parameter must have an entry in ``grads``; only the
        listed parameters (and their moments/counters) are touched, so
        anything outside the list stays bitwise identical.
        """
        names = list(grads) if names is None else list(names)
        for name in names:
            if name not in self._params:
                raise ContractViolation(f"unknown parameter {name!r}")
            if name not in grads:
                raise ContractViolation(f"missing gradient for parameter {name!r}")
            g = grads[name]
            p = self._params[name]
            if g.shape != p.data.shape:
                raise ContractViolation(
                    f"gradient shape {g.shape} != parameter shape {p.data.shape} for {name!r}"
                )
            self._t[name] += 1
            t = self._t[name]
            m = self._m[name]
            v = self._v[name]
            m += (1.0 - beta1) * (g - m)
            v += (1.0 - beta2) * (g * g - v)
            m_hat = m / (1.0 - beta1**t)
            v_hat = v / (1.0 - beta2**t)
            p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)

    def check_finite(self):
        for name, tensor in self._params.items():
            if not np.all(np.isfinite(tensor.data)):
                raise NumericError(f"non-finite parameter {name!r}")

    # -- checkpoint support ----------------------------------------------------

    @classmethod
    def from_state(cls, state: dict) -> "ParamStore":
        store = cls()
        for name, entry in state.items():
            store.add(name, entry["data"])
            store._m[name] = entry["m"].astype(np.float64).copy()
            store._v[name] = entry["v"].astype(np.float64).copy()
            store._t[name] = int(entry["t"])
        return store

    def state(self) -> dict:
        return {
            name: {
                "data": self._params[name].data,
                "m": self._m[name],
                "v": self._v[name],
                "t": self._t[name],
            }
            for name in self._params
        }

    def load_state(self, state: dict):
        for name, entry in state.items():
            if name not in self._params:
                raise ContractViolation(f"checkpoint has unknown parameter {name!r}")
            p = self._params[name]
            if entry["data"].shape != p.data.shape:
                raise ContractViolation(
                    f"checkpoint shape {entry['data'].shape} != expected "
                    f"{p.data.shape} for {name!r}"
                )
            p.data = entry["data"].astype(np.float64).copy()
            self._m[name] = entry["m"].astype(np.float64).copy()
            self._v[name] = entry["v"].astype(np.float64).copy()
            self._t[name] = int(entry["t"])
        missing = set(self._params) - set(state)
        if missing:
            raise ContractViolation(f"checkpoint missing parameters: {sorted(missing)}")


def uniform_init(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def add_dense(store: ParamStore, prefix: str, fan_in: int, fan_out: int, rng):
    store.add(f"{prefix}/W", uniform_init(rng, fan_in, (fan_in, fan_out)))
    store.add(f"{prefix}/b", np.zeros(fan_out))


def dense(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """Affine map ``x @ W + b`` with gradients to all three inputs."""
    if x.data.ndim != 2:
        raise ContractViolation(f"dense expects [batch, in] input, got {x.shape}")
    if bias.data.shape != (weights.data.shape[1],):
        raise ContractViolation(
            f"bias shape {bias.data.shape} does not match weights {weights.data.shape}"
        )
    return x @ weights + bias


def dense_from(store: ParamStore, prefix: str, x: Tensor) -> Tensor:
    return dense(x, store[f"{prefix}/W"], store[f"{prefix}/b"])


def add_gru(store: ParamStore, prefix: str, d_in: int, d_hidden: int, rng):
    for gate in ("update", "reset", "cand"):
        store.add(f"{prefix}/{gate}/Wx", uniform_init(rng, d_in, (d_in, d_hidden)))
        store.add(f"{prefix}/{gate}/Wh", uniform_init(rng, d_hidden, (d_hidden, d_hidden)))
        store.add(f"{prefix}/{gate}/b", np.zeros(d_hidden))


def gru_step(x: Tensor, hidden: Tensor, store: ParamStore, prefix: str) -> Tensor:
    """Gated recurrent unit update.

    z = sigmoid(x Wxz + h Whz + bz)         update gate
    r = sigmoid(x Wxr + h Whr + br)         reset gate
    n = tanh(x Wxn + (r*h) Whn + bn)        candidate
    h' = z*h + (1-z)*n

    An update gate saturated at 1 keeps the previous hidden state.
    """
    if x.data.ndim != 2 or hidden.data.ndim != 2 or x.data.shape[0] != hidden.data.shape[0]:
        raise ContractViolation(
            f"gru_step expects matching [batch, *] operands, got {x.shape} and {hidden.shape}"
        )
    z = (
        x @ store[f"{prefix}/update/Wx"]
        + hidden @ store[f"{prefix}/update/Wh"]
        + store[f"{prefix}/update/b"]
    ).sigmoid()
    r = (
        x @ store[f"{prefix}/reset/Wx"]
        + hidden @ store[f"{prefix}/reset/Wh"]
        + store[f"{prefix}/reset/b"]
    ).sigmoid()
    n = (
        x @ store[f"{prefix}/cand/Wx"]
        + (r * hidden) @ store[f"{prefix}/cand/Wh"]
        + store[f"{prefix}/cand/b"]
    ).tanh()
    return z * hidden + (1.0 - z) * n


@dataclass
class CategoricalStats:
    """Differentiable distribution quantities for a batch of logit rows."""

    probs: Tensor        # [batch, n]
    log_probs: Tensor    # [batch, n]
    entropy: Tensor      # [batch]


def categorical_stats(logits: Tensor) -> CategoricalStats:
    log_probs = logits.log_softmax()
    probs = log_probs.exp()
    entropy = -(probs * log_probs).sum(axis=-1)
    return CategoricalStats(probs=probs, log_probs=log_probs, entropy=entropy)


def sample_rows(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draw of one category per row; deterministic given rng state."""
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[0])
    idx = (cdf < u[:, None]).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)


def softmax_categorical(logits, rng: np.random.Generator):
    """Sample from softmax(logits); returns (probs tensor, sample index/indices).

    1-D logits give a single int; 2-D logits give one draw per row. The
    probabilities stay on the autodiff tape, the draws are plain integers.
    """
    tensor = logits if isinstance(logits, Tensor) else Tensor(logits)
    if tensor.data.shape[-1] < 2:
        raise ContractViolation("categorical sampling needs at least 2 categories")
    probs = softmax(tensor)
    if tensor.data.ndim == 1:
        sample = int(sample_rows(probs.data[None, :], rng)[0])
    else:
        sample = sample_rows(probs.data, rng)
    return probs, sample


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so the global L2 norm is <= max_norm."""
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    norm = np.sqrt(total)
    if max_norm is not None and norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    worst_param: str
    worst_index: int
    worst_analytic: float
    worst_numeric: float

    def passed(self, tolerance: float) -> bool:
        return self.max_rel_error < tolerance


def finite_difference_check(
    loss_fn,
    store: ParamStore,
    tolerance: float = 1e-4,
    n_samples: int = 100,
    step: float = 1e-5,
    rng: np.random.Generator | None = None,
    names=None,
) -> GradCheckReport:
    """Compare analytic gradients of ``loss_fn()`` against central differences.

    ``loss_fn`` must be deterministic given the current parameter values.
    A random subsample of at least ``n_samples`` coordinates is probed
    (all coordinates when there are fewer). Relative error uses
    ``|a - n| / max(|a|, |n|, 1e-6)`` so dead coordinates do not divide
    by zero.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    names = store.names() if names is None else list(names)

    store.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = {name: store.gradients([name])[name].copy() for name in names}

    coords = [(name, i) for name in names for i in range(store[name].data.size)]
    if len(coords) > n_samples:
        pick = rng.choice(len(coords), size=n_samples, replace=False)
        coords = [coords[i] for i in sorted(pick)]

    report = GradCheckReport(0.0, len(coords), "", -1, 0.0, 0.0)
    for name, i in coords:
        flat = store[name].data.reshape(-1)
        orig = flat[i]
        flat[i] = orig + step
        up = float(loss_fn().data)
        flat[i] = orig - step
        down = float(loss_fn().data)
        flat[i] = orig
        numeric = (up - down) / (2.0 * step)
        a = float(analytic[name].reshape(-1)[i])
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
        if rel > report.max_rel_error:
            report.max_rel_error = rel
            report.worst_param = name
            report.worst_index = i
            report.worst_analytic = a
            report.worst_numeric = numeric
    return report
