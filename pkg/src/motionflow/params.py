"""Parameter storage with a deterministic flat index, Adam, and grad checks."""

from __future__ import annotations

import bisect

import numpy as np

from .autodiff import Tape, Tensor, backward
from .errors import ShapeError


class PredictorParams:
    """Named parameter tensors with a flat scalar index.

    The flat index follows insertion order, so two models built the same way
    index identically. ``get_flat``/``set_flat`` operate on the live arrays.
    """

    def __init__(self):
        self._names: list[str] = []
        self._tensors: dict[str, Tensor] = {}
        self._offsets: list[int] = [0]

    def add(self, name: str, array: np.ndarray) -> Tensor:
        if name in self._tensors:
            raise ShapeError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(array, dtype=np.float64))
        self._names.append(name)
        self._tensors[name] = t
        self._offsets.append(self._offsets[-1] + t.value.size)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def names(self) -> list[str]:
        return list(self._names)

    @property
    def count(self) -> int:
        return self._offsets[-1]

    def _locate(self, index: int):
        if not 0 <= index < self.count:
            raise IndexError(f"flat index {index} out of range [0, {self.count})")
        slot = bisect.bisect_right(self._offsets, index) - 1
        return self._names[slot], index - self._offsets[slot]

    def get_flat(self, index: int) -> float:
        name, local = self._locate(index)
        return float(self._tensors[name].value.flat[local])

    def set_flat(self, index: int, value: float):
        name, local = self._locate(index)
        self._tensors[name].value.flat[local] = value

    def grad_flat(self, index: int) -> float:
        name, local = self._locate(index)
        g = self._tensors[name].grad
        return 0.0 if g is None else float(np.asarray(g).flat[local])

    def flat_values(self) -> np.ndarray:
        return np.concatenate([self._tensors[n].value.ravel() for n in self._names])

    def zero_grad(self):
        for n in self._names:
            self._tensors[n].grad = None

    def copy_from(self, other: "PredictorParams"):
        if self.names() != other.names():
            raise ShapeError("parameter tables differ")
        for n in self._names:
            np.copyto(self._tensors[n].value, other._tensors[n].value)

    def arrays(self) -> dict[str, np.ndarray]:
        return {n: self._tensors[n].value for n in self._names}


def adam_step(value, grad, m, v, lr, beta1=0.9, beta2=0.999, eps=1e-8, step=1):
    """One bias-corrected Adam update on plain arrays; returns new (value, m, v)."""
    value = np.asarray(value, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if value.shape != grad.shape:
        raise ShapeError(f"adam_step shapes {value.shape} vs {grad.shape}")
    m = beta1 * m + (1 - beta1) * grad
    v = beta2 * v + (1 - beta2) * (grad * grad)
    m_hat = m / (1 - beta1**step)
    v_hat = v / (1 - beta2**step)
    return value - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


class Adam:
    """Adam over a PredictorParams table. Deterministic, single-threaded."""

    def __init__(self, params: PredictorParams, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = {n: np.zeros_like(params[n].value) for n in params.names()}
        self._v = {n: np.zeros_like(params[n].value) for n in params.names()}

    def step(self):
        self.step_count += 1
        for name in self.params.names():
            tensor = self.params[name]
            grad = tensor.grad
            if grad is None:
                grad = np.zeros_like(tensor.value)
            new, self._m[name], self._v[name] = adam_step(
                tensor.value, np.asarray(grad), self._m[name], self._v[name],
                self.lr, self.beta1, self.beta2, self.eps, self.step_count,
            )
            np.copyto(tensor.value, new)


def check_gradients(build_loss, params: PredictorParams, n_samples=200,
                    step=1e-5, seed=0) -> float:
    """Compare tape gradients against central finite differences.

    ``build_loss`` must rebuild the forward pass from the current parameter
    values and return the scalar loss Tensor. Returns the max relative error
    over ``n_samples`` uniformly sampled flat parameter indices.
    """
    with Tape() as tape:
        loss = build_loss()
    params.zero_grad()
    backward(tape, loss)
    analytic = np.array([params.grad_flat(i) for i in range(params.count)])

    rng = np.random.default_rng(seed)
    n = min(n_samples, params.count)
    indices = rng.choice(params.count, size=n, replace=False)
    worst = 0.0
    for idx in indices:
        original = params.get_flat(idx)
        params.set_flat(idx, original + step)
        up = _loss_value(build_loss)
        params.set_flat(idx, original - step)
        down = _loss_value(build_loss)
        params.set_flat(idx, original)
        fd = (up - down) / (2 * step)
        an = analytic[idx]
        rel = abs(an - fd) / max(abs(an), abs(fd), 1e-6)
        worst = max(worst, rel)
    return worst


def _loss_value(build_loss) -> float:
    out = build_loss()
    return float(np.asarray(out.value if isinstance(out, Tensor) else out))
