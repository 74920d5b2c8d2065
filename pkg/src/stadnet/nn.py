"""Shared neural-network primitives: activations, initialization, Adam, and
bit-exact parameter serialization.

Everything is plain float64 numpy; training code in this package is written
to be bit-reproducible for a fixed seed, so parameter updates always run in a
fixed order.
"""

from __future__ import annotations

import numpy as np

from .core import write_container, read_container, ArchiveError


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_grad(z: np.ndarray) -> np.ndarray:
    return (z > 0.0).astype(np.float64)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -30.0, 30.0)))


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = z - np.max(z, axis=axis, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))


def uniform_init(rng: np.random.Generator, fan_in: int, shape: tuple) -> np.ndarray:
    """Scaled uniform fan-in initialization, U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


class TrainingDivergedError(RuntimeError):
    """Loss exploded during optimization; carries a short diagnostic."""


class Adam:
    """Adaptive-moment optimizer with a 1/(1 + decay*t) learning-rate schedule.

    Parameters whose names appear in `skip` are left untouched, including
    their moment estimates, so frozen tensors stay bit-identical.
    """

    def __init__(self, lr: float = 1e-3, decay: float = 0.0,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if not lr > 0:
            raise ValueError("learning rate must be > 0")
        self.lr = lr
        self.decay = decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.iterations = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._t: dict[str, int] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             skip: frozenset[str] | set[str] = frozenset()) -> None:
        lr_t = self.lr / (1.0 + self.decay * self.iterations)
        self.iterations += 1
        for name in sorted(params):
            if name in skip:
                continue
            g = grads[name]
            if name not in self._m:
                self._m[name] = np.zeros_like(params[name])
                self._v[name] = np.zeros_like(params[name])
                self._t[name] = 0
            self._t[name] += 1
            t = self._t[name]
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            params[name] -= lr_t * m_hat / (np.sqrt(v_hat) + self.eps)


def save_params(path, kind: str, meta: dict, params: dict[str, np.ndarray]) -> int:
    """Serialize named float64 arrays with metadata; round-trips bit-exactly."""
    sections = []
    chunks = []
    offset = 0
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        raw = arr.tobytes()
        sections.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    header = {"kind": kind, "meta": meta, "sections": sections, "dtype": "<f8"}
    return write_container(path, header, b"".join(chunks))


def load_params(path, kind: str) -> tuple[dict, dict[str, np.ndarray]]:
    header, payload = read_container(path)
    if header.get("kind") != kind:
        raise ArchiveError(f"{path}: expected kind {kind!r}, got {header.get('kind')!r}")
    params: dict[str, np.ndarray] = {}
    for sec in header["sections"]:
        shape = tuple(sec["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = sec["offset"]
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=start)
        params[sec["name"]] = arr.reshape(shape).astype(np.float64).copy()
    return header["meta"], params
