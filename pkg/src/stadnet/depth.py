"""Fully connected depth regressors mapping augmented pose vectors to relative
depth.

Three estimators share this implementation: one fed by the 97-component body
pose vector (neck depth) and two fed by the 54-component per-hand vectors.
Each is a 9-layer rectifier MLP with a linear output, trained with Adam on
mean squared error. Inputs are standardized with statistics frozen into the
model artifact at training time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .features import BODY_DIM, HAND_DIM

LAYER_COUNT = 9
BODY_LAYER_SIZES = (BODY_DIM, 128, 128, 96, 64, 48, 32, 16, 8, 1)
HAND_LAYER_SIZES = (HAND_DIM, 128, 128, 96, 64, 48, 32, 16, 8, 1)

MODEL_KIND = "DEPTH_MODEL"
DIVERGENCE_LIMIT = 1e6


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    decay: float = 1e-3
    batch_size: int = 64
    epochs: int = 200
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.optimizer != "adam":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")


class DepthNet:
    """A 9-layer rectifier MLP regressor with built-in input standardization."""

    def __init__(self, sizes: tuple[int, ...] = BODY_LAYER_SIZES, seed: int = 0):
        if len(sizes) != LAYER_COUNT + 1:
            raise ValueError(f"expected {LAYER_COUNT} layers ({LAYER_COUNT + 1} sizes), got {len(sizes) - 1}")
        if sizes[-1] != 1:
            raise ValueError("output must be scalar")
        self.sizes = tuple(int(s) for s in sizes)
        rng = np.random.default_rng(seed)
        self.weights = [nn.uniform_init(rng, sizes[i], (sizes[i], sizes[i + 1]))
                        for i in range(LAYER_COUNT)]
        self.biases = [np.zeros(sizes[i + 1]) for i in range(LAYER_COUNT)]
        self.input_mean = np.zeros(sizes[0])
        self.input_std = np.ones(sizes[0])
        self.meta: dict = {"seed": seed, "epochs_trained": 0, "final_mse": None}

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[1] != self.input_dim:
            raise ValueError(f"input dim {x.shape[1]} does not match net ({self.input_dim})")
        return x

    def _forward_cached(self, x: np.ndarray):
        """Forward pass keeping pre-activations for backprop."""
        a = (x - self.input_mean) / self.input_std
        activations = [a]
        pre = []
        for i in range(LAYER_COUNT):
            z = a @ self.weights[i] + self.biases[i]
            pre.append(z)
            a = nn.relu(z) if i < LAYER_COUNT - 1 else z
            activations.append(a)
        return activations, pre

    def forward(self, x: np.ndarray) -> np.ndarray | float:
        """Relative-depth estimate(s) for one vector or a batch."""
        single = np.asarray(x).ndim == 1
        activations, _ = self._forward_cached(self._check_input(x))
        out = activations[-1][:, 0]
        return float(out[0]) if single else out

    def _backward(self, activations, pre, dout: np.ndarray):
        """Gradients of the loss given d(loss)/d(output); returns (dW, db) lists."""
        grads_w = [None] * LAYER_COUNT
        grads_b = [None] * LAYER_COUNT
        delta = dout
        for i in reversed(range(LAYER_COUNT)):
            grads_w[i] = activations[i].T @ delta
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * nn.relu_grad(pre[i - 1])
        return grads_w, grads_b

    def parameters(self) -> dict[str, np.ndarray]:
        out = {}
        for i in range(LAYER_COUNT):
            out[f"w{i}"] = self.weights[i]
            out[f"b{i}"] = self.biases[i]
        return out

    def min_kink_margin(self, x: np.ndarray) -> float:
        """Smallest |pre-activation| over hidden units; gradient checks near 0
        landing on the rectifier kink are unreliable and should be redrawn."""
        _, pre = self._forward_cached(self._check_input(x))
        return min(float(np.min(np.abs(z))) for z in pre[:-1])

    def save(self, path) -> int:
        meta = dict(self.meta)
        meta["sizes"] = list(self.sizes)
        params = self.parameters()
        params["input_mean"] = self.input_mean
        params["input_std"] = self.input_std
        return nn.save_params(path, MODEL_KIND, meta, params)

    @classmethod
    def load(cls, path) -> "DepthNet":
        meta, params = nn.load_params(path, MODEL_KIND)
        net = cls(sizes=tuple(meta["sizes"]), seed=meta.get("seed", 0))
        for i in range(LAYER_COUNT):
            net.weights[i] = params[f"w{i}"]
            net.biases[i] = params[f"b{i}"]
        net.input_mean = params["input_mean"]
        net.input_std = params["input_std"]
        net.meta = {k: v for k, v in meta.items() if k != "sizes"}
        return net


def _batch_loss_and_grads(net: DepthNet, x: np.ndarray, d: np.ndarray):
    activations, pre = net._forward_cached(x)
    residual = activations[-1][:, 0] - d
    loss = float(np.mean(residual ** 2))
    dout = (2.0 / len(d)) * residual[:, None]
    grads_w, grads_b = net._backward(activations, pre, dout)
    return loss, grads_w, grads_b


def train(net: DepthNet, x: np.ndarray, d: np.ndarray,
          cfg: TrainConfig = TrainConfig(), accumulation_chunks: int | None = None
          ) -> tuple[DepthNet, list[float]]:
    """Train in place; returns the net and per-epoch mean training loss.

    `accumulation_chunks` splits each batch into fixed-order sub-batches whose
    gradients are summed before the update, matching sequential results — the
    hook for fan-out gradient computation.
    """
    x = net._check_input(x)
    d = np.asarray(d, dtype=np.float64).reshape(-1)
    if len(x) == 0:
        raise ValueError("empty training set")
    if not np.all(np.isfinite(d)):
        raise ValueError("targets must be finite")
    net.input_mean = x.mean(axis=0)
    std = x.std(axis=0)
    net.input_std = np.where(std > 1e-12, std, 1.0)

    rng = np.random.default_rng(cfg.seed)
    opt = nn.Adam(lr=cfg.learning_rate, decay=cfg.decay)
    losses: list[float] = []
    names = [f"w{i}" for i in range(LAYER_COUNT)] + [f"b{i}" for i in range(LAYER_COUNT)]
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(x))
        epoch_losses = []
        for start in range(0, len(x), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, db = x[idx], d[idx]
            if accumulation_chunks and accumulation_chunks > 1:
                loss, grads_w, grads_b = _chunked_grads(net, xb, db, accumulation_chunks)
            else:
                loss, grads_w, grads_b = _batch_loss_and_grads(net, xb, db)
            if not np.isfinite(loss) or loss > DIVERGENCE_LIMIT:
                raise nn.TrainingDivergedError(
                    f"loss {loss:.3g} at epoch {epoch}, batch {start // cfg.batch_size}"
                )
            params = net.parameters()
            grads = {f"w{i}": grads_w[i] for i in range(LAYER_COUNT)}
            grads.update({f"b{i}": grads_b[i] for i in range(LAYER_COUNT)})
            opt.step(params, grads)
            epoch_losses.append(loss)
        losses.append(float(np.mean(epoch_losses)))
    net.meta["epochs_trained"] = net.meta.get("epochs_trained", 0) + cfg.epochs
    net.meta["final_mse"] = losses[-1] if losses else None
    return net, losses


def _chunked_grads(net: DepthNet, xb: np.ndarray, db: np.ndarray, chunks: int):
    """Per-chunk gradients summed in fixed order; equivalent to one batch."""
    total = len(xb)
    bounds = np.linspace(0, total, chunks + 1).astype(int)
    grads_w = [np.zeros_like(w) for w in net.weights]
    grads_b = [np.zeros_like(b) for b in net.biases]
    loss = 0.0
    for c in range(chunks):
        lo, hi = bounds[c], bounds[c + 1]
        if lo == hi:
            continue
        activations, pre = net._forward_cached(xb[lo:hi])
        residual = activations[-1][:, 0] - db[lo:hi]
        loss += float(np.sum(residual ** 2))
        dout = (2.0 / total) * residual[:, None]
        gw, gb = net._backward(activations, pre, dout)
        for i in range(LAYER_COUNT):
            grads_w[i] += gw[i]
            grads_b[i] += gb[i]
    return loss / total, grads_w, grads_b


def evaluate_mse(net: DepthNet, x: np.ndarray, d: np.ndarray) -> float:
    pred = net.forward(x)
    return float(np.mean((np.asarray(pred) - np.asarray(d, dtype=np.float64)) ** 2))


def gradient_check(net: DepthNet, x: np.ndarray, d: np.ndarray,
                   step: float = 1e-4) -> float:
    """Max relative error between analytic and central-difference gradients.

    Callers should confirm `net.min_kink_margin(x)` is comfortably larger than
    `step` first; finite differences straddling a rectifier kink are invalid.
    """
    x = net._check_input(x)
    d = np.asarray(d, dtype=np.float64).reshape(-1)
    loss, grads_w, grads_b = _batch_loss_and_grads(net, x, d)
    analytic = {f"w{i}": grads_w[i] for i in range(LAYER_COUNT)}
    analytic.update({f"b{i}": grads_b[i] for i in range(LAYER_COUNT)})

    def loss_at() -> float:
        activations, _ = net._forward_cached(x)
        return float(np.mean((activations[-1][:, 0] - d) ** 2))

    worst = 0.0
    for name, tensor in net.parameters().items():
        flat = tensor.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up = loss_at()
            flat[j] = orig - step
            down = loss_at()
            flat[j] = orig
            numeric = (up - down) / (2.0 * step)
            denom = max(abs(a_flat[j]), abs(numeric), 1e-6)
            worst = max(worst, abs(a_flat[j] - numeric) / denom)
    return worst
