"""Dynamic-gesture classifier: per-frame fusion of hand embeddings with the
dynamic pose vector, a time-distributed dense layer, stacked LSTMs, and a
dense-softmax head.

The fused vector is [left embedding; dynamic pose; right embedding], giving
2*E + 129 features per frame. Padded frames are skipped in the recurrence
(state carries through unchanged), so the final hidden state is the state
after the last real frame. Training runs in ordered phases that unfreeze
layers from the head downward; frozen tensors are never touched by the
optimizer, not even their moment estimates.

All forward/backward math is hand-rolled numpy with exact backpropagation
through time; gradient checking against central finite differences is part of
the test surface.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .core import SEQUENCE_LENGTH, GestureSequence, stable_hash
from .features import DYNAMIC_DIM
from .sequences import StandardizationStats, fix_length

MODEL_KIND = "GESTURE_MODEL"
BN_EPS = 1e-5
BN_MOMENTUM = 0.9
DIVERGENCE_LIMIT = 1e6


def fused_dim(embed_dim: int) -> int:
    return 2 * embed_dim + DYNAMIC_DIM


def fuse(e_l: np.ndarray, x_dyn: np.ndarray, e_r: np.ndarray) -> np.ndarray:
    """Per-frame fusion, fixed order: [left embedding; dynamic pose; right]."""
    e_l = np.asarray(e_l, dtype=np.float64)
    e_r = np.asarray(e_r, dtype=np.float64)
    x_dyn = np.asarray(x_dyn, dtype=np.float64)
    if e_l.shape != e_r.shape or e_l.ndim != 1:
        raise ValueError("hand embeddings must be 1-D and equally sized")
    if x_dyn.shape != (DYNAMIC_DIM,):
        raise ValueError(f"dynamic pose must have {DYNAMIC_DIM} components")
    return np.concatenate([e_l, x_dyn, e_r])


@dataclass(frozen=True)
class GestureNetConfig:
    embed_dim: int
    n_classes: int
    td_units: int = 64
    lstm_units: tuple[int, ...] = (48, 48)
    dropout: float = 0.85
    use_batchnorm: bool = False
    seed: int = 0

    @property
    def feature_dim(self) -> int:
        return fused_dim(self.embed_dim)


def desk_config(n_classes: int, embed_dim: int = 64, seed: int = 0) -> GestureNetConfig:
    return GestureNetConfig(embed_dim=embed_dim, n_classes=n_classes, td_units=64,
                            lstm_units=(48, 48), dropout=0.85, use_batchnorm=False,
                            seed=seed)


def paper_parity_config(n_classes: int, seed: int = 0) -> GestureNetConfig:
    return GestureNetConfig(embed_dim=1024, n_classes=n_classes, td_units=512,
                            lstm_units=(256, 256), dropout=0.85, use_batchnorm=True,
                            seed=seed)


@dataclass(frozen=True)
class Phase:
    name: str
    unfrozen: frozenset[str]
    max_epochs: int
    patience: int


def default_schedule(n_blocks: int = 2, max_epochs: int = 40, patience: int = 6,
                     include_batchnorm: bool = False) -> list[Phase]:
    """Head first, then LSTM blocks top-down, finally everything."""
    blocks = [f"lstm{i}" for i in range(n_blocks)]
    sets = [
        {"head"},
        {"head", blocks[-1]},
        {"head", *blocks},
        {"head", *blocks, "td"} | ({"bn"} if include_batchnorm else set()),
    ]
    return [Phase(name=f"phase{i + 1}", unfrozen=frozenset(s),
                  max_epochs=max_epochs, patience=patience)
            for i, s in enumerate(sets)]


def validate_schedule(schedule: list[Phase], layer_names: set[str]) -> None:
    if not schedule:
        raise ValueError("schedule must have at least one phase")
    previous: frozenset[str] = frozenset()
    for phase in schedule:
        unknown = phase.unfrozen - layer_names
        if unknown:
            raise ValueError(f"{phase.name}: unknown layers {sorted(unknown)}")
        if not previous <= phase.unfrozen:
            raise ValueError(f"{phase.name}: unfrozen set must contain the previous phase's")
        previous = phase.unfrozen
    if previous != layer_names:
        raise ValueError("final phase must unfreeze every layer")


@dataclass
class ClassifierTrainConfig:
    learning_rate: float = 1e-3
    decay: float = 1e-3
    batch_size: int = 16
    seed: int = 0


class GestureNet:
    """Time-distributed dense + stacked LSTM + softmax classifier."""

    def __init__(self, config: GestureNetConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        f = config.feature_dim
        self.params: dict[str, np.ndarray] = {}
        if config.use_batchnorm:
            self.params["bn/gamma"] = np.ones(f)
            self.params["bn/beta"] = np.zeros(f)
        self.bn_running_mean = np.zeros(f)
        self.bn_running_var = np.ones(f)
        self.params["td/W"] = nn.uniform_init(rng, f, (f, config.td_units))
        self.params["td/b"] = np.zeros(config.td_units)
        d_in = config.td_units
        for i, h in enumerate(config.lstm_units):
            self.params[f"lstm{i}/Wx"] = nn.uniform_init(rng, d_in + h, (d_in, 4 * h))
            self.params[f"lstm{i}/Wh"] = nn.uniform_init(rng, d_in + h, (h, 4 * h))
            b = np.zeros(4 * h)
            b[h:2 * h] = 1.0  # forget-gate bias starts open
            self.params[f"lstm{i}/b"] = b
            d_in = h
        self._init_head(rng, d_in, config.n_classes)
        self.stats: StandardizationStats | None = None

    def _init_head(self, rng: np.random.Generator, d_in: int, n_classes: int) -> None:
        self.params["head/W"] = nn.uniform_init(rng, d_in, (d_in, n_classes))
        self.params["head/b"] = np.zeros(n_classes)

    @property
    def layer_names(self) -> set[str]:
        names = {"td", "head"} | {f"lstm{i}" for i in range(len(self.config.lstm_units))}
        if self.config.use_batchnorm:
            names.add("bn")
        return names

    def layer_of(self, param_name: str) -> str:
        return param_name.split("/", 1)[0]

    # ------------------------------------------------------------------
    # forward / backward
    # ------------------------------------------------------------------

    def _forward(self, x: np.ndarray, real: np.ndarray, train: bool,
                 dropout_rng: np.random.Generator | None):
        """Returns (probs, cache). `real` is True on frames that carry data."""
        cfg = self.config
        b, t, f = x.shape
        if f != cfg.feature_dim:
            raise ValueError(f"feature dim {f} does not match net ({cfg.feature_dim})")
        cache: dict = {"x": x, "real": real, "train": train}

        if cfg.use_batchnorm:
            gamma, beta = self.params["bn/gamma"], self.params["bn/beta"]
            flat_real = real.reshape(-1)
            if train:
                rows = x.reshape(-1, f)[flat_real]
                mu = rows.mean(axis=0)
                var = rows.var(axis=0)
                self.bn_running_mean = BN_MOMENTUM * self.bn_running_mean + (1 - BN_MOMENTUM) * mu
                self.bn_running_var = BN_MOMENTUM * self.bn_running_var + (1 - BN_MOMENTUM) * var
            else:
                mu, var = self.bn_running_mean, self.bn_running_var
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            xhat = (x - mu) * inv_std
            xn = gamma * xhat + beta
            cache["bn"] = (xhat, inv_std, mu)
        else:
            xn = x

        td_pre = xn @ self.params["td/W"] + self.params["td/b"]
        a = nn.relu(td_pre)
        cache["xn"], cache["td_pre"] = xn, td_pre

        if train and cfg.dropout > 0 and dropout_rng is not None:
            keep = 1.0 - cfg.dropout
            drop_mask = (dropout_rng.random(a.shape) < keep) / keep
            a = a * drop_mask
            cache["drop_mask"] = drop_mask
        cache["a"] = a

        seq = a
        cache["lstm"] = []
        for i, h_units in enumerate(cfg.lstm_units):
            seq, layer_cache = self._lstm_forward(i, seq, real, h_units)
            cache["lstm"].append(layer_cache)
        h_final = cache["lstm"][-1]["h_final"]

        logits = h_final @ self.params["head/W"] + self.params["head/b"]
        probs = nn.softmax(logits, axis=1)
        none_real = ~real.any(axis=1)
        if none_real.any():
            probs = probs.copy()
            probs[none_real] = 1.0 / cfg.n_classes
        cache["h_final"] = h_final
        return probs, cache

    def _lstm_forward(self, index: int, seq: np.ndarray, real: np.ndarray, h_units: int):
        wx = self.params[f"lstm{index}/Wx"]
        wh = self.params[f"lstm{index}/Wh"]
        bias = self.params[f"lstm{index}/b"]
        b, t, _ = seq.shape
        h = np.zeros((b, h_units))
        c = np.zeros((b, h_units))
        steps = []
        h_seq = np.zeros((b, t, h_units))
        for k in range(t):
            xk = seq[:, k, :]
            z = xk @ wx + h @ wh + bias
            zi, zf, zg, zo = np.split(z, 4, axis=1)
            gi, gf = nn.sigmoid(zi), nn.sigmoid(zf)
            gg, go = np.tanh(zg), nn.sigmoid(zo)
            c_new = gf * c + gi * gg
            hc = np.tanh(c_new)
            h_new = go * hc
            m = real[:, k:k + 1].astype(np.float64)
            steps.append({"x": xk, "h_prev": h, "c_prev": c, "i": gi, "f": gf,
                          "g": gg, "o": go, "hc": hc, "m": m})
            h = m * h_new + (1.0 - m) * h
            c = m * c_new + (1.0 - m) * c
            h_seq[:, k, :] = h
        return h_seq, {"steps": steps, "h_final": h, "index": index}

    def _lstm_backward(self, layer_cache: dict, dh_seq: np.ndarray | None,
                       dh_final: np.ndarray | None):
        index = layer_cache["index"]
        wx = self.params[f"lstm{index}/Wx"]
        wh = self.params[f"lstm{index}/Wh"]
        steps = layer_cache["steps"]
        b, h_units = steps[0]["h_prev"].shape
        t = len(steps)
        d_wx = np.zeros_like(wx)
        d_wh = np.zeros_like(wh)
        d_b = np.zeros_like(self.params[f"lstm{index}/b"])
        dx_seq = np.zeros((b, t, wx.shape[0]))
        dh = dh_final.copy() if dh_final is not None else np.zeros((b, h_units))
        dc = np.zeros((b, h_units))
        for k in reversed(range(t)):
            if dh_seq is not None:
                dh = dh + dh_seq[:, k, :]
            s = steps[k]
            m = s["m"]
            do = dh * s["hc"]
            dc_total = dc + dh * s["o"] * (1.0 - s["hc"] ** 2)
            di = dc_total * s["g"]
            df = dc_total * s["c_prev"]
            dg = dc_total * s["i"]
            dzi = di * s["i"] * (1.0 - s["i"])
            dzf = df * s["f"] * (1.0 - s["f"])
            dzg = dg * (1.0 - s["g"] ** 2)
            dzo = do * s["o"] * (1.0 - s["o"])
            dz = np.concatenate([dzi, dzf, dzg, dzo], axis=1) * m
            d_wx += s["x"].T @ dz
            d_wh += s["h_prev"].T @ dz
            d_b += dz.sum(axis=0)
            dx_seq[:, k, :] = dz @ wx.T
            dh = dz @ wh.T + (1.0 - m) * dh
            dc = m * (dc_total * s["f"]) + (1.0 - m) * dc
        grads = {f"lstm{index}/Wx": d_wx, f"lstm{index}/Wh": d_wh, f"lstm{index}/b": d_b}
        return dx_seq, grads

    def _backward(self, cache: dict, dlogits: np.ndarray) -> dict[str, np.ndarray]:
        cfg = self.config
        grads: dict[str, np.ndarray] = {}
        h_final = cache["h_final"]
        grads["head/W"] = h_final.T @ dlogits
        grads["head/b"] = dlogits.sum(axis=0)
        dh_final = dlogits @ self.params["head/W"].T

        dh_seq = None
        for layer_cache in reversed(cache["lstm"]):
            dh_seq, layer_grads = self._lstm_backward(layer_cache, dh_seq, dh_final)
            dh_final = None
            grads.update(layer_grads)

        da = dh_seq
        if "drop_mask" in cache:
            da = da * cache["drop_mask"]
        dtd_pre = da * nn.relu_grad(cache["td_pre"])
        xn = cache["xn"]
        f = xn.shape[-1]
        grads["td/W"] = xn.reshape(-1, f).T @ dtd_pre.reshape(-1, cfg.td_units)
        grads["td/b"] = dtd_pre.sum(axis=(0, 1))
        dxn = dtd_pre @ self.params["td/W"].T

        if cfg.use_batchnorm:
            # inputs are data, so only gamma/beta gradients are needed
            xhat, _, _ = cache["bn"]
            real = cache["real"].reshape(-1)
            dy = dxn.reshape(-1, f)[real]
            xh = xhat.reshape(-1, f)[real]
            grads["bn/gamma"] = (dy * xh).sum(axis=0)
            grads["bn/beta"] = dy.sum(axis=0)
        return grads

    # ------------------------------------------------------------------
    # public API
    # ------------------------------------------------------------------

    def forward_sequence(self, features: np.ndarray, pad_mask: np.ndarray | None = None
                         ) -> np.ndarray:
        """Class probabilities for one (T, F) sequence or a (B, T, F) batch."""
        x = np.asarray(features, dtype=np.float64)
        single = x.ndim == 2
        if single:
            x = x[None]
        b, t, _ = x.shape
        if pad_mask is None:
            real = np.ones((b, t), dtype=bool)
        else:
            pad = np.asarray(pad_mask, dtype=bool)
            if pad.ndim == 1:
                pad = pad[None]
            real = ~pad
        probs, _ = self._forward(x, real, train=False, dropout_rng=None)
        return probs[0] if single else probs

    def loss_and_grads(self, x: np.ndarray, real: np.ndarray, labels: np.ndarray,
                       dropout_rng: np.random.Generator | None = None,
                       train: bool = True):
        probs, cache = self._forward(x, real, train=train, dropout_rng=dropout_rng)
        b = len(labels)
        eps = 1e-12
        loss = -float(np.mean(np.log(probs[np.arange(b), labels] + eps)))
        dlogits = probs.copy()
        dlogits[np.arange(b), labels] -= 1.0
        dlogits /= b
        grads = self._backward(cache, dlogits)
        return loss, grads, probs

    def min_kink_margin(self, x: np.ndarray, real: np.ndarray) -> float:
        """Smallest |pre-activation| of the rectified layer over real frames."""
        _, cache = self._forward(np.asarray(x, dtype=np.float64), real,
                                 train=True, dropout_rng=None)
        pre = cache["td_pre"][real]
        return float(np.min(np.abs(pre)))

    def frozen_param_names(self, unfrozen_layers: frozenset[str]) -> set[str]:
        return {name for name in self.params if self.layer_of(name) not in unfrozen_layers}

    def clone_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def save(self, path) -> int:
        cfg = self.config
        meta = {
            "embed_dim": cfg.embed_dim, "n_classes": cfg.n_classes,
            "td_units": cfg.td_units, "lstm_units": list(cfg.lstm_units),
            "dropout": cfg.dropout, "use_batchnorm": cfg.use_batchnorm,
            "seed": cfg.seed, "has_stats": self.stats is not None,
        }
        params = dict(self.params)
        params["bn_running_mean"] = self.bn_running_mean
        params["bn_running_var"] = self.bn_running_var
        if self.stats is not None:
            params.update(self.stats.as_params())
        return nn.save_params(path, MODEL_KIND, meta, params)

    @classmethod
    def load(cls, path) -> "GestureNet":
        meta, params = nn.load_params(path, MODEL_KIND)
        config = GestureNetConfig(
            embed_dim=meta["embed_dim"], n_classes=meta["n_classes"],
            td_units=meta["td_units"], lstm_units=tuple(meta["lstm_units"]),
            dropout=meta["dropout"], use_batchnorm=meta["use_batchnorm"],
            seed=meta["seed"],
        )
        net = cls(config)
        for name in net.params:
            net.params[name] = params[name]
        net.bn_running_mean = params["bn_running_mean"]
        net.bn_running_var = params["bn_running_var"]
        if meta.get("has_stats"):
            net.stats = StandardizationStats.from_params(params)
        return net


def swap_head(net: GestureNet, n_classes: int, seed: int = 0) -> GestureNet:
    """Replace the classification head, preserving every other tensor bit-exactly."""
    rng = np.random.default_rng(seed)
    d_in = net.config.lstm_units[-1]
    net.config = replace(net.config, n_classes=n_classes)
    net._init_head(rng, d_in, n_classes)
    return net


def _as_batches(n: int, batch_size: int, order: np.ndarray):
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _accuracy(net: GestureNet, x: np.ndarray, real: np.ndarray, labels: np.ndarray,
              batch_size: int = 64) -> float:
    hits = 0
    for start in range(0, len(x), batch_size):
        probs, _ = net._forward(x[start:start + batch_size], real[start:start + batch_size],
                                train=False, dropout_rng=None)
        hits += int(np.sum(np.argmax(probs, axis=1) == labels[start:start + batch_size]))
    return hits / len(x)


def dataset_arrays(seqs: list[GestureSequence]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack sequences into (X, real_mask, labels) training arrays."""
    x = np.stack([s.features.astype(np.float64) for s in seqs])
    real = np.stack([~s.pad_mask for s in seqs])
    labels = np.array([s.label for s in seqs], dtype=np.int64)
    return x, real, labels


def train_phases(net: GestureNet, train_set, valid_set, schedule: list[Phase],
                 cfg: ClassifierTrainConfig = ClassifierTrainConfig()) -> list[dict]:
    """Run the staged-unfreezing schedule; returns per-phase training curves.

    Each phase gets a fresh optimizer, trains only its unfrozen layers, stops
    early when validation accuracy plateaus, and restores the phase's best
    weights before the next phase starts.
    """
    validate_schedule(schedule, net.layer_names)
    x_train, real_train, y_train = train_set
    x_valid, real_valid, y_valid = valid_set
    if not real_train.any(axis=1).all():
        raise ValueError("training sequences must contain at least one real frame")
    rng = np.random.default_rng(cfg.seed)
    curves = []
    for phase in schedule:
        frozen = frozenset(net.frozen_param_names(phase.unfrozen))
        opt = nn.Adam(lr=cfg.learning_rate, decay=cfg.decay)
        best_acc = -1.0
        best_params = net.clone_params()
        best_running = (net.bn_running_mean.copy(), net.bn_running_var.copy())
        since_best = 0
        history = []
        for epoch in range(phase.max_epochs):
            order = rng.permutation(len(x_train))
            epoch_losses = []
            for idx in _as_batches(len(x_train), cfg.batch_size, order):
                loss, grads, _ = net.loss_and_grads(
                    x_train[idx], real_train[idx], y_train[idx], dropout_rng=rng)
                if not np.isfinite(loss) or loss > DIVERGENCE_LIMIT:
                    raise nn.TrainingDivergedError(
                        f"{phase.name}: loss {loss:.3g} at epoch {epoch}")
                opt.step(net.params, grads, skip=frozen)
                epoch_losses.append(loss)
            acc = _accuracy(net, x_valid, real_valid, y_valid)
            history.append({"epoch": epoch, "train_loss": float(np.mean(epoch_losses)),
                            "valid_accuracy": acc})
            if acc > best_acc:
                best_acc = acc
                best_params = net.clone_params()
                best_running = (net.bn_running_mean.copy(), net.bn_running_var.copy())
                since_best = 0
            else:
                since_best += 1
                if since_best > phase.patience:
                    break
        net.params = best_params
        net.bn_running_mean, net.bn_running_var = best_running
        curves.append({"phase": phase.name, "unfrozen": sorted(phase.unfrozen),
                       "best_valid_accuracy": best_acc, "epochs": history})
    return curves


def predict(net: GestureNet, features: np.ndarray, pad_mask: np.ndarray | None = None,
            ) -> tuple[int, float, float]:
    """Classify one raw feature sequence; returns (label, probability, latency_ms).

    Sequences are length-fixed and standardized with the model's stored stats
    before the forward pass.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] != SEQUENCE_LENGTH or pad_mask is None:
        features, pad_mask = fix_length(features)
    if net.stats is not None:
        real = ~np.asarray(pad_mask, dtype=bool)
        scaled = (features[real] - net.stats.mean) / net.stats.std
        scaled[:, net.stats.constant] = features[real][:, net.stats.constant]
        features = features.copy()
        features[real] = scaled
    started = time.perf_counter()
    probs = net.forward_sequence(features, pad_mask)
    latency_ms = (time.perf_counter() - started) * 1000.0
    label = int(np.argmax(probs))
    return label, float(probs[label]), latency_ms


def freeze_hash(net: GestureNet, unfrozen_layers: frozenset[str]) -> str:
    """Byte-level hash over every frozen tensor, for freeze-contract checks."""
    names = sorted(net.frozen_param_names(unfrozen_layers))
    return stable_hash(*(net.params[n] for n in names)) if names else ""
