"""Command-line pipeline: synth-gen, filter, featurize, train-depth,
eval-depth, prepare, train, eval, predict, inspect.

Every stage reads and writes files, so each boundary can be tested and any
stage rerun in isolation. Flags may also be supplied through a JSON config
file (--config); explicit command-line flags win, unknown config keys are
rejected, and the resolved configuration hash is logged for reproducibility.
Artifacts depend only on the resolved configuration, never on wall-clock
state, so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import multiprocessing
import sys
import time
from pathlib import Path

import numpy as np

from . import attention, classifier, depth, embed, features, filtering, sequences, synth
from .core import (
    L_ELBOW, L_WRIST, NECK, R_ELBOW, R_WRIST,
    GestureSequence,
    read_container,
    read_frame_archive,
    read_keypoint_stream,
    write_frame_archive,
    write_keypoint_stream,
    VideoSample,
)

log = logging.getLogger("stadnet")


class UsageError(ValueError):
    """Bad invocation: unknown config key, missing input, malformed flag."""


# ---------------------------------------------------------------------------
# featurize internals (shared with tests)
# ---------------------------------------------------------------------------

HAND_FOREARM = {"left": (L_ELBOW, L_WRIST), "right": (R_ELBOW, R_WRIST)}
MIN_DEPTH = 1e-3


def hand_chain(frame, side: str) -> np.ndarray:
    """The 6-point arm-hand chain used by the hand depth estimators."""
    body_idx = features.HAND_CHAIN_BODY[side]
    hand = frame.left_hand if side == "left" else frame.right_hand
    rows = [frame.body[i] for i in body_idx]
    rows += [hand[i] for i in features.HAND_CHAIN_POINTS]
    return np.stack(rows)


class GroundTruthDepths:
    """Per-frame (neck, left, right) relative depths keyed by (source, frame)."""

    def __init__(self, table: dict[tuple[str, int], tuple[float, float, float]]):
        self.table = table

    @classmethod
    def read(cls, path) -> "GroundTruthDepths":
        table = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                table[(rec["src"], int(rec["k"]))] = (rec["dn"], rec["dl"], rec["dr"])
        return cls(table)

    @staticmethod
    def write(path, entries) -> None:
        """entries: iterable of (source_id, frame_index, (dn, dl, dr))."""
        with open(path, "w", encoding="utf-8") as fh:
            for src, k, (dn, dl, dr) in entries:
                fh.write(json.dumps({"src": src, "k": int(k), "dn": float(dn),
                                     "dl": float(dl), "dr": float(dr)}) + "\n")

    def depths(self, sample, frame, *_pose_vectors) -> tuple[float, float, float]:
        key = (sample.source_id, frame.frame_index)
        if key not in self.table:
            raise UsageError(f"no ground-truth depth for {key}")
        return self.table[key]


class ModelDepths:
    """Depths from the trained estimators, clamped away from zero."""

    def __init__(self, f_neck: depth.DepthNet, f_left: depth.DepthNet | None,
                 f_right: depth.DepthNet | None):
        self.f_neck = f_neck
        self.f_left = f_left
        self.f_right = f_right

    def depths(self, sample, frame, x_body, x_left, x_right):
        dn = max(self.f_neck.forward(x_body), MIN_DEPTH)
        dl = max(self.f_left.forward(x_left), MIN_DEPTH) if self.f_left is not None else dn
        dr = max(self.f_right.forward(x_right), MIN_DEPTH) if self.f_right is not None else dn
        return dn, dl, dr


def featurize_sample(sample: VideoSample, embedder, depth_source,
                     kappa: float = attention.KAPPA_DEFAULT,
                     ) -> tuple[np.ndarray, dict]:
    """Turn one filtered video into per-frame fused feature rows.

    Frames whose neck cannot be recovered are dropped (counted in the meta);
    velocities and accelerations are computed over the kept frames.
    """
    fps = sample.fps
    normalized = []
    hand_results: dict[str, list] = {"left": [], "right": []}
    dropped = 0
    for frame in sample.frames:
        if np.isnan(frame.body[NECK, 0]):
            dropped += 1
            continue
        x_body = features.augment_pose(frame.body).values
        x_left = features.augment_hand(hand_chain(frame, "left")).values
        x_right = features.augment_hand(hand_chain(frame, "right")).values
        dn, dl, dr = depth_source.depths(sample, frame, x_body, x_left, x_right)
        normalized.append(attention.normalize_skeleton(frame.body, dn).joints)
        for side, keypoints, d_hand in (("left", frame.left_hand, dl),
                                        ("right", frame.right_hand, dr)):
            center = attention.hand_center(keypoints)
            if center is None:
                result = embedder.embed(None, None, source_id=sample.source_id,
                                        frame_index=frame.frame_index, side=side)
            else:
                elbow_i, wrist_i = HAND_FOREARM[side]
                box = attention.hand_box(center, d_hand,
                                         (frame.body[elbow_i], frame.body[wrist_i]),
                                         side_tag=side, kappa=kappa)
                result = embedder.embed(keypoints, box, source_id=sample.source_id,
                                        frame_index=frame.frame_index, side=side)
            hand_results[side].append(result.embedding)
    if not normalized:
        raise UsageError(f"{sample.source_id}: no usable frames after featurizing")
    seq = np.stack(normalized)
    rows = []
    for k in range(len(seq)):
        x_dyn = features.dynamic_pose(seq, k, fps).values
        rows.append(classifier.fuse(hand_results["left"][k], x_dyn,
                                    hand_results["right"][k]))
    meta = {
        "dropped_frames": dropped,
        "short_derivative_window": len(seq) < 5,
        "embed_dim": len(hand_results["left"][0]),
        "kappa": kappa,
    }
    return np.stack(rows).astype(np.float32), meta


def build_depth_pairs(pairs: list[tuple[VideoSample, np.ndarray]]
                      ) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """(pose vector, depth) training rows for the three estimators."""
    out = {"neck": ([], []), "left": ([], []), "right": ([], [])}
    for sample, depths in pairs:
        for i, frame in enumerate(sample.frames):
            dn, dl, dr = depths[i]
            if not np.isnan(frame.body[NECK, 0]):
                try:
                    out["neck"][0].append(features.augment_pose(frame.body).values)
                    out["neck"][1].append(dn)
                except features.DegenerateInputError:
                    pass
            for side, d_hand in (("left", dl), ("right", dr)):
                chain = hand_chain(frame, side)
                if np.isnan(chain[:, 0]).any():
                    continue
                out[side][0].append(features.augment_hand(chain).values)
                out[side][1].append(d_hand)
    return {k: (np.array(x), np.array(d)) for k, (x, d) in out.items()}


def write_depth_pairs(path, x: np.ndarray, d: np.ndarray, which: str) -> int:
    block = np.concatenate([x, d[:, None]], axis=1).astype(np.float32)
    return write_frame_archive(block, path, extra={"pairs": which})


def read_depth_pairs(path) -> tuple[np.ndarray, np.ndarray]:
    block, _header = read_frame_archive(path)
    return block[:, :-1].astype(np.float64), block[:, -1].astype(np.float64)


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------

def resolve_config(defaults: dict, cli_args: dict, config_path: str | None,
                   required: tuple[str, ...]) -> dict:
    merged = dict(defaults)
    if config_path:
        with open(config_path, "r", encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_cfg)
    merged.update({k: v for k, v in cli_args.items() if v is not None})
    missing = [k for k in required if merged.get(k) is None]
    if missing:
        raise UsageError(f"missing required options: {sorted(missing)}")
    return merged


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def parallel_map(fn, items, jobs: int):
    """Apply fn per item, optionally across processes; output order is the
    input order either way, so results never depend on the job count."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with multiprocessing.Pool(processes=min(jobs, len(items))) as pool:
        return pool.map(fn, items)


def _write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

SYNTH_DEFAULTS = {"classes": 8, "per_class": 25, "dropout": 0.05, "jitter": 1.5,
                  "seed": 7, "fps": 30.0, "out": None}


def cmd_synth_gen(cfg: dict) -> int:
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    noise = synth.NoiseParams(dropout=cfg["dropout"], jitter=cfg["jitter"])
    data, manifest = synth.generate_dataset(cfg["per_class"], cfg["classes"],
                                            cfg["seed"], noise=noise, fps=cfg["fps"])
    write_keypoint_stream([s for s, _ in data], out_dir / "stream.jsonl")
    entries = []
    for sample, depths in data:
        for i, frame in enumerate(sample.frames):
            entries.append((sample.source_id, frame.frame_index, depths[i]))
    GroundTruthDepths.write(out_dir / "depths.jsonl", entries)
    _write_json(out_dir / "manifest.json", manifest)
    log.info("wrote %d samples to %s", len(data), out_dir)
    return 0


FILTER_DEFAULTS = {"in": None, "out": None, "window": 7, "rbar": 7, "sigma": "auto",
                   "jobs": 1}


class _FilterWorker:
    def __init__(self, params):
        self.params = params

    def __call__(self, sample):
        return filtering.filter_video(sample, self.params)


def cmd_filter(cfg: dict) -> int:
    sigma = None if cfg["sigma"] in ("auto", None) else float(cfg["sigma"])
    params = filtering.FilterParams(window=int(cfg["window"]), r_bar=int(cfg["rbar"]),
                                    sigma=sigma)
    samples = read_keypoint_stream(cfg["in"])
    results = parallel_map(_FilterWorker(params), samples, int(cfg["jobs"]))
    kept = []
    for sample, result in zip(samples, results):
        if result.too_short:
            log.warning("%s: shorter than the window (%d frames), dropped",
                        sample.source_id, len(sample.frames))
        if result.sample.frames:
            kept.append(result.sample)
    write_keypoint_stream(kept, cfg["out"])
    log.info("filtered %d/%d samples to %s", len(kept), len(samples), cfg["out"])
    return 0


FEATURIZE_DEFAULTS = {
    "in": None, "out_dir": None, "manifest": None, "depths": None,
    "use_gt_depth": False, "depth_model_neck": None, "depth_model_left": None,
    "depth_model_right": None, "embedder": "geometric", "embed_dim": 64,
    "embed_seed": 0, "external_embeddings": None, "emit_depth_pairs": None,
    "kappa": attention.KAPPA_DEFAULT, "fps": None, "jobs": 1,
}


class _FeaturizeWorker:
    def __init__(self, embedder, depth_source, kappa):
        self.embedder = embedder
        self.depth_source = depth_source
        self.kappa = kappa

    def __call__(self, sample):
        return featurize_sample(sample, self.embedder, self.depth_source,
                                kappa=self.kappa)


def _make_embedder(cfg: dict):
    if cfg["embedder"] == "geometric":
        return embed.GeometricEmbedder(dim=int(cfg["embed_dim"]), seed=int(cfg["embed_seed"]))
    if cfg["embedder"] == "external":
        if not cfg["external_embeddings"]:
            raise UsageError("external embedder needs --external-embeddings")
        return embed.ExternalEmbeddingProvider(cfg["external_embeddings"])
    raise UsageError(f"unknown embedder kind {cfg['embedder']!r}")


def cmd_featurize(cfg: dict) -> int:
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = read_keypoint_stream(cfg["in"])
    labels: dict[str, int] = {}
    if cfg["manifest"]:
        with open(cfg["manifest"], "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        labels = {e["source_id"]: e["label"] for e in manifest["samples"]}

    gt = GroundTruthDepths.read(cfg["depths"]) if cfg["depths"] else None
    if cfg["use_gt_depth"]:
        if gt is None:
            raise UsageError("--use-gt-depth needs --depths")
        depth_source = gt
    else:
        if not cfg["depth_model_neck"]:
            raise UsageError("featurize needs --use-gt-depth or --depth-model-neck")
        depth_source = ModelDepths(
            depth.DepthNet.load(cfg["depth_model_neck"]),
            depth.DepthNet.load(cfg["depth_model_left"]) if cfg["depth_model_left"] else None,
            depth.DepthNet.load(cfg["depth_model_right"]) if cfg["depth_model_right"] else None,
        )
    embedder = _make_embedder(cfg)

    if cfg["fps"]:
        samples = [
            VideoSample(s.source_id,
                        [dataclasses.replace(f, fps=float(cfg["fps"])) for f in s.frames],
                        label=s.label)
            for s in samples
        ]
    worker = _FeaturizeWorker(embedder, depth_source, float(cfg["kappa"]))
    results = parallel_map(worker, samples, int(cfg["jobs"]))
    for sample, (rows, meta) in zip(samples, results):
        label = labels.get(sample.source_id)
        write_frame_archive(rows, out_dir / f"{sample.source_id}.stad", label=label,
                            source_id=sample.source_id, fps=sample.fps, extra=meta)
    log.info("featurized %d samples into %s", len(samples), out_dir)

    if cfg["emit_depth_pairs"]:
        if gt is None:
            raise UsageError("--emit-depth-pairs needs --depths")
        pair_dir = Path(cfg["emit_depth_pairs"])
        pair_dir.mkdir(parents=True, exist_ok=True)
        with_depths = []
        for sample in samples:
            depths = np.array([gt.table[(sample.source_id, f.frame_index)]
                               for f in sample.frames])
            with_depths.append((sample, depths))
        built = build_depth_pairs(with_depths)
        for which, (x, d) in built.items():
            write_depth_pairs(pair_dir / f"pairs_{which}.stad", x, d, which)
        log.info("wrote depth-training pairs to %s", pair_dir)
    return 0


TRAIN_DEPTH_DEFAULTS = {"which": None, "data": None, "out": None, "lr": 1e-3,
                        "decay": 1e-3, "batch_size": 64, "epochs": 200, "seed": 0}


def cmd_train_depth(cfg: dict) -> int:
    if cfg["which"] not in ("neck", "left", "right"):
        raise UsageError("--which must be neck, left, or right")
    x, d = read_depth_pairs(cfg["data"])
    sizes = depth.BODY_LAYER_SIZES if x.shape[1] == features.BODY_DIM else depth.HAND_LAYER_SIZES
    net = depth.DepthNet(sizes=sizes, seed=int(cfg["seed"]))
    train_cfg = depth.TrainConfig(learning_rate=cfg["lr"], decay=cfg["decay"],
                                  batch_size=int(cfg["batch_size"]),
                                  epochs=int(cfg["epochs"]), seed=int(cfg["seed"]))
    net, losses = depth.train(net, x, d, train_cfg)
    net.meta["which"] = cfg["which"]
    net.save(cfg["out"])
    log.info("trained %s estimator on %d pairs, final loss %.3g",
             cfg["which"], len(x), losses[-1])
    return 0


EVAL_DEPTH_DEFAULTS = {"model": None, "data": None, "out": None}


def cmd_eval_depth(cfg: dict) -> int:
    net = depth.DepthNet.load(cfg["model"])
    x, d = read_depth_pairs(cfg["data"])
    mse = depth.evaluate_mse(net, x, d)
    payload = {"mse": mse, "count": len(x), "which": net.meta.get("which")}
    print(json.dumps(payload, sort_keys=True))
    if cfg["out"]:
        _write_json(cfg["out"], payload)
    return 0


PREPARE_DEFAULTS = {"in": None, "out": None, "split": "0.7/0.15/0.15", "seed": 0}


def cmd_prepare(cfg: dict) -> int:
    in_dir = Path(cfg["in"])
    paths = sorted(in_dir.glob("*.stad"))
    if not paths:
        raise UsageError(f"no feature archives under {in_dir}")
    raw_sequences = []
    for path in paths:
        rows, header = read_frame_archive(path)
        feats, pad_mask = sequences.fix_length(rows)
        raw_sequences.append(GestureSequence(
            features=feats, label=header.get("label"), pad_mask=pad_mask,
            source_id=header.get("source_id", path.stem)))
    fractions = tuple(float(v) for v in str(cfg["split"]).split("/"))
    if len(fractions) != 3:
        raise UsageError("--split must have three components")
    train_set, valid_set, test_set = sequences.stratified_split(
        raw_sequences, fractions, seed=int(cfg["seed"]))
    stats = sequences.fit_standardization(train_set)
    splits = {
        "train": sequences.standardize(train_set, stats),
        "valid": sequences.standardize(valid_set, stats),
        "test": sequences.standardize(test_set, stats),
    }
    meta = {"split": cfg["split"], "seed": cfg["seed"], "source_count": len(raw_sequences)}
    sequences.save_dataset(cfg["out"], splits, stats=stats, meta=meta)
    log.info("dataset: train=%d valid=%d test=%d dim=%d -> %s",
             len(train_set), len(valid_set), len(test_set),
             raw_sequences[0].dim, cfg["out"])
    return 0


TRAIN_DEFAULTS = {"data": None, "out": None, "preset": "desk", "phases": "default",
                  "seed": 0, "max_epochs": 40, "patience": 6, "batch_size": 16,
                  "lr": 1e-3, "decay": 1e-3, "embed_dim": 64, "curves_out": None}


def cmd_train(cfg: dict) -> int:
    splits, stats, _meta = sequences.load_dataset(cfg["data"])
    labels = sorted({s.label for s in splits["train"]})
    n_classes = max(labels) + 1
    dim = splits["train"][0].dim
    if cfg["preset"] == "desk":
        embed_dim = int(cfg["embed_dim"])
        net_cfg = classifier.desk_config(n_classes, embed_dim=embed_dim, seed=int(cfg["seed"]))
    elif cfg["preset"] == "paper":
        net_cfg = classifier.paper_parity_config(n_classes, seed=int(cfg["seed"]))
    else:
        raise UsageError(f"unknown preset {cfg['preset']!r}")
    if net_cfg.feature_dim != dim:
        raise UsageError(
            f"dataset feature dim {dim} does not match preset fusion dim "
            f"{net_cfg.feature_dim}; check --embed-dim")
    if cfg["phases"] != "default":
        raise UsageError("only the default phase schedule is available")
    net = classifier.GestureNet(net_cfg)
    net.stats = stats
    schedule = classifier.default_schedule(
        n_blocks=len(net_cfg.lstm_units), max_epochs=int(cfg["max_epochs"]),
        patience=int(cfg["patience"]), include_batchnorm=net_cfg.use_batchnorm)
    train_cfg = classifier.ClassifierTrainConfig(
        learning_rate=cfg["lr"], decay=cfg["decay"],
        batch_size=int(cfg["batch_size"]), seed=int(cfg["seed"]))
    curves = classifier.train_phases(
        net, classifier.dataset_arrays(splits["train"]),
        classifier.dataset_arrays(splits["valid"]), schedule, train_cfg)
    net.save(cfg["out"])
    if cfg["curves_out"]:
        _write_json(cfg["curves_out"], {"phases": curves})
    log.info("trained %s preset, best valid accuracy %.4f -> %s", cfg["preset"],
             curves[-1]["best_valid_accuracy"], cfg["out"])
    return 0


EVAL_DEFAULTS = {"model": None, "data": None, "split": "test", "out_prefix": None}


def cmd_eval(cfg: dict) -> int:
    net = classifier.GestureNet.load(cfg["model"])
    splits, _stats, _meta = sequences.load_dataset(cfg["data"])
    if cfg["split"] not in splits:
        raise UsageError(f"dataset has no split {cfg['split']!r}")
    seqs = splits[cfg["split"]]
    x, real, labels = classifier.dataset_arrays(seqs)
    probs = net.forward_sequence(x, ~real)
    predicted = np.argmax(probs, axis=1)
    accuracy = float(np.mean(predicted == labels))
    n = net.config.n_classes
    confusion = np.zeros((n, n), dtype=np.int64)
    for truth, guess in zip(labels, predicted):
        confusion[truth, guess] += 1
    payload = {"accuracy": accuracy, "count": len(seqs), "split": cfg["split"]}
    print(json.dumps(payload, sort_keys=True))
    if cfg["out_prefix"]:
        _write_json(f"{cfg['out_prefix']}_metrics.json", payload)
        with open(f"{cfg['out_prefix']}_confusion.csv", "w", encoding="utf-8") as fh:
            fh.write("truth\\pred," + ",".join(str(i) for i in range(n)) + "\n")
            for i in range(n):
                fh.write(f"{i}," + ",".join(str(v) for v in confusion[i]) + "\n")
    return 0


PREDICT_DEFAULTS = {"model": None, "in": None}


def cmd_predict(cfg: dict) -> int:
    net = classifier.GestureNet.load(cfg["model"])
    rows, header = read_frame_archive(cfg["in"])
    label, probability, latency_ms = classifier.predict(net, rows.astype(np.float64))
    print(json.dumps({"label": label, "probability": probability,
                      "latency_ms": latency_ms,
                      "source_id": header.get("source_id")}, sort_keys=True))
    return 0


INSPECT_DEFAULTS = {"in": None}


def cmd_inspect(cfg: dict) -> int:
    header, payload = read_container(cfg["in"])
    summary = {k: v for k, v in header.items()
               if k not in ("pad_mask",) and not isinstance(v, (list, dict))}
    summary["payload_bytes"] = len(payload)
    for key in ("splits", "sections", "meta"):
        if key in header:
            value = header[key]
            summary[key] = sorted(value) if isinstance(value, dict) else len(value)
    print(json.dumps(summary, sort_keys=True, default=str))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

COMMANDS = {
    "synth-gen": (SYNTH_DEFAULTS, ("out",), cmd_synth_gen),
    "filter": (FILTER_DEFAULTS, ("in", "out"), cmd_filter),
    "featurize": (FEATURIZE_DEFAULTS, ("in", "out_dir"), cmd_featurize),
    "train-depth": (TRAIN_DEPTH_DEFAULTS, ("which", "data", "out"), cmd_train_depth),
    "eval-depth": (EVAL_DEPTH_DEFAULTS, ("model", "data"), cmd_eval_depth),
    "prepare": (PREPARE_DEFAULTS, ("in", "out"), cmd_prepare),
    "train": (TRAIN_DEFAULTS, ("data", "out"), cmd_train),
    "eval": (EVAL_DEFAULTS, ("model", "data"), cmd_eval),
    "predict": (PREDICT_DEFAULTS, ("model", "in"), cmd_predict),
    "inspect": (INSPECT_DEFAULTS, ("in",), cmd_inspect),
}

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stadnet",
        description="Gesture-recognition pipeline over 2D keypoint streams.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (defaults, _required, _runner) in COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config file")
        for key, default in defaults.items():
            flag = "--" + key.replace("_", "-")
            if isinstance(default, bool):
                p.add_argument(flag, action="store_const", const=True, default=None)
            else:
                p.add_argument(flag, default=None)
    return parser


def _coerce(cfg: dict, defaults: dict) -> dict:
    """Coerce string CLI values to the default's type where one is known."""
    out = dict(cfg)
    for key, default in defaults.items():
        value = out.get(key)
        if value is None or isinstance(value, type(default)) or default is None:
            continue
        if isinstance(default, bool):
            out[key] = bool(value)
        elif isinstance(default, int):
            out[key] = int(value)
        elif isinstance(default, float):
            out[key] = float(value)
    return out


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    parser = build_parser()
    args = parser.parse_args(argv)
    defaults, required, runner = COMMANDS[args.command]
    cli_values = {k: v for k, v in vars(args).items()
                  if k not in ("command", "config")}
    try:
        cfg = resolve_config(defaults, cli_values, args.config, required)
        cfg = _coerce(cfg, defaults)
        log.info("%s config hash %s", args.command, config_hash(cfg))
        started = time.perf_counter()
        code = runner(cfg)
        log.info("%s finished in %.2fs", args.command, time.perf_counter() - started)
        return code
    except UsageError as exc:
        print(f"stadnet {args.command}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - one-line diagnostic contract
        print(f"stadnet {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
