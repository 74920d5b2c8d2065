"""Train-ready data formulation: fixed-length sequences, label grouping,
feature standardization, and the dataset container.

Sequences are padded or trimmed symmetrically to SEQUENCE_LENGTH frames; when
the adjustment is odd, padding puts the extra zero frame at the back and
trimming removes the extra frame from the front. Standardization statistics
are fit over non-padded frames of the training split only, and padded frames
are never rescaled.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .core import GestureSequence, SEQUENCE_LENGTH, write_container, read_container, ArchiveError

STD_FLOOR = 1e-8


def fix_length(frames: np.ndarray, target: int = SEQUENCE_LENGTH
               ) -> tuple[np.ndarray, np.ndarray]:
    """Pad or trim a (N, dim) block to target frames.

    Returns (features, pad_mask) where pad_mask is True on padding frames.
    """
    frames = np.asarray(frames)
    if frames.ndim != 2 or len(frames) == 0:
        raise ValueError("frames must be a non-empty (N, dim) array")
    n = len(frames)
    if n == target:
        return frames.copy(), np.zeros(target, dtype=bool)
    if n < target:
        front = (target - n) // 2
        back = target - n - front
        out = np.concatenate([
            np.zeros((front, frames.shape[1]), dtype=frames.dtype),
            frames,
            np.zeros((back, frames.shape[1]), dtype=frames.dtype),
        ])
        mask = np.zeros(target, dtype=bool)
        mask[:front] = True
        if back:
            mask[-back:] = True
        return out, mask
    front = -(-(n - target) // 2)  # ceil; extra removal at the front
    return frames[front:front + target].copy(), np.zeros(target, dtype=bool)


@dataclass(eq=False)
class StandardizationStats:
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray  # True where the feature had ~zero variance

    @property
    def stats_id(self) -> str:
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(self.mean, dtype="<f8").tobytes())
        digest.update(np.ascontiguousarray(self.std, dtype="<f8").tobytes())
        digest.update(np.ascontiguousarray(self.constant).tobytes())
        return digest.hexdigest()[:16]

    def as_params(self) -> dict[str, np.ndarray]:
        return {"stats_mean": self.mean, "stats_std": self.std,
                "stats_constant": self.constant.astype(np.float64)}

    @classmethod
    def from_params(cls, params: dict[str, np.ndarray]) -> "StandardizationStats":
        return cls(mean=params["stats_mean"], std=params["stats_std"],
                   constant=params["stats_constant"].astype(bool))


def fit_standardization(sequences: list[GestureSequence]) -> StandardizationStats:
    """Per-feature mean/std over the non-padded frames of the given split."""
    rows = [seq.features[~seq.pad_mask].astype(np.float64) for seq in sequences]
    data = np.concatenate(rows, axis=0)
    if len(data) == 0:
        raise ValueError("no real frames to fit on")
    mean = data.mean(axis=0)
    std = data.std(axis=0)
    constant = std <= STD_FLOOR
    return StandardizationStats(mean=mean, std=np.where(constant, 1.0, std),
                                constant=constant)


def standardize(sequences: list[GestureSequence], stats: StandardizationStats
                ) -> list[GestureSequence]:
    """Apply stats to non-padded frames; constant features pass through."""
    out = []
    for seq in sequences:
        if seq.dim != stats.mean.shape[0]:
            raise ValueError(
                f"feature dim {seq.dim} does not match stats ({stats.mean.shape[0]})"
            )
        feats = seq.features.astype(np.float64)
        real = ~seq.pad_mask
        scaled = (feats[real] - stats.mean) / stats.std
        scaled[:, stats.constant] = feats[real][:, stats.constant]
        feats[real] = scaled
        out.append(GestureSequence(
            features=feats.astype(np.float32), label=seq.label,
            pad_mask=seq.pad_mask.copy(), source_id=seq.source_id,
            stats_id=stats.stats_id,
        ))
    return out


def sort_by_label(samples: list[GestureSequence]) -> dict[int, list[GestureSequence]]:
    """Stable grouping by label; insertion order of groups follows first sight."""
    groups: dict[int, list[GestureSequence]] = {}
    for s in samples:
        if s.label is None:
            raise ValueError(f"sample {s.source_id!r} has no label")
        groups.setdefault(s.label, []).append(s)
    return groups


def top_k_labels(groups: dict[int, list], k: int) -> list[int]:
    """The k most frequent labels, ties broken by smaller label id."""
    ranked = sorted(groups.items(), key=lambda kv: (-len(kv[1]), kv[0]))
    return [label for label, _ in ranked[:k]]


def stratified_split(samples: list[GestureSequence], fractions: tuple[float, float, float],
                     seed: int) -> tuple[list, list, list]:
    """Deterministic per-label split into train/valid/test.

    `fractions` holds either proportions (all <= 1, remainder goes to test) or
    absolute per-class counts (values > 1).
    """
    groups = sort_by_label(samples)
    rng = np.random.default_rng(seed)
    by_count = any(f > 1.0 for f in fractions)
    splits: tuple[list, list, list] = ([], [], [])
    for label in sorted(groups):
        group = groups[label]
        order = rng.permutation(len(group))
        if by_count:
            n_train, n_valid, n_test = (int(f) for f in fractions)
        else:
            n_train = int(round(fractions[0] * len(group)))
            n_valid = int(round(fractions[1] * len(group)))
            n_test = len(group) - n_train - n_valid
        if n_train + n_valid + n_test > len(group):
            raise ValueError(
                f"label {label}: split needs {n_train + n_valid + n_test} samples, "
                f"have {len(group)}"
            )
        bounds = (0, n_train, n_train + n_valid, n_train + n_valid + n_test)
        for part, lo, hi in zip(splits, bounds, bounds[1:]):
            part.extend(group[i] for i in sorted(order[lo:hi]))
    return splits


DATASET_KIND = "DATASET"


def save_dataset(path, splits: dict[str, list[GestureSequence]],
                 stats: StandardizationStats | None = None,
                 meta: dict | None = None) -> int:
    """Serialize split sequences plus standardization stats into one file."""
    header: dict = {"kind": DATASET_KIND, "splits": {}, "meta": meta or {}}
    chunks: list[bytes] = []
    offset = 0
    dim = None
    for name, seqs in splits.items():
        entry = {"labels": [], "sources": [], "pad_masks": [], "offset": offset,
                 "count": len(seqs)}
        for seq in seqs:
            if dim is None:
                dim = seq.dim
            elif seq.dim != dim:
                raise ValueError("mixed feature dims in dataset")
            entry["labels"].append(seq.label)
            entry["sources"].append(seq.source_id)
            entry["pad_masks"].append([int(v) for v in seq.pad_mask])
            raw = seq.features.astype("<f4").tobytes()
            chunks.append(raw)
            offset += len(raw)
        header["splits"][name] = entry
    header["dim"] = dim
    header["frames"] = SEQUENCE_LENGTH
    if stats is not None:
        header["stats"] = {
            "mean": [float(v) for v in stats.mean],
            "std": [float(v) for v in stats.std],
            "constant": [int(v) for v in stats.constant],
            "stats_id": stats.stats_id,
        }
    return write_container(path, header, b"".join(chunks))


def load_dataset(path) -> tuple[dict[str, list[GestureSequence]], StandardizationStats | None, dict]:
    header, payload = read_container(path)
    if header.get("kind") != DATASET_KIND:
        raise ArchiveError(f"{path}: not a dataset (kind={header.get('kind')!r})")
    dim = header["dim"]
    frames = header["frames"]
    stats = None
    if "stats" in header:
        s = header["stats"]
        stats = StandardizationStats(
            mean=np.array(s["mean"], dtype=np.float64),
            std=np.array(s["std"], dtype=np.float64),
            constant=np.array(s["constant"], dtype=bool),
        )
    splits: dict[str, list[GestureSequence]] = {}
    block = frames * dim * 4
    for name, entry in header["splits"].items():
        seqs = []
        for i in range(entry["count"]):
            start = entry["offset"] + i * block
            feats = np.frombuffer(payload, dtype="<f4", count=frames * dim, offset=start)
            seqs.append(GestureSequence(
                features=feats.reshape(frames, dim).copy(),
                label=entry["labels"][i],
                pad_mask=np.array(entry["pad_masks"][i], dtype=bool),
                source_id=entry["sources"][i],
                stats_id=header.get("stats", {}).get("stats_id"),
            ))
        splits[name] = seqs
    return splits, stats, header.get("meta", {})
