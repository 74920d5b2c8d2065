"""Per-hand embedding providers.

The geometric provider box-normalizes the 21 hand keypoints (translate by the
crop center, divide by the side, rotate against the crop orientation) and
expands them through a fixed seeded random-feature map, so the embedding is
invariant to where the crop sits in the image and how it is rotated. A linear
softmax head on top yields per-frame static-class probabilities. The external
provider serves precomputed embeddings keyed by (source_id, frame, side) for
users who bring their own hand encoder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import HAND_POINTS, write_container, read_container, ArchiveError
from .attention import HandBox
from . import nn

STATIC_CLASSES = 10
EMBED_KIND = "EMB"


@dataclass(eq=False)
class EmbedResult:
    embedding: np.ndarray      # (dim,)
    probabilities: np.ndarray  # (STATIC_CLASSES,), sums to 1
    missing: bool


class GeometricEmbedder:
    """Seeded random-feature embedding of box-normalized hand keypoints."""

    kind = "geometric"

    def __init__(self, dim: int = 64, seed: int = 0, n_classes: int = STATIC_CLASSES):
        self.dim = int(dim)
        self.seed = int(seed)
        self.n_classes = int(n_classes)
        rng = np.random.default_rng(seed)
        raw_dim = 2 * HAND_POINTS
        self.projection = rng.normal(0.0, 1.0, size=(self.dim, raw_dim))
        self.phase = rng.uniform(0.0, 2.0 * math.pi, size=self.dim)
        self.head_w = nn.uniform_init(rng, self.dim, (self.n_classes, self.dim))
        self.head_b = np.zeros(self.n_classes)

    def _uniform(self) -> np.ndarray:
        return np.full(self.n_classes, 1.0 / self.n_classes)

    def embed(self, keypoints: np.ndarray | None, box: HandBox | None,
              **_context) -> EmbedResult:
        if keypoints is None or box is None or box.side <= 0:
            return EmbedResult(np.zeros(self.dim), self._uniform(), missing=True)
        keypoints = np.asarray(keypoints, dtype=np.float64)
        present = ~np.isnan(keypoints[:, 0])
        if not present.any():
            return EmbedResult(np.zeros(self.dim), self._uniform(), missing=True)
        centered = (keypoints - np.array([box.center.x, box.center.y])) / box.side
        c, s = math.cos(-box.orientation), math.sin(-box.orientation)
        rot = np.array([[c, -s], [s, c]])
        normalized = centered @ rot.T
        normalized[~present] = 0.0
        v = normalized.reshape(-1)
        e = math.sqrt(2.0 / self.dim) * np.cos(self.projection @ v + self.phase)
        p = nn.softmax(self.head_w @ e + self.head_b)
        return EmbedResult(e, p, missing=False)


def write_embedding_file(path, dim: int,
                         entries: dict[tuple[str, int, str], np.ndarray]) -> int:
    """Serialize precomputed embeddings keyed by (source_id, frame, side)."""
    keys = sorted(entries)
    rows = []
    for key in keys:
        vec = np.asarray(entries[key], dtype=np.float32)
        if vec.shape != (dim,):
            raise ValueError(f"embedding for {key} has shape {vec.shape}, expected ({dim},)")
        rows.append(vec)
    payload = np.stack(rows).astype("<f4").tobytes() if rows else b""
    header = {
        "kind": EMBED_KIND,
        "dim": int(dim),
        "keys": [[src, int(frame), side] for (src, frame, side) in keys],
    }
    return write_container(path, header, payload)


class ExternalEmbeddingProvider:
    """Serves embeddings from a file; unknown keys yield a flagged zero vector."""

    kind = "external-file"

    def __init__(self, path, n_classes: int = STATIC_CLASSES):
        header, payload = read_container(path)
        if header.get("kind") != EMBED_KIND:
            raise ArchiveError(f"{path}: not an embedding file (kind={header.get('kind')!r})")
        self.dim = int(header["dim"])
        keys = header["keys"]
        data = np.frombuffer(payload, dtype="<f4")
        if data.size != len(keys) * self.dim:
            raise ArchiveError(
                f"{path}: payload holds {data.size} floats, header declares "
                f"{len(keys)} x {self.dim}"
            )
        table = data.reshape(len(keys), self.dim) if keys else data.reshape(0, self.dim)
        self.n_classes = n_classes
        self._table = {
            (src, int(frame), side): table[i].astype(np.float64)
            for i, (src, frame, side) in enumerate(keys)
        }

    def embed(self, keypoints=None, box=None, *, source_id: str | None = None,
              frame_index: int | None = None, side: str | None = None,
              **_context) -> EmbedResult:
        uniform = np.full(self.n_classes, 1.0 / self.n_classes)
        if source_id is None or frame_index is None or side is None:
            return EmbedResult(np.zeros(self.dim), uniform, missing=True)
        vec = self._table.get((source_id, int(frame_index), side))
        if vec is None:
            return EmbedResult(np.zeros(self.dim), uniform, missing=True)
        return EmbedResult(vec.copy(), uniform, missing=False)
