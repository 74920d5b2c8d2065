"""Domain types and on-disk formats for 2D skeleton streams and feature archives.

Coordinates are pixels in the (resized) camera frame. A keypoint that was not
detected is "missing" and is stored as NaN in both coordinates; partially
specified points are rejected. All arrays are float64 in memory; archive
payloads are little-endian float32 on disk.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

BODY_JOINTS = 8
HAND_POINTS = 21

# Upper-body joint indices. Neck is the root used for position normalization.
NECK, NOSE, R_SHOULDER, R_ELBOW, R_WRIST, L_SHOULDER, L_ELBOW, L_WRIST = range(BODY_JOINTS)

JOINT_NAMES = (
    "neck", "nose",
    "r_shoulder", "r_elbow", "r_wrist",
    "l_shoulder", "l_elbow", "l_wrist",
)

# Detections below this confidence are treated as missing on ingest.
CONFIDENCE_FLOOR = 0.05

MAGIC = b"STADNET1"
FORMAT_VERSION = 1

# Fixed sequence length for train-ready data (shorter clips are zero-padded,
# longer ones trimmed; see stadnet.sequences.fix_length).
SEQUENCE_LENGTH = 40


class ParseError(ValueError):
    """A malformed record in a keypoint stream; carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class SequenceError(ValueError):
    """Frame ordering or frame-rate inconsistency within one video."""


class ArchiveError(ValueError):
    """Corrupt or structurally invalid archive file."""


class UnsupportedVersionError(ArchiveError):
    """Archive was written by an unknown format version."""


@dataclass(frozen=True)
class Point2:
    """A detected 2D point in pixel coordinates."""

    x: float
    y: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)


def missing_points(n: int) -> np.ndarray:
    """An (n, 2) block of missing points."""
    return np.full((n, 2), np.nan, dtype=np.float64)


def present_mask(points: np.ndarray) -> np.ndarray:
    """Boolean mask of detected points in an (n, 2) block."""
    return ~np.isnan(points[:, 0])


def _validate_points(name: str, points: np.ndarray, count: int) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    if points.shape != (count, 2):
        raise ValueError(f"{name} must have shape ({count}, 2), got {points.shape}")
    nan = np.isnan(points)
    if (nan[:, 0] != nan[:, 1]).any():
        raise ValueError(f"{name} contains partially specified points")
    if np.isinf(points).any():
        raise ValueError(f"{name} contains non-finite coordinates")
    return points


@dataclass(frozen=True, eq=False)
class KeypointFrame:
    """One frame of body joints and per-hand keypoints.

    `body` is (8, 2), each hand is (21, 2); missing points are NaN rows.
    """

    frame_index: int
    body: np.ndarray
    left_hand: np.ndarray
    right_hand: np.ndarray
    fps: float

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError("frame_index must be >= 0")
        if not self.fps > 0:
            raise ValueError("fps must be > 0")
        object.__setattr__(self, "body", _validate_points("body", self.body, BODY_JOINTS))
        object.__setattr__(self, "left_hand", _validate_points("left_hand", self.left_hand, HAND_POINTS))
        object.__setattr__(self, "right_hand", _validate_points("right_hand", self.right_hand, HAND_POINTS))


def _frame_unchecked(frame_index: int, body: np.ndarray, left_hand: np.ndarray,
                     right_hand: np.ndarray, fps: float) -> KeypointFrame:
    """Construct a frame from arrays already known to satisfy the invariants.

    Internal fast path for producers (filter, generator) that build frames by
    the thousands; external inputs must go through the validating constructor.
    """
    frame = object.__new__(KeypointFrame)
    object.__setattr__(frame, "frame_index", frame_index)
    object.__setattr__(frame, "body", body)
    object.__setattr__(frame, "left_hand", left_hand)
    object.__setattr__(frame, "right_hand", right_hand)
    object.__setattr__(frame, "fps", fps)
    return frame


def frames_equal(a: KeypointFrame, b: KeypointFrame) -> bool:
    """Exact equality, treating NaN (missing) slots as equal."""
    return (
        a.frame_index == b.frame_index
        and a.fps == b.fps
        and np.array_equal(a.body, b.body, equal_nan=True)
        and np.array_equal(a.left_hand, b.left_hand, equal_nan=True)
        and np.array_equal(a.right_hand, b.right_hand, equal_nan=True)
    )


@dataclass(eq=False)
class VideoSample:
    """An ordered keypoint sequence for one video, optionally labeled."""

    source_id: str
    frames: list[KeypointFrame]
    label: int | None = None

    @property
    def fps(self) -> float:
        if not self.frames:
            raise ValueError("empty sample has no frame rate")
        return self.frames[0].fps

    def __len__(self) -> int:
        return len(self.frames)


def samples_equal(a: VideoSample, b: VideoSample) -> bool:
    return (
        a.source_id == b.source_id
        and a.label == b.label
        and len(a.frames) == len(b.frames)
        and all(frames_equal(x, y) for x, y in zip(a.frames, b.frames))
    )


# ---------------------------------------------------------------------------
# Keypoint stream wire format: one JSON object per line,
#   {"src": str, "k": int, "fps": num, "body": [[x,y,c] x8],
#    "lh": [[x,y,c] x21], "rh": [[x,y,c] x21]}
# with null for undetected points. Points with c < CONFIDENCE_FLOOR are
# treated as missing on read.
# ---------------------------------------------------------------------------

def _decode_points(raw, count: int, what: str) -> np.ndarray:
    if not isinstance(raw, list) or len(raw) != count:
        raise ValueError(f"{what} must be a list of {count} entries")
    out = missing_points(count)
    for i, entry in enumerate(raw):
        if entry is None:
            continue
        if not isinstance(entry, list) or len(entry) != 3:
            raise ValueError(f"{what}[{i}] must be [x, y, c] or null")
        x, y, c = entry
        if c < CONFIDENCE_FLOOR:
            continue
        out[i] = (float(x), float(y))
    return out


def read_keypoint_stream(path) -> list[VideoSample]:
    """Parse a keypoint stream file into per-source videos.

    Frames are grouped by source id (groups in first-seen order) and must
    arrive with strictly increasing frame indices per source.
    """
    by_src: dict[str, list[KeypointFrame]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                src = rec["src"]
                frame = KeypointFrame(
                    frame_index=int(rec["k"]),
                    body=_decode_points(rec["body"], BODY_JOINTS, "body"),
                    left_hand=_decode_points(rec["lh"], HAND_POINTS, "lh"),
                    right_hand=_decode_points(rec["rh"], HAND_POINTS, "rh"),
                    fps=float(rec["fps"]),
                )
            except ParseError:
                raise
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise ParseError(line_no, str(exc)) from exc
            frames = by_src.setdefault(src, [])
            if frames:
                if frame.frame_index <= frames[-1].frame_index:
                    raise SequenceError(
                        f"{src}: frame index {frame.frame_index} not increasing "
                        f"(previous {frames[-1].frame_index}, line {line_no})"
                    )
                if frame.fps != frames[0].fps:
                    raise SequenceError(f"{src}: frame rate changed at line {line_no}")
            frames.append(frame)
    return [VideoSample(source_id=src, frames=frames) for src, frames in by_src.items()]


def _encode_points(points: np.ndarray) -> list:
    out = []
    for x, y in points:
        if np.isnan(x):
            out.append(None)
        else:
            out.append([float(x), float(y), 1.0])
    return out


def write_keypoint_stream(samples: list[VideoSample], path) -> None:
    """Write samples in the wire format (interleaving preserved per sample order)."""
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            for frame in sample.frames:
                rec = {
                    "src": sample.source_id,
                    "k": frame.frame_index,
                    "fps": frame.fps,
                    "body": _encode_points(frame.body),
                    "lh": _encode_points(frame.left_hand),
                    "rh": _encode_points(frame.right_hand),
                }
                fh.write(json.dumps(rec) + "\n")


# ---------------------------------------------------------------------------
# Archive container: 8-byte magic, u32-LE header length, UTF-8 JSON header,
# raw payload. Feature payloads are little-endian float32.
# ---------------------------------------------------------------------------

def write_container(path, header: dict, payload: bytes) -> int:
    """Write a container file; returns the total byte count."""
    header = dict(header)
    header.setdefault("version", FORMAT_VERSION)
    header["payload_bytes"] = len(payload)
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(payload)
    return len(MAGIC) + 4 + len(blob) + len(payload)


def read_container(path) -> tuple[dict, bytes]:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ArchiveError(f"{path}: bad magic {magic!r}")
        raw_len = fh.read(4)
        if len(raw_len) != 4:
            raise ArchiveError(f"{path}: truncated header length")
        (header_len,) = struct.unpack("<I", raw_len)
        blob = fh.read(header_len)
        if len(blob) != header_len:
            raise ArchiveError(f"{path}: truncated header")
        try:
            header = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ArchiveError(f"{path}: unreadable header: {exc}") from exc
        if header.get("version") != FORMAT_VERSION:
            raise UnsupportedVersionError(
                f"{path}: unsupported format version {header.get('version')!r}"
            )
        payload = fh.read()
    expected = header.get("payload_bytes")
    if expected is not None and len(payload) != expected:
        raise ArchiveError(
            f"{path}: payload is {len(payload)} bytes, header declares {expected}"
        )
    return header, payload


@dataclass(eq=False)
class GestureSequence:
    """A fixed-length sequence of fused per-frame feature vectors.

    `features` is (SEQUENCE_LENGTH, dim) float32; `pad_mask` is True where the
    frame is zero padding rather than data.
    """

    features: np.ndarray
    label: int | None
    pad_mask: np.ndarray
    source_id: str = ""
    stats_id: str | None = None

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float32)
        self.pad_mask = np.asarray(self.pad_mask, dtype=bool)
        if self.features.ndim != 2 or self.features.shape[0] != SEQUENCE_LENGTH:
            raise ValueError(
                f"features must be ({SEQUENCE_LENGTH}, dim), got {self.features.shape}"
            )
        if self.pad_mask.shape != (SEQUENCE_LENGTH,):
            raise ValueError("pad_mask must have one entry per frame")

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def sequences_equal(a: GestureSequence, b: GestureSequence) -> bool:
    return (
        a.label == b.label
        and a.source_id == b.source_id
        and a.stats_id == b.stats_id
        and np.array_equal(a.pad_mask, b.pad_mask)
        and np.array_equal(a.features, b.features)
    )


def write_feature_archive(seq: GestureSequence, path) -> int:
    """Serialize a GestureSequence; returns bytes written."""
    header = {
        "kind": "SEQ",
        "dim": seq.dim,
        "frames": seq.features.shape[0],
        "label": seq.label,
        "pad_mask": [int(v) for v in seq.pad_mask],
        "source_id": seq.source_id,
        "stats_id": seq.stats_id,
        "dtype": "<f4",
    }
    return write_container(path, header, seq.features.astype("<f4").tobytes())


def read_feature_archive(path) -> GestureSequence:
    header, payload = read_container(path)
    if header.get("kind") != "SEQ":
        raise ArchiveError(f"{path}: not a sequence archive (kind={header.get('kind')!r})")
    frames, dim = header["frames"], header["dim"]
    if frames != SEQUENCE_LENGTH:
        raise ArchiveError(f"{path}: expected {SEQUENCE_LENGTH} frames, header says {frames}")
    features = np.frombuffer(payload, dtype="<f4")
    if features.size != frames * dim:
        raise ArchiveError(f"{path}: payload size does not match {frames}x{dim}")
    return GestureSequence(
        features=features.reshape(frames, dim).copy(),
        label=header.get("label"),
        pad_mask=np.array(header["pad_mask"], dtype=bool),
        source_id=header.get("source_id", ""),
        stats_id=header.get("stats_id"),
    )


def write_frame_archive(features: np.ndarray, path, *, label: int | None = None,
                        source_id: str = "", fps: float | None = None,
                        extra: dict | None = None) -> int:
    """Serialize a variable-length (frames, dim) float32 feature block."""
    features = np.ascontiguousarray(features, dtype=np.float32)
    if features.ndim != 2:
        raise ValueError("features must be 2-D")
    header = {
        "kind": "FRAMES",
        "dim": int(features.shape[1]),
        "frames": int(features.shape[0]),
        "label": label,
        "source_id": source_id,
        "fps": fps,
        "dtype": "<f4",
    }
    if extra:
        header["extra"] = extra
    return write_container(path, header, features.astype("<f4").tobytes())


def read_frame_archive(path) -> tuple[np.ndarray, dict]:
    header, payload = read_container(path)
    if header.get("kind") != "FRAMES":
        raise ArchiveError(f"{path}: not a frame archive (kind={header.get('kind')!r})")
    frames, dim = header["frames"], header["dim"]
    features = np.frombuffer(payload, dtype="<f4")
    if features.size != frames * dim:
        raise ArchiveError(f"{path}: payload size does not match {frames}x{dim}")
    return features.reshape(frames, dim).copy(), header


def stable_hash(*arrays: np.ndarray) -> str:
    """SHA-256 over the raw bytes of the given arrays (order-sensitive)."""
    digest = hashlib.sha256()
    for arr in arrays:
        digest.update(np.ascontiguousarray(arr).tobytes())
    return digest.hexdigest()
