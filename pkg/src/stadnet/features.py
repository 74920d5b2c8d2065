"""Augmented pose features built from inter-joint vectors, lengths, and angles.

The body feature vector has 97 components: x,y components of the 21
non-anatomical joint-pair vectors (42), their lengths (21), 6 angles between
adjacent anatomical limb vectors, and 28 angles between all pair vectors and
the total-least-squares line through the joints. The per-hand variant has 54
components from 6 keypoints, and the dynamic variant appends per-joint
velocities and accelerations (129 total).

Missing joints propagate zeros into every dependent slot; a validity mask
records which slots were actually computed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    BODY_JOINTS,
    L_ELBOW,
    L_SHOULDER,
    L_WRIST,
    NECK,
    NOSE,
    R_ELBOW,
    R_SHOULDER,
    R_WRIST,
)

BODY_DIM = 97
HAND_DIM = 54
DYNAMIC_DIM = 129
DERIVATIVE_DIM = 2 * BODY_JOINTS  # x,y per joint for velocity and for acceleration

# Limb edges as (proximal, distal) pairs; vectors point outward along the chains.
ANATOMICAL_EDGES = (
    (NECK, NOSE),
    (NECK, R_SHOULDER),
    (R_SHOULDER, R_ELBOW),
    (R_ELBOW, R_WRIST),
    (NECK, L_SHOULDER),
    (L_SHOULDER, L_ELBOW),
    (L_ELBOW, L_WRIST),
)

# Pairs of anatomical edges sharing a joint, excluding the shoulder-shoulder
# pair at the neck: exactly the 6 bends along the head and arm chains.
ADJACENT_EDGE_PAIRS = ((0, 1), (0, 4), (1, 2), (2, 3), (4, 5), (5, 6))

ALL_PAIRS = tuple(itertools.combinations(range(BODY_JOINTS), 2))  # 28
AUGMENTED_PAIRS = tuple(p for p in ALL_PAIRS if p not in set(ANATOMICAL_EDGES))  # 21
LINE_ANGLE_PAIRS = ANATOMICAL_EDGES + AUGMENTED_PAIRS  # 28, limbs first

# 6-point hand chain: shoulder, elbow, wrist (body side) + palm base,
# middle-finger knuckle, middle-finger tip (hand points 0, 9, 12).
HAND_CHAIN_BODY = {"left": (L_SHOULDER, L_ELBOW, L_WRIST), "right": (R_SHOULDER, R_ELBOW, R_WRIST)}
HAND_CHAIN_POINTS = (0, 9, 12)
HAND_PAIRS = tuple(itertools.combinations(range(6), 2))  # 15
HAND_CHAIN_EDGES = ((0, 1), (1, 2), (2, 3), (3, 4), (4, 5))
HAND_ADJACENT_EDGE_PAIRS = ((0, 1), (1, 2), (2, 3), (3, 4))


class DegenerateInputError(ValueError):
    """Too few detected points to compute the requested feature."""


def best_fit_line(points: np.ndarray) -> tuple[float, np.ndarray]:
    """Total-least-squares line through the detected points.

    Returns (direction angle in (-pi/2, pi/2], centroid). Total least squares
    keeps vertical layouts well-posed where ordinary regression blows up.
    """
    points = np.asarray(points, dtype=np.float64)
    pts = points[~np.isnan(points[:, 0])]
    if len(pts) < 2:
        raise DegenerateInputError("need at least 2 detected points for a line fit")
    centroid = pts.mean(axis=0)
    d = pts - centroid
    sxx = float(np.sum(d[:, 0] * d[:, 0]))
    syy = float(np.sum(d[:, 1] * d[:, 1]))
    sxy = float(np.sum(d[:, 0] * d[:, 1]))
    theta = 0.5 * math.atan2(2.0 * sxy, sxx - syy)
    return theta, centroid


def _signed_angle(u: np.ndarray, v: np.ndarray) -> float:
    """Signed angle from u to v in [-pi, pi]."""
    return math.atan2(u[0] * v[1] - u[1] * v[0], u[0] * v[0] + u[1] * v[1])


def _line_angle(v: np.ndarray, line_theta: float) -> float:
    """Angle between a vector and an undirected line, folded into (-pi/2, pi/2]."""
    line_dir = np.array([math.cos(line_theta), math.sin(line_theta)])
    a = _signed_angle(line_dir, v)
    if a > math.pi / 2:
        a -= math.pi
    elif a <= -math.pi / 2:
        a += math.pi
    return a


@dataclass(eq=False)
class AugmentedPose:
    values: np.ndarray  # (97,)
    valid: np.ndarray   # (97,) bool


@dataclass(eq=False)
class HandAugmentedPose:
    values: np.ndarray  # (54,)
    valid: np.ndarray


@dataclass(eq=False)
class DynamicPose:
    values: np.ndarray  # (129,)
    valid: np.ndarray


def _augment(points: np.ndarray, pairs, adjacent_edge_pairs, edges, line_pairs,
             dim: int, adjacent_first: bool) -> tuple[np.ndarray, np.ndarray]:
    points = np.asarray(points, dtype=np.float64)
    present = ~np.isnan(points[:, 0])
    if not present.any():
        raise DegenerateInputError("all points missing")

    values = np.zeros(dim, dtype=np.float64)
    valid = np.zeros(dim, dtype=bool)

    try:
        line_theta, _ = best_fit_line(points)
        have_line = True
    except DegenerateInputError:
        line_theta, have_line = 0.0, False

    n_pairs = len(pairs)
    for p, (i, j) in enumerate(pairs):
        if present[i] and present[j]:
            v = points[j] - points[i]
            values[2 * p] = v[0]
            values[2 * p + 1] = v[1]
            values[2 * n_pairs + p] = math.hypot(v[0], v[1])
            valid[2 * p] = valid[2 * p + 1] = valid[2 * n_pairs + p] = True

    angle_base = 3 * n_pairs
    adjacent_vals, adjacent_valid = [], []
    for (e1, e2) in adjacent_edge_pairs:
        (a, b), (c, d) = edges[e1], edges[e2]
        if present[a] and present[b] and present[c] and present[d]:
            adjacent_vals.append(_signed_angle(points[b] - points[a], points[d] - points[c]))
            adjacent_valid.append(True)
        else:
            adjacent_vals.append(0.0)
            adjacent_valid.append(False)

    line_vals, line_valid = [], []
    for (i, j) in line_pairs:
        if have_line and present[i] and present[j]:
            line_vals.append(_line_angle(points[j] - points[i], line_theta))
            line_valid.append(True)
        else:
            line_vals.append(0.0)
            line_valid.append(False)

    if adjacent_first:
        angles = adjacent_vals + line_vals
        angle_ok = adjacent_valid + line_valid
    else:
        angles = line_vals + adjacent_vals
        angle_ok = line_valid + adjacent_valid
    values[angle_base:] = angles
    valid[angle_base:] = angle_ok
    return values, valid


def augment_pose(joints: np.ndarray) -> AugmentedPose:
    """Build the 97-component body pose vector from 8 (possibly missing) joints."""
    joints = np.asarray(joints, dtype=np.float64)
    if joints.shape != (BODY_JOINTS, 2):
        raise ValueError(f"expected ({BODY_JOINTS}, 2) joints, got {joints.shape}")
    values, valid = _augment(
        joints, AUGMENTED_PAIRS, ADJACENT_EDGE_PAIRS, ANATOMICAL_EDGES,
        LINE_ANGLE_PAIRS, BODY_DIM, adjacent_first=True,
    )
    return AugmentedPose(values=values, valid=valid)


def augment_hand(six_points: np.ndarray) -> HandAugmentedPose:
    """Build the 54-component hand pose vector from the 6-point arm-hand chain."""
    six_points = np.asarray(six_points, dtype=np.float64)
    if six_points.shape != (6, 2):
        raise ValueError(f"expected (6, 2) points, got {six_points.shape}")
    values, valid = _augment(
        six_points, HAND_PAIRS, HAND_ADJACENT_EDGE_PAIRS, HAND_CHAIN_EDGES,
        HAND_CHAIN_EDGES, HAND_DIM, adjacent_first=False,
    )
    return HandAugmentedPose(values=values, valid=valid)


def body_feature_names() -> list[str]:
    """Slot names for the 97-component layout, for inspection and tests."""
    names = []
    for (i, j) in AUGMENTED_PAIRS:
        names += [f"pair_{i}_{j}_dx", f"pair_{i}_{j}_dy"]
    names += [f"pair_{i}_{j}_len" for (i, j) in AUGMENTED_PAIRS]
    for (e1, e2) in ADJACENT_EDGE_PAIRS:
        names.append(f"bend_{e1}_{e2}")
    names += [f"line_{i}_{j}" for (i, j) in LINE_ANGLE_PAIRS]
    assert len(names) == BODY_DIM
    return names


def velocity(seq: np.ndarray, k: int, fps: float) -> np.ndarray:
    """Per-joint velocity at frame k: fps * (p[k+1] - p[k-1]), edges replicated.

    `seq` is (T, 8, 2) with NaN for missing joints; any missing reference frame
    zeroes that joint's components. Returns 16 values (x, y per joint).
    """
    return _central(seq, k, fps, span=1)


def acceleration(seq: np.ndarray, k: int, fps: float) -> np.ndarray:
    """Per-joint acceleration at frame k: fps^2 * (p[k+2] + p[k-2] - 2 p[k])."""
    seq = np.asarray(seq, dtype=np.float64)
    t = len(seq)
    if not 0 <= k < t:
        raise IndexError(f"frame {k} out of range for length {t}")
    lo, hi = max(k - 2, 0), min(k + 2, t - 1)
    a, b, m = seq[hi], seq[lo], seq[k]
    ok = ~(np.isnan(a[:, 0]) | np.isnan(b[:, 0]) | np.isnan(m[:, 0]))
    out = np.where(ok[:, None], (fps * fps) * (a + b - 2.0 * m), 0.0)
    return out.reshape(-1)


def _central(seq: np.ndarray, k: int, fps: float, span: int) -> np.ndarray:
    seq = np.asarray(seq, dtype=np.float64)
    t = len(seq)
    if not 0 <= k < t:
        raise IndexError(f"frame {k} out of range for length {t}")
    lo, hi = max(k - span, 0), min(k + span, t - 1)
    a, b = seq[hi], seq[lo]
    ok = ~(np.isnan(a[:, 0]) | np.isnan(b[:, 0]))
    out = np.where(ok[:, None], fps * (a - b), 0.0)
    return out.reshape(-1)


def dynamic_pose(seq: np.ndarray, k: int, fps: float) -> DynamicPose:
    """97-component pose of frame k plus 16 velocities and 16 accelerations."""
    seq = np.asarray(seq, dtype=np.float64)
    pose = augment_pose(seq[k])
    vel = velocity(seq, k, fps)
    acc = acceleration(seq, k, fps)
    t = len(seq)
    v_lo, v_hi = seq[max(k - 1, 0)], seq[min(k + 1, t - 1)]
    a_lo, a_hi = seq[max(k - 2, 0)], seq[min(k + 2, t - 1)]
    v_ok = np.repeat(~(np.isnan(v_lo[:, 0]) | np.isnan(v_hi[:, 0])), 2)
    a_ok = np.repeat(
        ~(np.isnan(a_lo[:, 0]) | np.isnan(a_hi[:, 0]) | np.isnan(seq[k][:, 0])), 2
    )
    values = np.concatenate([pose.values, vel, acc])
    valid = np.concatenate([pose.valid, v_ok, a_ok])
    assert values.shape == (DYNAMIC_DIM,)
    return DynamicPose(values=values, valid=valid)
