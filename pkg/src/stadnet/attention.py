"""Pose-driven hard spatial attention.

Position normalization subtracts the neck joint; scale normalization divides
by the (estimated or ground-truth) relative neck depth, which is defined so
that it shrinks with distance — apparent joint offsets and the divisor then
scale together and the normalized skeleton is distance-invariant. Hand
attention localizes each hand at the mean of its detected keypoints and sizes
an oriented square crop inversely to the hand's relative depth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import NECK, Point2

KAPPA_DEFAULT = 128.0         # crop side in pixels at relative depth 1.0
SIDE_CLAMP = (16.0, 512.0)


class RootMissingError(ValueError):
    """The neck joint is required as the normalization root."""


@dataclass(eq=False)
class NormalizedSkeleton:
    joints: np.ndarray        # (8, 2); NaN where missing
    depth_used: float
    valid: np.ndarray         # (8,) bool


@dataclass(eq=False)
class HandBox:
    center: Point2
    side: float               # pixels; 0 marks a degenerate/missing box
    orientation: float        # radians in [-pi, pi]
    side_tag: str             # "left" | "right"
    orientation_valid: bool = True


def normalize_skeleton(joints: np.ndarray, depth: float) -> NormalizedSkeleton:
    """Shift joints by the neck and divide by the relative neck depth."""
    joints = np.asarray(joints, dtype=np.float64)
    if np.isnan(joints[NECK, 0]):
        raise RootMissingError("neck joint missing; cannot normalize")
    if not depth > 0:
        raise ValueError(f"depth must be > 0, got {depth}")
    out = (joints - joints[NECK]) / depth
    return NormalizedSkeleton(joints=out, depth_used=float(depth),
                              valid=~np.isnan(out[:, 0]))


def hand_center(keypoints: np.ndarray) -> Point2 | None:
    """Mean of the detected hand keypoints; None when no point was detected."""
    keypoints = np.asarray(keypoints, dtype=np.float64)
    detected = keypoints[~np.isnan(keypoints[:, 0])]
    if len(detected) == 0:
        return None
    c = detected.mean(axis=0)
    return Point2(float(c[0]), float(c[1]))


def hand_box(center: Point2, depth: float, forearm: tuple[np.ndarray | None, np.ndarray | None],
             side_tag: str, kappa: float = KAPPA_DEFAULT) -> HandBox:
    """Size and orient the crop square for one hand.

    Side length is kappa / depth clamped to SIDE_CLAMP; orientation follows
    the elbow-to-wrist direction, defaulting to 0 (flagged) when the forearm
    is incomplete.
    """
    if not depth > 0:
        raise ValueError(f"depth must be > 0, got {depth}")
    side = float(np.clip(kappa / depth, *SIDE_CLAMP))
    elbow, wrist = forearm
    ok = (
        elbow is not None and wrist is not None
        and not np.isnan(np.asarray(elbow, dtype=np.float64)).any()
        and not np.isnan(np.asarray(wrist, dtype=np.float64)).any()
    )
    if ok:
        e = np.asarray(elbow, dtype=np.float64)
        w = np.asarray(wrist, dtype=np.float64)
        orientation = math.atan2(w[1] - e[1], w[0] - e[0])
    else:
        orientation = 0.0
    return HandBox(center=center, side=side, orientation=orientation,
                   side_tag=side_tag, orientation_valid=bool(ok))


def box_corners(box: HandBox) -> np.ndarray:
    """The 4 corners of the rotated square, counter-clockwise."""
    h = box.side / 2.0
    local = np.array([[-h, -h], [h, -h], [h, h], [-h, h]], dtype=np.float64)
    c, s = math.cos(box.orientation), math.sin(box.orientation)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([box.center.x, box.center.y])


def _clip_polygon(poly: np.ndarray, axis: int, bound: float, keep_below: bool) -> np.ndarray:
    """Clip a polygon against one half-plane (Sutherland-Hodgman step)."""
    if len(poly) == 0:
        return poly
    inside = (poly[:, axis] <= bound) if keep_below else (poly[:, axis] >= bound)
    out: list[np.ndarray] = []
    n = len(poly)
    for i in range(n):
        cur, nxt = poly[i], poly[(i + 1) % n]
        cur_in, nxt_in = inside[i], inside[(i + 1) % n]
        if cur_in:
            out.append(cur)
        if cur_in != nxt_in:
            t = (bound - cur[axis]) / (nxt[axis] - cur[axis])
            out.append(cur + t * (nxt - cur))
    return np.array(out) if out else np.empty((0, 2))


def crop_spec(box: HandBox, frame_size: tuple[float, float]) -> np.ndarray:
    """Source polygon for cropping: the rotated square clipped to the frame.

    Returns an (n, 2) vertex array; empty for degenerate (zero-side) boxes or
    boxes entirely outside the frame. Pixel extraction itself is left to
    consumers that hold image data.
    """
    if box.side <= 0:
        return np.empty((0, 2))
    width, height = frame_size
    poly = box_corners(box)
    poly = _clip_polygon(poly, axis=0, bound=0.0, keep_below=False)
    poly = _clip_polygon(poly, axis=0, bound=float(width), keep_below=True)
    poly = _clip_polygon(poly, axis=1, bound=0.0, keep_below=False)
    poly = _clip_polygon(poly, axis=1, bound=float(height), keep_below=True)
    return poly


def polygon_area(poly: np.ndarray) -> float:
    """Shoelace area of a simple polygon."""
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))
