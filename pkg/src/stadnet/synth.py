"""Synthetic oracle data: a parametric upper-body model rendered through a
pinhole camera, with per-frame ground-truth relative depths.

The avatar moves in a fronto-parallel plane (every joint shares the body's
depth each frame), so apparent joint offsets scale exactly as 1/Z and the
scale-normalization identity can be verified to float precision. Limb lengths
are fixed across the population: monocular depth from a 2D skeleton is only
well-posed for a known body scale, and a fixed avatar is the cleanest oracle
for it. Relative depth is defined as Z_REF / Z, so it equals 1.0 at the 2 m
reference distance, grows as the subject approaches, and shrinks with
distance exactly like apparent size does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .core import (
    BODY_JOINTS,
    HAND_POINTS,
    KeypointFrame,
    VideoSample,
    NECK, NOSE, R_SHOULDER, R_ELBOW, R_WRIST, L_SHOULDER, L_ELBOW, L_WRIST,
)

Z_REF = 2.0  # meters; relative depth 1.0

GESTURE_CLASSES = (
    "idle", "wave", "raise", "circle", "point", "clap", "swipe_left", "swipe_right",
)


@dataclass(frozen=True)
class CameraModel:
    focal: float = 200.0
    cx: float = 320.0
    cy: float = 240.0
    width: int = 640
    height: int = 480

    def project(self, points3: np.ndarray) -> np.ndarray:
        """Perspective projection of (N, 3) world points to pixel coordinates."""
        points3 = np.asarray(points3, dtype=np.float64)
        z = points3[:, 2]
        u = self.focal * points3[:, 0] / z + self.cx
        v = self.focal * points3[:, 1] / z + self.cy
        return np.stack([u, v], axis=1)

    def unproject(self, points2: np.ndarray, depth_label: float | np.ndarray) -> np.ndarray:
        """Invert the projection given the relative depth label."""
        points2 = np.asarray(points2, dtype=np.float64)
        z = Z_REF / np.asarray(depth_label, dtype=np.float64)
        x = (points2[:, 0] - self.cx) * z / self.focal
        y = (points2[:, 1] - self.cy) * z / self.focal
        return np.stack([x, y, np.broadcast_to(z, x.shape)], axis=1)


@dataclass(frozen=True)
class BodyModel:
    """Fixed planar avatar: rest offsets from the neck plus arm segment lengths
    (meters; image convention, y down)."""

    nose_offset: tuple[float, float] = (0.0, -0.26)
    shoulder_dx: float = 0.22
    shoulder_dy: float = 0.02
    upper_arm: float = 0.28
    forearm: float = 0.26
    hand_scale: float = 0.09


# 21-point hand template in a local frame: x along the forearm direction,
# origin at the wrist. Index 0 is the palm base, 9 the middle-finger knuckle,
# 12 the middle-finger tip; fingers fan out in y.
def _hand_template() -> np.ndarray:
    pts = np.zeros((HAND_POINTS, 2))
    pts[0] = (0.0, 0.0)
    finger_y = {1: 0.55, 5: 0.30, 9: 0.0, 13: -0.28, 17: -0.52}
    lengths = {1: 0.70, 5: 1.00, 9: 1.05, 13: 0.98, 17: 0.80}
    for base, y in finger_y.items():
        reach = lengths[base]
        for j in range(4):
            frac = 0.35 + 0.65 * (j / 3.0)
            pts[base + j] = (reach * frac, y * (0.35 + 0.65 * frac))
    return pts


HAND_TEMPLATE = _hand_template()


@dataclass(frozen=True)
class NoiseParams:
    dropout: float = 0.0    # per-point per-frame missing probability
    jitter: float = 0.0     # Gaussian pixel noise sigma

    def __post_init__(self):
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.jitter < 0:
            raise ValueError("jitter must be >= 0")


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _idle_arm(tau: np.ndarray, rng: np.random.Generator):
    f = rng.uniform(0.4, 0.9)
    p1, p2 = rng.uniform(0, 2 * math.pi, size=2)
    alpha = 0.06 + 0.03 * np.sin(2 * math.pi * f * tau + p1)
    beta = 0.05 + 0.03 * np.sin(2 * math.pi * f * tau + p2)
    return alpha, beta


def _class_trajectories(class_id: int, tau: np.ndarray, rng: np.random.Generator):
    """Shoulder-swing and elbow-bend angle tracks (right arm, left arm)."""
    name = GESTURE_CLASSES[class_id]
    if name == "idle":
        right = _idle_arm(tau, rng)
        left = _idle_arm(tau, rng)
    elif name == "wave":
        f = rng.uniform(1.6, 2.4)
        phase = rng.uniform(0, 2 * math.pi)
        alpha = 2.85 + 0.06 * np.sin(2 * math.pi * 0.5 * tau)
        beta = 0.55 + rng.uniform(0.35, 0.5) * np.sin(2 * math.pi * f * tau + phase)
        right = (alpha, beta)
        left = _idle_arm(tau, rng)
    elif name == "raise":
        top = rng.uniform(2.4, 2.8)
        right = (0.1 + top * _smoothstep(tau), np.full_like(tau, 0.1))
        left = _idle_arm(tau, rng)
    elif name == "circle":
        f = rng.uniform(0.9, 1.4)
        phase = rng.uniform(0, 2 * math.pi)
        alpha = 1.6 + 0.35 * np.sin(2 * math.pi * f * tau + phase)
        beta = 0.8 + 0.45 * np.cos(2 * math.pi * f * tau + phase)
        right = (alpha, beta)
        left = _idle_arm(tau, rng)
    elif name == "point":
        ramp = _smoothstep(tau / 0.4)
        alpha = 0.1 + rng.uniform(1.4, 1.6) * ramp
        beta = 0.6 * (1.0 - ramp) + 0.05
        right = (alpha, beta)
        left = _idle_arm(tau, rng)
    elif name == "clap":
        f = rng.uniform(1.3, 2.0)
        phase = rng.uniform(0, 2 * math.pi)
        alpha = 0.75 + 0.1 * np.sin(2 * math.pi * 0.5 * tau + phase)
        beta = 0.4 + 1.1 * (0.5 + 0.5 * np.sin(2 * math.pi * f * tau + phase))
        right = (alpha, beta)
        left = (alpha.copy(), beta.copy())
    elif name == "swipe_left":
        right = (_swipe_profile(tau, rng), np.full_like(tau, 0.3))
        left = _idle_arm(tau, rng)
    elif name == "swipe_right":
        left = (_swipe_profile(tau, rng), np.full_like(tau, 0.3))
        right = _idle_arm(tau, rng)
    else:
        raise ValueError(f"unknown gesture class {class_id}")
    return right, left


def _swipe_profile(tau: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Fast up-and-back shoulder sweep, done by ~70% of the clip."""
    peak = rng.uniform(1.9, 2.3)
    up = _smoothstep(tau / 0.35)
    down = _smoothstep((tau - 0.45) / 0.3)
    return 0.3 + peak * (up - down)


def _arm_joints(shoulder: np.ndarray, alpha: float, beta: float, side: float,
                body: BodyModel) -> tuple[np.ndarray, np.ndarray]:
    """Planar two-segment arm; side is +1 for image-left (subject's left)."""
    upper_dir = np.array([side * math.sin(alpha), math.cos(alpha)])
    elbow = shoulder + body.upper_arm * upper_dir
    fore_dir = np.array([side * math.sin(alpha + beta), math.cos(alpha + beta)])
    wrist = elbow + body.forearm * fore_dir
    return elbow, wrist


def _hand_points(wrist: np.ndarray, elbow: np.ndarray, side: float,
                 body: BodyModel) -> np.ndarray:
    d = wrist - elbow
    norm = math.hypot(d[0], d[1])
    direction = d / norm if norm > 0 else np.array([0.0, 1.0])
    c, s = direction[0], direction[1]
    rot = np.array([[c, -s], [s, c]])
    template = HAND_TEMPLATE.copy()
    template[:, 1] *= side
    return wrist + (template * body.hand_scale) @ rot.T


def generate(class_id: int, seed: int, noise: NoiseParams = NoiseParams(),
             camera: CameraModel = CameraModel(), body: BodyModel = BodyModel(),
             depth_scale: float = 1.0, n_frames: int | None = None,
             fps: float = 30.0, source_id: str | None = None,
             ) -> tuple[VideoSample, np.ndarray]:
    """Render one gesture clip; returns the sample and (T, 3) relative depths
    for (neck, left hand, right hand)."""
    if not 0 <= class_id < len(GESTURE_CLASSES):
        raise ValueError(f"unknown gesture class {class_id}")
    rng = np.random.default_rng(seed)
    t_count = int(n_frames) if n_frames is not None else int(rng.integers(20, 61))
    tau = np.linspace(0.0, 1.0, t_count)

    z_base = rng.uniform(1.6, 2.8)
    z_amp = rng.uniform(0.0, 0.15)
    z_freq = rng.uniform(0.3, 0.8)
    z_phase = rng.uniform(0, 2 * math.pi)
    x0 = rng.uniform(-0.25, 0.25)
    y0 = rng.uniform(-0.10, 0.10)
    (alpha_r, beta_r), (alpha_l, beta_l) = _class_trajectories(class_id, tau, rng)

    z_track = depth_scale * (z_base + z_amp * np.sin(2 * math.pi * z_freq * tau + z_phase))
    frames: list[KeypointFrame] = []
    depths = np.zeros((t_count, 3))
    src = source_id or f"{GESTURE_CLASSES[class_id]}-{seed}"
    for k in range(t_count):
        neck = np.array([x0, y0])
        nose = neck + np.asarray(body.nose_offset)
        r_sh = neck + np.array([-body.shoulder_dx, body.shoulder_dy])
        l_sh = neck + np.array([body.shoulder_dx, body.shoulder_dy])
        r_el, r_wr = _arm_joints(r_sh, alpha_r[k], beta_r[k], side=-1.0, body=body)
        l_el, l_wr = _arm_joints(l_sh, alpha_l[k], beta_l[k], side=1.0, body=body)
        joints = np.zeros((BODY_JOINTS, 2))
        joints[NECK], joints[NOSE] = neck, nose
        joints[R_SHOULDER], joints[R_ELBOW], joints[R_WRIST] = r_sh, r_el, r_wr
        joints[L_SHOULDER], joints[L_ELBOW], joints[L_WRIST] = l_sh, l_el, l_wr
        left_hand = _hand_points(l_wr, l_el, side=1.0, body=body)
        right_hand = _hand_points(r_wr, r_el, side=-1.0, body=body)

        z = z_track[k]
        world = np.concatenate([joints, left_hand, right_hand])
        world3 = np.concatenate([world, np.full((len(world), 1), z)], axis=1)
        pixels = camera.project(world3)

        if noise.jitter > 0:
            pixels = pixels + rng.normal(0.0, noise.jitter, size=pixels.shape)
        if noise.dropout > 0:
            drop = rng.random(len(pixels)) < noise.dropout
            pixels[drop] = np.nan

        frames.append(KeypointFrame(
            frame_index=k,
            body=pixels[:BODY_JOINTS],
            left_hand=pixels[BODY_JOINTS:BODY_JOINTS + HAND_POINTS],
            right_hand=pixels[BODY_JOINTS + HAND_POINTS:],
            fps=fps,
        ))
        depths[k] = Z_REF / z  # planar body: hands share the neck depth
    return VideoSample(source_id=src, frames=frames, label=class_id), depths


def sample_seed(dataset_seed: int, class_id: int, index: int) -> int:
    return dataset_seed * 1_000_003 + class_id * 1_013 + index


def generate_depth_training_set(n_per_class: int, classes: int | list[int], seed: int,
                                scale_range: tuple[float, float] = (0.9, 2.2),
                                noise: NoiseParams = NoiseParams(),
                                camera: CameraModel = CameraModel(),
                                ) -> list[tuple[VideoSample, np.ndarray]]:
    """Clips spread over the full depth envelope the estimators must serve.

    Depth regression is only reliable inside the distance range it was fit on,
    so training data for the estimators scales each clip's depth track by a
    per-clip factor drawn from `scale_range`.
    """
    class_ids = list(range(classes)) if isinstance(classes, int) else list(classes)
    rng = np.random.default_rng(seed)
    out = []
    for cid in class_ids:
        for i in range(n_per_class):
            scale = rng.uniform(*scale_range)
            s = sample_seed(seed, cid, i)
            out.append(generate(cid, s, noise=noise, camera=camera, depth_scale=scale))
    return out


def generate_dataset(n_per_class: int, classes: int | list[int], seed: int,
                     noise: NoiseParams = NoiseParams(),
                     camera: CameraModel = CameraModel(), fps: float = 30.0,
                     ) -> tuple[list[tuple[VideoSample, np.ndarray]], dict]:
    """Balanced dataset plus a manifest sufficient for exact regeneration."""
    class_ids = list(range(classes)) if isinstance(classes, int) else list(classes)
    for cid in class_ids:
        if not 0 <= cid < len(GESTURE_CLASSES):
            raise ValueError(f"unknown gesture class {cid}")
    out: list[tuple[VideoSample, np.ndarray]] = []
    entries = []
    for cid in class_ids:
        for i in range(n_per_class):
            s = sample_seed(seed, cid, i)
            src = f"{GESTURE_CLASSES[cid]}-{seed}-{i:04d}"
            sample, depths = generate(cid, s, noise=noise, camera=camera,
                                      fps=fps, source_id=src)
            out.append((sample, depths))
            entries.append({
                "source_id": src, "class_id": cid, "label": cid,
                "seed": s, "frames": len(sample.frames),
            })
    manifest = {
        "dataset_seed": seed,
        "classes": class_ids,
        "class_names": [GESTURE_CLASSES[c] for c in class_ids],
        "n_per_class": n_per_class,
        "noise": {"dropout": noise.dropout, "jitter": noise.jitter},
        "fps": fps,
        "camera": asdict(camera),
        "samples": entries,
    }
    return out, manifest
