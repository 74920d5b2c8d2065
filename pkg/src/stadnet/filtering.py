"""Two-step temporal filter for noisy keypoint streams.

Step 1 patches missing detections over a sliding window of K frames: a point
missing at the newest frame is held forward from the previous frame while it
was present throughout the rest of the window and its consecutive-hold budget
(r_bar) is not exhausted; once the budget runs out the point is invalidated
across the whole window; a point that reappears after being absent for the
entire window is backfilled into the older frames. Step 2 smooths each
coordinate with a Gaussian kernel over the window (renormalized over present
taps) and emits the smoothed center frame.

The hold counters persist across window slides, so the filter is inherently
sequential per video. Body joints and both hands' keypoints share the same
mechanism with independent counters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    BODY_JOINTS,
    HAND_POINTS,
    KeypointFrame,
    SequenceError,
    VideoSample,
    _frame_unchecked,
)

TOTAL_SLOTS = BODY_JOINTS + 2 * HAND_POINTS


@dataclass(frozen=True)
class FilterParams:
    window: int = 7          # K, odd
    r_bar: int = 7           # max consecutive hold-forward replacements
    sigma: float | None = None  # Gaussian width; None means window / 4

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("window must be a positive odd number")
        if self.r_bar < 0:
            raise ValueError("r_bar must be >= 0")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError("sigma must be > 0")

    @property
    def effective_sigma(self) -> float:
        return self.sigma if self.sigma is not None else self.window / 4.0


def gaussian_kernel(window: int, sigma: float) -> np.ndarray:
    """Unnormalized Gaussian taps centered on the middle of the window.

    Normalization happens per joint over present taps, which keeps constant
    inputs fixed points regardless of gaps. Taps use scalar math so the
    weights are reproducible to the last bit everywhere.
    """
    center = (window - 1) / 2.0
    return np.array([math.exp(-0.5 * ((j - center) / sigma) ** 2)
                     for j in range(window)], dtype=np.float64)


class FilterState:
    """Sliding-window filter state for a single video.

    The newest-filled rows of a preallocated (K, slots, 2) buffer form the
    window; replacement rules mutate those rows in place, and a parallel
    missing mask stays in sync so each push is a handful of vector ops.
    """

    def __init__(self, params: FilterParams = FilterParams()):
        self.params = params
        k = params.window
        self.coords = np.zeros((k, TOTAL_SLOTS, 2), dtype=np.float64)
        self.miss = np.ones((k, TOTAL_SLOTS), dtype=bool)
        self.fill = 0
        self.indices: list[int] = []
        self.counters = np.zeros(TOTAL_SLOTS, dtype=np.int64)
        self.kernel = gaussian_kernel(k, params.effective_sigma)
        self._kernel_col = self.kernel[:, None]
        self._fps: float | None = None

    def push_frame(self, frame: KeypointFrame) -> KeypointFrame | None:
        """Feed one frame; returns the filtered center frame once K are buffered."""
        if self.indices and frame.frame_index != self.indices[-1] + 1:
            raise SequenceError(
                f"frame index {frame.frame_index} not consecutive after {self.indices[-1]}"
            )
        if self._fps is None:
            self._fps = frame.fps
        k = self.params.window
        newest = np.concatenate([frame.body, frame.left_hand, frame.right_hand])
        newest_missing = np.isnan(newest[:, 0])

        if self.fill:
            # slide the occupied region (kept right-aligned) one row left
            self.coords[:-1] = self.coords[1:]
            self.miss[:-1] = self.miss[1:]
            if self.fill < k:
                self.fill += 1
            lo = k - self.fill
            hist_c = self.coords[lo:-1]
            hist_m = self.miss[lo:-1]

            hist_any_missing = hist_m.any(axis=0)
            copy_mask = newest_missing & ~hist_any_missing & (self.counters <= self.params.r_bar)
            if copy_mask.any():
                newest[copy_mask] = hist_c[-1][copy_mask]
                newest_missing = newest_missing & ~copy_mask

            wipe_mask = newest_missing & (self.counters > self.params.r_bar)
            backfill_mask = ~newest_missing & hist_m.all(axis=0)
            if wipe_mask.any():
                hist_c[:, wipe_mask] = np.nan
                hist_m[:, wipe_mask] = True
            if backfill_mask.any():
                hist_c[:, backfill_mask] = newest[backfill_mask]
                hist_m[:, backfill_mask] = False

            self.counters[copy_mask] += 1
            self.counters[~copy_mask] = 0
        else:
            self.fill = 1

        self.coords[-1] = newest
        self.miss[-1] = newest_missing
        self.indices.append(frame.frame_index)
        if len(self.indices) > k:
            self.indices.pop(0)
        if self.fill < k:
            return None
        return self._emit_center()

    def _emit_center(self) -> KeypointFrame:
        k = self.params.window
        present = ~self.miss
        taps = self._kernel_col * present
        vals = np.where(present[:, :, None], self.coords, 0.0)
        num = (taps[:, :, None] * vals).sum(axis=0)
        den = taps.sum(axis=0)
        out = np.where(den[:, None] > 0.0, num / np.maximum(den, 1e-300)[:, None], np.nan)
        return _frame_unchecked(
            frame_index=self.indices[(k - 1) // 2],
            body=out[:BODY_JOINTS],
            left_hand=out[BODY_JOINTS:BODY_JOINTS + HAND_POINTS],
            right_hand=out[BODY_JOINTS + HAND_POINTS:],
            fps=self._fps,
        )


@dataclass
class FilterResult:
    sample: VideoSample
    too_short: bool = False


def filter_video(sample: VideoSample, params: FilterParams = FilterParams()) -> FilterResult:
    """Run the full filter over one video.

    Output length is max(0, N - K + 1); inputs shorter than the window yield
    an empty sample with the too_short flag set.
    """
    state = FilterState(params)
    out: list[KeypointFrame] = []
    for frame in sample.frames:
        emitted = state.push_frame(frame)
        if emitted is not None:
            out.append(emitted)
    filtered = VideoSample(source_id=sample.source_id, frames=out, label=sample.label)
    return FilterResult(sample=filtered, too_short=len(sample.frames) < params.window)
