"""Gesture recognition over 2D skeleton streams.

Pipeline stages: temporal keypoint filtering, augmented pose features,
learned monocular depth normalization, pose-driven hand attention, hand
embeddings, and an LSTM sequence classifier — plus a synthetic oracle
generator and a CLI wiring the stages through files.
"""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    KeypointFrame,
    VideoSample,
    GestureSequence,
    Point2,
    read_keypoint_stream,
    write_keypoint_stream,
    read_feature_archive,
    write_feature_archive,
)
