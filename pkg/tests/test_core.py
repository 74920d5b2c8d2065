import json

import numpy as np
import pytest

from stadnet.core import (
    ArchiveError,
    GestureSequence,
    KeypointFrame,
    ParseError,
    SequenceError,
    UnsupportedVersionError,
    frames_equal,
    missing_points,
    read_feature_archive,
    read_keypoint_stream,
    samples_equal,
    sequences_equal,
    write_feature_archive,
    write_keypoint_stream,
    read_container,
    write_container,
    VideoSample,
)


def make_frame(k=0, fps=30.0, missing_body=(), rng=None):
    rng = rng or np.random.default_rng(k)
    body = rng.uniform(0, 640, (8, 2))
    lh = rng.uniform(0, 640, (21, 2))
    rh = rng.uniform(0, 640, (21, 2))
    for i in missing_body:
        body[i] = np.nan
    return KeypointFrame(frame_index=k, body=body, left_hand=lh, right_hand=rh, fps=fps)


def stream_line(src, k, body_conf=1.0, joint4_conf=None):
    def pt(c):
        return [100.0 + k, 200.0, c]
    body = [pt(body_conf) for _ in range(8)]
    if joint4_conf is not None:
        body[4] = pt(joint4_conf)
    return json.dumps({"src": src, "k": k, "fps": 30.0,
                       "body": body, "lh": [None] * 21, "rh": [None] * 21})


class TestWireFormat:
    def test_single_line_all_joints(self, tmp_path):
        path = tmp_path / "s.jsonl"
        path.write_text(stream_line("a", 0) + "\n")
        samples = read_keypoint_stream(path)
        assert len(samples) == 1
        assert len(samples[0].frames) == 1
        assert not np.isnan(samples[0].frames[0].body).any()

    def test_zero_confidence_is_missing(self, tmp_path):
        path = tmp_path / "s.jsonl"
        path.write_text(stream_line("a", 0, joint4_conf=0.0) + "\n")
        frame = read_keypoint_stream(path)[0].frames[0]
        assert np.isnan(frame.body[4]).all()
        assert not np.isnan(frame.body[3]).any()

    def test_sub_floor_confidence_is_missing(self, tmp_path):
        path = tmp_path / "s.jsonl"
        path.write_text(stream_line("a", 0, joint4_conf=0.04) + "\n")
        frame = read_keypoint_stream(path)[0].frames[0]
        assert np.isnan(frame.body[4]).all()

    def test_interleaved_sources_round_trip(self, tmp_path):
        rng = np.random.default_rng(7)
        originals = [
            VideoSample(source_id=f"src{j}",
                        frames=[make_frame(k, rng=rng) for k in range(10)])
            for j in range(3)
        ]
        whole = tmp_path / "w.jsonl"
        write_keypoint_stream(originals, whole)
        lines = whole.read_text().splitlines()
        interleaved = [lines[j * 10 + k] for k in range(10) for j in range(3)]
        path = tmp_path / "s.jsonl"
        path.write_text("\n".join(interleaved) + "\n")
        samples = read_keypoint_stream(path)
        assert [s.source_id for s in samples] == ["src0", "src1", "src2"]
        for got, want in zip(samples, originals):
            assert len(got.frames) == 10
            assert all(frames_equal(a, b) for a, b in zip(got.frames, want.frames))

    def test_round_trip_preserves_missing(self, tmp_path):
        sample = VideoSample("x", [make_frame(k, missing_body=(2, 5)) for k in range(4)])
        path = tmp_path / "s.jsonl"
        write_keypoint_stream([sample], path)
        back = read_keypoint_stream(path)[0]
        assert samples_equal(VideoSample("x", sample.frames), back)
        assert np.isnan(back.frames[0].body[2]).all()

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = tmp_path / "s.jsonl"
        path.write_text(stream_line("a", 0) + "\n{not json\n")
        with pytest.raises(ParseError) as err:
            read_keypoint_stream(path)
        assert err.value.line_number == 2

    def test_non_monotonic_frame_index(self, tmp_path):
        path = tmp_path / "s.jsonl"
        path.write_text(stream_line("a", 1) + "\n" + stream_line("a", 1) + "\n")
        with pytest.raises(SequenceError):
            read_keypoint_stream(path)

    def test_partial_point_rejected(self):
        body = np.zeros((8, 2))
        body[3, 0] = np.nan
        with pytest.raises(ValueError, match="partial"):
            KeypointFrame(frame_index=0, body=body, left_hand=missing_points(21),
                          right_hand=missing_points(21), fps=30.0)


class TestFeatureArchive:
    def test_zero_filled_paper_parity_round_trip(self, tmp_path):
        seq = GestureSequence(features=np.zeros((40, 2177), dtype=np.float32),
                              label=3, pad_mask=np.zeros(40, dtype=bool),
                              source_id="z")
        path = tmp_path / "z.stad"
        n = write_feature_archive(seq, path)
        assert n == path.stat().st_size
        assert sequences_equal(seq, read_feature_archive(path))

    def test_random_round_trips(self, tmp_path):
        rng = np.random.default_rng(0)
        path = tmp_path / "r.stad"
        for trial in range(1000):
            dim = int(rng.integers(1, 40))
            mask = rng.random(40) < 0.2
            seq = GestureSequence(
                features=rng.normal(size=(40, dim)).astype(np.float32),
                label=int(rng.integers(0, 9)) if trial % 3 else None,
                pad_mask=mask, source_id=f"t{trial}")
            write_feature_archive(seq, path)
            assert sequences_equal(seq, read_feature_archive(path))

    def test_truncated_file_errors(self, tmp_path):
        seq = GestureSequence(features=np.ones((40, 8), dtype=np.float32),
                              label=0, pad_mask=np.zeros(40, dtype=bool))
        path = tmp_path / "t.stad"
        write_feature_archive(seq, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-17])
        with pytest.raises(ArchiveError):
            read_feature_archive(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "v.stad"
        write_container(path, {"kind": "SEQ", "version": 99}, b"")
        with pytest.raises(UnsupportedVersionError):
            read_container(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.stad"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 32)
        with pytest.raises(ArchiveError, match="magic"):
            read_container(path)
