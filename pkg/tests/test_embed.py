import math

import numpy as np
import pytest

from stadnet.attention import HandBox
from stadnet.core import ArchiveError, Point2
from stadnet.embed import (
    STATIC_CLASSES,
    ExternalEmbeddingProvider,
    GeometricEmbedder,
    write_embedding_file,
)


def box(cx=100.0, cy=50.0, side=64.0, angle=0.0):
    return HandBox(Point2(cx, cy), side, angle, "left")


def hand(rng, n_missing=0):
    kp = rng.uniform(80, 120, (21, 2))
    if n_missing:
        kp[rng.choice(21, n_missing, replace=False)] = np.nan
    return kp


class TestGeometricEmbedder:
    def test_missing_hand_zero_and_uniform(self):
        e = GeometricEmbedder(dim=32, seed=0)
        for result in (e.embed(None, None), e.embed(np.full((21, 2), np.nan), box())):
            assert result.missing
            assert np.all(result.embedding == 0.0)
            assert np.allclose(result.probabilities, 1.0 / STATIC_CLASSES)

    def test_translation_invariance(self):
        rng = np.random.default_rng(1)
        e = GeometricEmbedder(dim=64, seed=3)
        kp = hand(rng)
        shift = np.array([37.0, -12.0])
        a = e.embed(kp, box(100, 50))
        b = e.embed(kp + shift, box(100 + shift[0], 50 + shift[1]))
        assert np.allclose(a.embedding, b.embedding, atol=1e-12)

    def test_rotation_invariance(self):
        rng = np.random.default_rng(2)
        e = GeometricEmbedder(dim=64, seed=3)
        kp = hand(rng)
        center = np.array([100.0, 50.0])
        delta = 0.7
        rot = np.array([[math.cos(delta), -math.sin(delta)],
                        [math.sin(delta), math.cos(delta)]])
        rotated = (kp - center) @ rot.T + center
        a = e.embed(kp, box(100, 50, angle=0.2))
        b = e.embed(rotated, box(100, 50, angle=0.2 + delta))
        assert np.allclose(a.embedding, b.embedding, atol=1e-9)

    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(3)
        e = GeometricEmbedder(dim=16, seed=5)
        for _ in range(50):
            result = e.embed(hand(rng, n_missing=int(rng.integers(0, 21))), box())
            assert abs(result.probabilities.sum() - 1.0) < 1e-6
            assert (result.probabilities > 0).all()

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(4)
        kp = hand(rng)
        a = GeometricEmbedder(dim=48, seed=9).embed(kp, box())
        b = GeometricEmbedder(dim=48, seed=9).embed(kp, box())
        assert np.array_equal(a.embedding, b.embedding)
        c = GeometricEmbedder(dim=48, seed=10).embed(kp, box())
        assert not np.array_equal(a.embedding, c.embedding)

    def test_embedding_dim(self):
        rng = np.random.default_rng(5)
        for dim in (16, 64, 1024):
            e = GeometricEmbedder(dim=dim, seed=0)
            assert e.embed(hand(rng), box()).embedding.shape == (dim,)


class TestExternalProvider:
    def entries(self, rng, dim=8):
        return {
            ("vid0", 0, "left"): rng.normal(size=dim).astype(np.float32),
            ("vid0", 0, "right"): rng.normal(size=dim).astype(np.float32),
            ("vid1", 3, "left"): rng.normal(size=dim).astype(np.float32),
        }

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(6)
        entries = self.entries(rng)
        path = tmp_path / "emb.stad"
        write_embedding_file(path, 8, entries)
        provider = ExternalEmbeddingProvider(path)
        assert provider.dim == 8
        for (src, frame, side), vec in entries.items():
            got = provider.embed(source_id=src, frame_index=frame, side=side)
            assert not got.missing
            assert np.allclose(got.embedding, vec.astype(np.float64), atol=0)

    def test_key_miss_flagged_zero(self, tmp_path):
        rng = np.random.default_rng(7)
        path = tmp_path / "emb.stad"
        write_embedding_file(path, 8, self.entries(rng))
        provider = ExternalEmbeddingProvider(path)
        got = provider.embed(source_id="vid9", frame_index=0, side="left")
        assert got.missing
        assert np.all(got.embedding == 0.0)
        assert np.allclose(got.probabilities.sum(), 1.0)

    def test_dim_mismatch_rejected(self, tmp_path):
        rng = np.random.default_rng(8)
        path = tmp_path / "emb.stad"
        write_embedding_file(path, 8, self.entries(rng))
        raw = bytearray(path.read_bytes())
        # truncate one embedding row so payload disagrees with the header
        path.write_bytes(bytes(raw[:-8 * 4]))
        with pytest.raises(ArchiveError):
            ExternalEmbeddingProvider(path)

    def test_wrong_row_shape_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            write_embedding_file(tmp_path / "e.stad", 8,
                                 {("a", 0, "left"): np.zeros(5, dtype=np.float32)})
