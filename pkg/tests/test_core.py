import math

import numpy as np
import pytest

from opensat.core import Embedding, TileId, cosine_similarity, l2_normalize
from opensat.errors import DegenerateVector, DimensionMismatch

from helpers import rand_unit


class TestEmbedding:
    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            Embedding.of([])

    def test_rejects_nan_and_inf(self):
        with pytest.raises(ValueError):
            Embedding.of([1.0, float("nan")])
        with pytest.raises(ValueError):
            Embedding.of([float("inf"), 0.0])

    def test_rejects_false_normalized_flag(self):
        with pytest.raises(ValueError):
            Embedding.of([3.0, 4.0], normalized=True)

    def test_values_are_immutable(self):
        e = Embedding.of([1.0, 2.0])
        with pytest.raises(ValueError):
            e.values[0] = 9.0

    def test_storage_is_float32(self):
        assert Embedding.of([1.0, 2.0]).values.dtype == np.float32


class TestTileId:
    def test_key_round_trip(self):
        tid = TileId("scene_042:v2", 3, 17)
        assert TileId.from_key(tid.key()) == tid

    def test_ordering(self):
        ids = [TileId("b", 0, 0), TileId("a", 1, 0), TileId("a", 0, 5), TileId("a", 0, 2)]
        assert sorted(ids) == [
            TileId("a", 0, 2),
            TileId("a", 0, 5),
            TileId("a", 1, 0),
            TileId("b", 0, 0),
        ]

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            TileId("img", -1, 0)


class TestCosineSimilarity:
    def test_identical_unit_vectors(self):
        a = Embedding.of([1, 0])
        assert cosine_similarity(a, Embedding.of([1, 0])) == 1.0

    def test_orthogonal(self):
        assert cosine_similarity(Embedding.of([1, 0]), Embedding.of([0, 1])) == 0.0

    def test_hand_computed(self):
        # dot = 24, norms = 5 * 5
        assert cosine_similarity(Embedding.of([3, 4]), Embedding.of([4, 3])) == 0.96

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            cosine_similarity(Embedding.of([1, 0]), Embedding.of([1, 0, 0]))

    def test_zero_norm(self):
        with pytest.raises(DegenerateVector):
            cosine_similarity(Embedding.of([0, 0]), Embedding.of([1, 0]))

    def test_symmetry_exact(self, rng):
        for _ in range(50):
            a = Embedding(rng.standard_normal(97).astype(np.float32))
            b = Embedding(rng.standard_normal(97).astype(np.float32))
            assert cosine_similarity(a, b) == cosine_similarity(b, a)

    def test_scale_invariance(self, rng):
        # Power-of-two factors scale float32 storage exactly, isolating the
        # algorithm's scale invariance from input quantization.
        for k in (0.25, 0.5, 2.0, 1024.0, 2.0**-12):
            a = Embedding(rng.standard_normal(64).astype(np.float32))
            b = Embedding(rng.standard_normal(64).astype(np.float32))
            scaled = Embedding(np.asarray(a.values * np.float32(k), dtype=np.float32))
            assert cosine_similarity(scaled, b) == pytest.approx(
                cosine_similarity(a, b), abs=1e-9
            )

    def test_scale_invariance_arbitrary_factor(self, rng):
        # Non-dyadic factors re-quantize each float32 component (~6e-8
        # relative), so the bound follows the storage width.
        a = Embedding(rng.standard_normal(64).astype(np.float32))
        b = Embedding(rng.standard_normal(64).astype(np.float32))
        scaled = Embedding(np.asarray(a.values * np.float32(3.7), dtype=np.float32))
        assert cosine_similarity(scaled, b) == pytest.approx(
            cosine_similarity(a, b), abs=1e-6
        )

    def test_self_similarity(self, rng):
        for _ in range(20):
            a = Embedding(rng.standard_normal(32).astype(np.float32))
            assert cosine_similarity(a, a) == pytest.approx(1.0, abs=1e-9)

    def test_output_clamped(self, rng):
        for _ in range(200):
            a = rand_unit(rng, 8)
            b = rand_unit(rng, 8)
            assert -1.0 <= cosine_similarity(a, b) <= 1.0

    def test_normalized_fast_path_matches_general(self, rng):
        a, b = rand_unit(rng, 48), rand_unit(rng, 48)
        plain_a = Embedding(a.values)
        plain_b = Embedding(b.values)
        assert cosine_similarity(a, b) == pytest.approx(
            cosine_similarity(plain_a, plain_b), abs=1e-9
        )


class TestL2Normalize:
    def test_scaled_triple(self):
        out = l2_normalize(Embedding.of([3, 4]))
        assert out.tolist() == pytest.approx([0.6, 0.8], abs=1e-7)
        assert out.normalized

    def test_axis_vector(self):
        assert l2_normalize(Embedding.of([0, 0, 5])).tolist() == [0.0, 0.0, 1.0]

    def test_quarter_components(self):
        # 1/sqrt(4) per component
        assert l2_normalize(Embedding.of([1, 1, 1, 1])).tolist() == [0.5] * 4

    def test_unit_norm_within_tolerance(self, rng):
        for _ in range(100):
            v = Embedding(rng.standard_normal(512).astype(np.float32) * 10)
            norm = math.sqrt(sum(x * x for x in l2_normalize(v).tolist()))
            assert abs(norm - 1.0) <= 1e-6

    def test_idempotent(self, rng):
        for _ in range(50):
            once = l2_normalize(Embedding(rng.standard_normal(64).astype(np.float32)))
            twice = l2_normalize(once)
            assert np.max(np.abs(twice.values - once.values)) <= 1e-9

    def test_preserves_direction(self, rng):
        v = Embedding(rng.standard_normal(32).astype(np.float32))
        assert cosine_similarity(v, l2_normalize(v)) == pytest.approx(1.0, abs=1e-9)

    def test_near_zero_rejected(self):
        with pytest.raises(DegenerateVector):
            l2_normalize(Embedding.of([0.0, 1e-13]))
