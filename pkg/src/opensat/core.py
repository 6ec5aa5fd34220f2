"""Shared domain types and vector math primitives.

Vectors are stored as float32 (storage economy) while all dot products and
norms accumulate in float64 for numerical stability. Cosine outputs are
clamped to [-1, 1] so downstream argmax and metrics never see rounding
excursions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateVector, DimensionMismatch

# A cosine similarity value in [-1, 1].
SimilarityScore = float

NORM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class Embedding:
    """Fixed-dimension real vector with an explicit normalization state.

    ``values`` is a read-only float32 array of shape (dim,). When
    ``normalized`` is true the L2 norm is within 1e-6 of 1.
    """

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float32)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("embedding values must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(arr)):
            raise ValueError("embedding values must be finite")
        arr = np.array(arr, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        if self.normalized:
            norm = float(np.linalg.norm(arr.astype(np.float64)))
            if abs(norm - 1.0) > NORM_TOLERANCE:
                raise ValueError(f"embedding flagged normalized but |v| = {norm}")

    @property
    def dim(self) -> int:
        return int(self.values.size)

    @classmethod
    def of(cls, values: Sequence[float], normalized: bool = False) -> "Embedding":
        return cls(np.asarray(values, dtype=np.float32), normalized=normalized)

    def tolist(self) -> list[float]:
        return [float(v) for v in self.values]


@dataclass(frozen=True, order=True)
class TileId:
    """Identity of one tile: source image plus grid position."""

    image_id: str
    row: int
    col: int

    def __post_init__(self):
        if self.row < 0 or self.col < 0:
            raise ValueError("tile row/col must be non-negative")

    def key(self) -> str:
        return f"{self.image_id}:{self.row}:{self.col}"

    @classmethod
    def from_key(cls, key: str) -> "TileId":
        image_id, row, col = key.rsplit(":", 2)
        return cls(image_id, int(row), int(col))


def _f64(e: Embedding) -> np.ndarray:
    return e.values.astype(np.float64)


def cosine_similarity(a: Embedding, b: Embedding) -> SimilarityScore:
    """Cosine similarity of two embeddings, clamped to [-1, 1].

    When both inputs are flagged normalized the plain dot product is
    returned (still clamped); otherwise the dot is divided by the norms.
    """
    if a.dim != b.dim:
        raise DimensionMismatch(f"cosine inputs disagree: {a.dim} vs {b.dim}")
    av, bv = _f64(a), _f64(b)
    if np.array_equal(a.values, b.values):
        # cos(v, v) is exactly 1; storage rounding must not blur that
        if not a.normalized and float(np.linalg.norm(av)) <= 1e-12:
            raise DegenerateVector("cosine of a zero-norm vector is undefined")
        return 1.0
    if a.normalized and b.normalized:
        sim = float(np.dot(av, bv))
    else:
        na = float(np.linalg.norm(av))
        nb = float(np.linalg.norm(bv))
        if na <= 1e-12 or nb <= 1e-12:
            raise DegenerateVector("cosine of a zero-norm vector is undefined")
        sim = float(np.dot(av, bv)) / (na * nb)
    return max(-1.0, min(1.0, sim))


def l2_normalize(a: Embedding) -> Embedding:
    """Scale to unit L2 norm, preserving direction.

    Already-flagged inputs are returned unchanged, which makes the
    operation exactly idempotent despite float32 storage.
    """
    if a.normalized:
        return a
    v = _f64(a)
    norm = float(np.linalg.norm(v))
    if norm <= 1e-12:
        raise DegenerateVector("cannot normalize a near-zero vector")
    return Embedding(np.asarray(v / norm, dtype=np.float32), normalized=True)
