"""Shared test fixtures: deterministic vectors, fixture files, synthetic geometry."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from opensat.context import (
    BASE_TEMPLATE,
    COMPOSED_TEMPLATE,
    SURROUNDING_TEMPLATE,
)
from opensat.core import Embedding, TileId, l2_normalize
from opensat.embedders import write_jsonl
from opensat.store import TileRecord

RIVER_FIXTURE = {
    "river": {
        "object": "river",
        "surroundings": ["road", "mountain", "bridge", "forest", "field"],
    },
    "Find Construction Sites": {
        "object": "construction site",
        "surroundings": ["crane", "access road", "parking lot", "building", "dirt field"],
    },
    "Solar panel": {
        "object": "solar panel",
        "surroundings": ["rooftop", "parking lot", "road", "lawn", "building"],
    },
}


def rand_unit(rng: np.random.Generator, dim: int) -> Embedding:
    return l2_normalize(Embedding(rng.standard_normal(dim).astype(np.float32)))


def orthonormal_basis(rng: np.random.Generator, dim: int, k: int) -> list[np.ndarray]:
    q, _ = np.linalg.qr(rng.standard_normal((dim, k)))
    return [np.asarray(q[:, i], dtype=np.float64) for i in range(k)]


def unit(v: np.ndarray) -> Embedding:
    return l2_normalize(Embedding(np.asarray(v, dtype=np.float32)))


def write_fixture(path: Path, entries: dict | None = None) -> Path:
    path.write_text(json.dumps(entries or RIVER_FIXTURE), encoding="utf-8")
    return path


@dataclass
class SynthGeometry:
    """Synthetic concept geometry for the separation-shift experiments.

    Relevant tiles mix the object concept with weighted surrounding
    concepts; irrelevant tiles are pure surrounding mixtures. Composed
    text vectors are modeled as normalize(object + surrounding).
    """

    object_class: str
    background_class: str
    surroundings: list[str]
    base_text: Embedding
    composed_texts: list[Embedding]
    background_texts: list[Embedding]
    relevant: list[Embedding]
    irrelevant: list[Embedding]

    @property
    def prompt_vectors(self) -> list[tuple[str, Embedding, None]]:
        rows: list[tuple[str, Embedding, None]] = [
            (BASE_TEMPLATE.format(object=self.object_class), self.base_text, None)
        ]
        for name, emb in zip(self.surroundings, self.composed_texts):
            rows.append(
                (
                    COMPOSED_TEMPLATE.format(object=self.object_class, surrounding=name),
                    emb,
                    None,
                )
            )
        for name, emb in zip(self.surroundings, self.background_texts):
            rows.append((SURROUNDING_TEMPLATE.format(surrounding=name), emb, None))
        return rows

    def tile_records(self) -> list[TileRecord]:
        records = []
        for i, emb in enumerate(self.relevant):
            records.append(
                TileRecord(TileId("rel", 0, i), emb, label=self.object_class)
            )
        for i, emb in enumerate(self.irrelevant):
            records.append(
                TileRecord(TileId("irr", 0, i), emb, label=self.background_class)
            )
        return records

    def archive_rows(self) -> list[tuple[str, Embedding, str]]:
        return [
            (rec.id.key(), rec.embedding, rec.label) for rec in self.tile_records()
        ]


def synth_geometry(
    seed: int,
    dim: int = 128,
    n: int = 5,
    relevant: int = 30,
    irrelevant: int = 30,
    object_class: str = "river",
) -> SynthGeometry:
    rng = np.random.default_rng(seed)
    basis = orthonormal_basis(rng, dim, n + 1)
    x, ys = basis[0], basis[1:]
    surroundings = [f"context {chr(ord('a') + i)}" for i in range(n)]

    rel = []
    for _ in range(relevant):
        w = rng.uniform(0.3, 0.7, n)
        rel.append(unit(x + sum(wi * y for wi, y in zip(w, ys))))
    irr = []
    for _ in range(irrelevant):
        w = rng.uniform(0.3, 0.7, n)
        irr.append(unit(sum(wi * y for wi, y in zip(w, ys))))

    return SynthGeometry(
        object_class=object_class,
        background_class="background",
        surroundings=surroundings,
        base_text=unit(x),
        composed_texts=[unit(x + y) for y in ys],
        background_texts=[unit(y) for y in ys],
        relevant=rel,
        irrelevant=irr,
    )


def write_synth_environment(geo: SynthGeometry, root: Path) -> dict[str, Path]:
    """Materialize one synthetic geometry as archive + embedder + fixture files."""
    root.mkdir(parents=True, exist_ok=True)
    archive = root / "archive.jsonl"
    write_jsonl(archive, geo.archive_rows())
    vectors = root / "prompt_vectors.jsonl"
    write_jsonl(vectors, geo.prompt_vectors)
    fixture = root / "fixture.json"
    write_fixture(
        fixture,
        {
            geo.object_class: {
                "object": geo.object_class,
                "surroundings": geo.surroundings,
            }
        },
    )
    return {"archive": archive, "vectors": vectors, "fixture": fixture}
