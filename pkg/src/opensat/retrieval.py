"""Retrieval strategies over the tile store.

Three methods share one entry point:

* ``threshold``        — baseline: keep tiles whose similarity to the base
  query prompt strictly exceeds a fixed cutoff.
* ``opensat_plain``    — threshold-free: each tile is classified by argmax
  similarity over the object of interest and its surrounding objects; the
  tile is retrieved only when the object wins.
* ``opensat_refined``  — same classifier, but the object embedding is the
  refined query vector; the surrounding class embeddings stay unrefined.

Ties between the object and the best surrounding go to the object
(favoring recall). Threshold comparison is strict (>).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .context import QueryContext, derive_context, render_prompts
from .core import Embedding, TileId
from .refine import RefinementConfig, refine_query
from .store import ScanRow, TileStore

METHODS = ("threshold", "opensat_plain", "opensat_refined")

DEFAULT_THRESHOLD = 0.28


@dataclass(frozen=True)
class RetrievalRequest:
    query: str
    method: str = "opensat_refined"
    threshold: float = DEFAULT_THRESHOLD
    cfg: RefinementConfig = field(default_factory=RefinementConfig)
    image_filter: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not (-1.0 < self.threshold < 1.0):
            raise ValueError("threshold must lie in (-1, 1)")


@dataclass(frozen=True)
class TileDiagnostic:
    tile_id: TileId
    winning_label: str
    sim_to_object: float
    max_sim_to_surroundings: float | None  # None for the threshold method


@dataclass(frozen=True)
class RetrievalResult:
    retrieved: tuple[TileId, ...]
    per_tile: tuple[TileDiagnostic, ...]
    context: QueryContext | None
    method: str
    elapsed_ms: int


def retrieve_threshold(
    store: TileStore,
    query_embedding: Embedding,
    threshold: float,
    image_filter: str | None = None,
) -> RetrievalResult:
    """Tiles whose similarity to the query strictly exceeds the threshold."""
    t0 = time.perf_counter()
    rows = store.scan_similarities(query_embedding, [], image_filter=image_filter)
    per_tile = tuple(
        TileDiagnostic(r.tile_id, "", r.sim_to_query, None) for r in rows
    )
    retrieved = tuple(r.tile_id for r in rows if r.sim_to_query > threshold)
    return RetrievalResult(
        retrieved=retrieved,
        per_tile=per_tile,
        context=None,
        method="threshold",
        elapsed_ms=int((time.perf_counter() - t0) * 1000),
    )


def _classify_row(
    row: ScanRow, object_label: str, surrounding_names: list[str]
) -> TileDiagnostic:
    max_surr = max(row.candidate_sims)
    if row.sim_to_query >= max_surr:  # tie goes to the object of interest
        winner = object_label
    else:
        winner = surrounding_names[row.candidate_sims.index(max_surr)]
    return TileDiagnostic(row.tile_id, winner, row.sim_to_query, max_surr)


def classify_tiles(
    store: TileStore,
    object_embedding: Embedding,
    surrounding_embeddings: list[Embedding],
    surrounding_names: list[str],
    object_label: str,
    image_filter: str | None = None,
) -> RetrievalResult:
    """Argmax classification of every tile over object vs. surroundings."""
    if len(surrounding_embeddings) != len(surrounding_names) or not surrounding_names:
        raise ValueError("surrounding embeddings and names must align and be non-empty")
    t0 = time.perf_counter()
    rows = store.scan_similarities(
        object_embedding, surrounding_embeddings, image_filter=image_filter
    )
    per_tile = tuple(_classify_row(r, object_label, surrounding_names) for r in rows)
    retrieved = tuple(
        d.tile_id for d in per_tile if d.winning_label == object_label
    )
    return RetrievalResult(
        retrieved=retrieved,
        per_tile=per_tile,
        context=None,
        method="opensat_plain",
        elapsed_ms=int((time.perf_counter() - t0) * 1000),
    )


def retrieve(
    store: TileStore,
    embedder,
    context_provider,
    request: RetrievalRequest,
    cache=None,
) -> RetrievalResult:
    """Dispatch a retrieval request through context derivation and embedding."""
    t0 = time.perf_counter()
    ctx = derive_context(
        request.query, n=request.cfg.n, provider=context_provider, cache=cache
    )
    triples = render_prompts(ctx)

    if request.method == "threshold":
        base = embedder.embed_text([triples[0].base])[0]
        result = retrieve_threshold(
            store, base, request.threshold, image_filter=request.image_filter
        )
    elif request.method == "opensat_plain":
        texts = [triples[0].base] + [t.surrounding for t in triples]
        vectors = embedder.embed_text(texts)
        result = classify_tiles(
            store,
            vectors[0],
            vectors[1:],
            list(ctx.surroundings),
            ctx.object_of_interest,
            image_filter=request.image_filter,
        )
    else:  # opensat_refined
        qset = refine_query(ctx, embedder, request.cfg)
        result = classify_tiles(
            store,
            qset.refined,
            list(qset.backgrounds),
            list(ctx.surroundings),
            ctx.object_of_interest,
            image_filter=request.image_filter,
        )

    return RetrievalResult(
        retrieved=result.retrieved,
        per_tile=result.per_tile,
        context=ctx,
        method=request.method,
        elapsed_ms=int((time.perf_counter() - t0) * 1000),
    )
