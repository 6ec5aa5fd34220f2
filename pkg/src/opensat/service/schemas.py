"""Request/response models and the canonical query result document.

The JSON document shapes produced here are mirrored by the JSON Schema
files under schemas/ in the repository root and are shared by the HTTP
service and the CLI's --json output.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field

from ..retrieval import RetrievalResult
from ..store import TileStore

SCHEMA_VERSION = 1


class UploadResponse(BaseModel):
    image_id: str


class IndexResponse(BaseModel):
    job_id: str


class JobView(BaseModel):
    job_id: str
    image_id: str
    state: Literal["pending", "tiling", "embedding", "indexing", "done", "failed"]
    tiles_total: int
    tiles_done: int
    error: Optional[str] = None


class QueryBody(BaseModel):
    text: str = Field(min_length=1)
    method: Literal["threshold", "opensat_plain", "opensat_refined"] = "opensat_refined"
    alpha: float = Field(default=1.0, ge=0)
    beta: float = Field(default=1.0, ge=0)
    n: int = Field(default=5, ge=1)
    threshold: float = Field(default=0.28, gt=-1.0, lt=1.0)
    image_id: Optional[str] = None
    normalize_stage: Literal["per_term", "post_composition", "both"] = "per_term"


class ErrorBody(BaseModel):
    code: str
    message: str


class HealthStore(BaseModel):
    dim: int
    record_count: int
    image_count: int


class HealthResponse(BaseModel):
    status: str
    store: HealthStore


def build_query_document(
    store: TileStore,
    result: RetrievalResult,
    query: str,
    params: dict,
    include_elapsed: bool = True,
) -> dict:
    """Assemble the canonical query result JSON document."""
    ctx = result.context
    doc = {
        "schema_version": SCHEMA_VERSION,
        "query": query,
        "method": result.method,
        "count": len(result.retrieved),
        "params": {
            "alpha": params.get("alpha", 1.0),
            "beta": params.get("beta", 1.0),
            "n": params.get("n", 5),
            "threshold": params.get("threshold", 0.28),
            "normalize_stage": params.get("normalize_stage", "per_term"),
        },
        "context": None
        if ctx is None
        else {
            "raw_query": ctx.raw_query,
            "object_of_interest": ctx.object_of_interest,
            "surroundings": list(ctx.surroundings),
            "source": ctx.source,
        },
        "retrieved": [
            {"image_id": t.image_id, "row": t.row, "col": t.col}
            for t in result.retrieved
        ],
        "per_tile": [
            {
                "tile_id": {
                    "image_id": d.tile_id.image_id,
                    "row": d.tile_id.row,
                    "col": d.tile_id.col,
                },
                "winning_label": d.winning_label,
                "sim_to_object": d.sim_to_object,
                "max_sim_to_surroundings": d.max_sim_to_surroundings,
            }
            for d in result.per_tile
        ],
        "evidence": _evidence(store, result),
    }
    if include_elapsed:
        doc["elapsed_ms"] = result.elapsed_ms
    return doc


def _evidence(store: TileStore, result: RetrievalResult) -> list[dict]:
    diagnostics = {d.tile_id: d for d in result.per_tile}
    items = []
    for tile_id in result.retrieved:
        rec = store.record(tile_id)
        d = diagnostics[tile_id]
        has_image = rec is not None and rec.tile_path is not None
        items.append(
            {
                "tile_id": {
                    "image_id": tile_id.image_id,
                    "row": tile_id.row,
                    "col": tile_id.col,
                },
                "url": (
                    f"/tiles/{tile_id.image_id}/{tile_id.row}/{tile_id.col}.png"
                    if has_image
                    else None
                ),
                "rect": (
                    [rec.rect.x, rec.rect.y, rec.rect.width, rec.rect.height]
                    if rec is not None and rec.rect is not None
                    else None
                ),
                "winning_label": d.winning_label,
                "sim_to_object": d.sim_to_object,
            }
        )
    return items
