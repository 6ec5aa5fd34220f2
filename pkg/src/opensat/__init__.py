"""Open-vocabulary satellite image tile retrieval.

Pipeline: sliding-window tiling -> tile embeddings -> persistent flat
vector index; at query time an LLM-derived context (object of interest
plus surrounding objects) drives threshold-free argmax retrieval, with
optional training-free refinement of the query embedding.
"""

from .core import Embedding, SimilarityScore, TileId, cosine_similarity, l2_normalize
from .context import QueryContext, derive_context, render_prompts
from .refine import QueryEmbeddingSet, RefinementConfig, refine_query, refine_single
from .retrieval import (
    RetrievalRequest,
    RetrievalResult,
    classify_tiles,
    retrieve,
    retrieve_threshold,
)
from .store import TileRecord, TileStore
from .tiler import TileGridSpec, TileRect, extract_tile, plan_grid

__version__ = "0.1.0"

__all__ = [
    "Embedding",
    "QueryContext",
    "QueryEmbeddingSet",
    "RefinementConfig",
    "RetrievalRequest",
    "RetrievalResult",
    "SimilarityScore",
    "TileGridSpec",
    "TileId",
    "TileRecord",
    "TileRect",
    "TileStore",
    "classify_tiles",
    "cosine_similarity",
    "derive_context",
    "extract_tile",
    "l2_normalize",
    "plan_grid",
    "refine_query",
    "refine_single",
    "render_prompts",
    "retrieve",
    "retrieve_threshold",
]
