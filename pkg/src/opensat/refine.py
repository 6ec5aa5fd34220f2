"""Training-free text-embedding refinement.

For the object of interest x and each surrounding object y_i, three text
embeddings are produced from the prompt templates: the base vector for x,
the composed "x with a surrounding y_i" vector, and the background vector
for y_i. Each surrounding contributes an adjusted vector

    adjusted_i = base + alpha * composed_i - beta * background_i

and the refined query embedding is the L2-normalized mean of the adjusted
vectors. alpha weighs the joint-context term, beta the background
subtraction; both default to 1 and are never tuned automatically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .context import QueryContext, render_prompts
from .core import Embedding
from .errors import DegenerateVector, DimensionMismatch

NORMALIZE_STAGES = ("per_term", "post_composition", "both")


@dataclass(frozen=True)
class RefinementConfig:
    alpha: float = 1.0
    beta: float = 1.0
    n: int = 5
    normalize_stage: str = "per_term"

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.n < 1:
            raise ValueError("surrounding count must be >= 1")
        if self.normalize_stage not in NORMALIZE_STAGES:
            raise ValueError(
                f"normalize_stage must be one of {NORMALIZE_STAGES}, "
                f"got {self.normalize_stage!r}"
            )

    @property
    def normalize_terms(self) -> bool:
        return self.normalize_stage in ("per_term", "both")


@dataclass(frozen=True)
class QueryEmbeddingSet:
    """Every vector involved in refining one query."""

    base: Embedding
    composed: tuple[Embedding, ...]
    backgrounds: tuple[Embedding, ...]
    refined_per_surrounding: tuple[Embedding, ...]
    refined: Embedding
    surrounding_texts: tuple[str, ...]


def refine_single(
    base: Embedding,
    composed: Embedding,
    background: Embedding,
    cfg: RefinementConfig,
) -> Embedding:
    """Adjusted vector for one surrounding object.

    Computes base + alpha*composed - beta*background in float64. The
    result is L2-normalized when the config normalizes per term. A result
    with norm below 1e-9 (terms cancelling the base) is an error rather
    than a silent fallback; callers may retry with a smaller beta.
    """
    if not (base.dim == composed.dim == background.dim):
        raise DimensionMismatch(
            f"refine inputs disagree: {base.dim}/{composed.dim}/{background.dim}"
        )
    if cfg.normalize_terms:
        for name, e in (("base", base), ("composed", composed), ("background", background)):
            if not e.normalized:
                raise ValueError(
                    f"normalize_stage={cfg.normalize_stage!r} requires unit-norm "
                    f"inputs, but {name} is not normalized"
                )
    v = (
        base.values.astype(np.float64)
        + cfg.alpha * composed.values.astype(np.float64)
        - cfg.beta * background.values.astype(np.float64)
    )
    norm = float(np.linalg.norm(v))
    if norm < 1e-9:
        raise DegenerateVector(
            "refinement terms cancelled the base vector; retry with smaller beta"
        )
    if cfg.normalize_terms:
        return Embedding(np.asarray(v / norm, dtype=np.float32), normalized=True)
    return Embedding(np.asarray(v, dtype=np.float32))


def refine_query(ctx: QueryContext, embedder, cfg: RefinementConfig) -> QueryEmbeddingSet:
    """Refine the query embedding over all surroundings of a context.

    Embeds the 2n+1 distinct prompt strings (the base prompt once, plus a
    composed and a background prompt per surrounding), adjusts per
    surrounding, then averages and L2-normalizes the mean.
    """
    triples = render_prompts(ctx)
    texts = [triples[0].base]
    texts += [t.composed for t in triples]
    texts += [t.surrounding for t in triples]
    vectors = embedder.embed_text(texts)
    n = len(triples)
    base = vectors[0]
    composed = tuple(vectors[1 : 1 + n])
    backgrounds = tuple(vectors[1 + n :])

    adjusted = tuple(
        refine_single(base, composed[i], backgrounds[i], cfg) for i in range(n)
    )

    # Accumulate in a canonical order so the mean is bit-stable under any
    # reordering of the surroundings.
    order = sorted(range(n), key=lambda i: ctx.surroundings[i])
    total = np.zeros(base.dim, dtype=np.float64)
    for i in order:
        total += adjusted[i].values.astype(np.float64)
    mean = total / n
    norm = float(np.linalg.norm(mean))
    if norm < 1e-9:
        raise DegenerateVector("refined mean vanished; retry with smaller beta")
    refined = Embedding(np.asarray(mean / norm, dtype=np.float32), normalized=True)

    return QueryEmbeddingSet(
        base=base,
        composed=composed,
        backgrounds=backgrounds,
        refined_per_surrounding=adjusted,
        refined=refined,
        surrounding_texts=tuple(ctx.surroundings),
    )
