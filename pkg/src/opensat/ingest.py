"""Tile-embed-insert pipeline feeding the store.

Tiles are produced in row-major order, embedded in provider-sized batches
(optionally in parallel), written as PNG files under the store's tiles/
directory, and inserted as one durable batch. Record order is independent
of worker scheduling.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .store import TileRecord, TileStore
from .tiler import (
    TileGridSpec,
    extract_tile,
    open_raster,
    plan_grid,
    tile_filename,
)
from .core import TileId

logger = logging.getLogger(__name__)

ProgressFn = Callable[[str, int, int], None]


@dataclass(frozen=True)
class IngestReport:
    image_id: str
    rows: int
    cols: int
    count: int


def ingest_image(
    store: TileStore,
    embedder,
    image_path: str | Path,
    image_id: str | None = None,
    tile_size: int = 224,
    stride: int | None = None,
    dump_dir: str | Path | None = None,
    parallelism: int = 1,
    progress: ProgressFn | None = None,
) -> IngestReport:
    """Ingest one raster image into the store; returns the grid summary."""
    image_path = Path(image_path)
    image_id = image_id or image_path.stem
    notify = progress or (lambda stage, done, total: None)

    image = open_raster(image_path)
    spec = TileGridSpec(image.width, image.height, tile_size=tile_size, stride=stride)
    grid = plan_grid(spec)
    total = len(grid)
    rows = max(rc[0] for rc, _ in grid) + 1
    cols = max(rc[1] for rc, _ in grid) + 1
    notify("tiling", 0, total)

    tiles_dir = store.path / "tiles" / image_id
    tiles_dir.mkdir(parents=True, exist_ok=True)
    dump_path = Path(dump_dir) if dump_dir else None
    if dump_path:
        dump_path.mkdir(parents=True, exist_ok=True)

    crops = []
    for (row, col), rect in grid:
        tile = extract_tile(image, rect)
        rel = f"tiles/{image_id}/{row}_{col}.png"
        _save_png(tile, store.path / rel)
        if dump_path:
            _save_png(tile, dump_path / tile_filename(image_id, row, col))
        crops.append((row, col, rect, rel, tile))

    batch_size = embedder.spec.batch_size
    batches = [crops[i : i + batch_size] for i in range(0, len(crops), batch_size)]
    done = 0
    notify("embedding", 0, total)

    def embed_batch(batch):
        return embedder.embed_image([c[4] for c in batch])

    embedded = []
    if parallelism > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            futures = [pool.submit(embed_batch, b) for b in batches]
            for future, batch in zip(futures, batches):
                embedded.append(future.result())
                done += len(batch)
                notify("embedding", done, total)
    else:
        for batch in batches:
            embedded.append(embed_batch(batch))
            done += len(batch)
            notify("embedding", done, total)

    records = []
    for batch, vectors in zip(batches, embedded):
        for (row, col, rect, rel, _tile), emb in zip(batch, vectors):
            records.append(
                TileRecord(TileId(image_id, row, col), emb, rect=rect, tile_path=rel)
            )

    notify("indexing", total, total)
    store.insert_batch(records)
    store.register_image(image_id, spec)
    logger.info("ingested %s: %d x %d grid, %d tiles", image_id, rows, cols, total)
    return IngestReport(image_id=image_id, rows=rows, cols=cols, count=total)


def _save_png(tile, path: Path) -> None:
    try:
        tile.save(path, format="PNG")
    except OSError:
        # Modes PNG cannot hold (e.g. float TIFF bands) fall back to RGB.
        tile.convert("RGB").save(path, format="PNG")
