"""Sliding-window decomposition of large rasters into fixed-size tiles.

Edge policy is clamp-and-overlap: the final row/column window is shifted
inward so its rect ends exactly at the image edge. No pixels are ever
fabricated and every pixel is covered by at least one tile. Tiles smaller
than ``tile_size`` occur only when the whole image is smaller than one
tile, in which case a single undersized tile covers the image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterator, NamedTuple

from PIL import Image

from .errors import EmptyImage, ImageDecodeError, RectOutOfBounds

DEFAULT_TILE_SIZE = 224


class TileRect(NamedTuple):
    """Pixel rectangle: left edge, top edge, width, height.

    Origin is non-negative and dimensions are positive; construction is
    kept validation-free because plan_grid emits thousands of rects per
    image, and every consumer bounds-checks against its raster anyway.
    """

    x: int
    y: int
    width: int
    height: int

    def as_box(self) -> tuple[int, int, int, int]:
        """PIL-style (left, upper, right, lower) box."""
        return (self.x, self.y, self.x + self.width, self.y + self.height)


@dataclass(frozen=True)
class TileGridSpec:
    image_width: int
    image_height: int
    tile_size: int = DEFAULT_TILE_SIZE
    stride: int | None = None

    def __post_init__(self):
        if self.tile_size < 1:
            raise ValueError("tile_size must be positive")
        if self.stride is not None and self.stride < 1:
            raise ValueError("stride must be >= 1")

    @property
    def effective_stride(self) -> int:
        return self.tile_size if self.stride is None else self.stride


def _axis_origins(length: int, tile: int, stride: int) -> list[int]:
    # Window count via ceiling division; the last origin clamps to the edge.
    if length <= tile:
        return [0]
    count = math.ceil((length - tile) / stride) + 1
    return [min(i * stride, length - tile) for i in range(count)]


@lru_cache(maxsize=64)
def _plan_grid_cached(spec: TileGridSpec) -> tuple:
    if spec.image_width <= 0 or spec.image_height <= 0:
        raise EmptyImage(
            f"image dimensions must be positive, got {spec.image_width}x{spec.image_height}"
        )
    stride = spec.effective_stride
    xs = _axis_origins(spec.image_width, spec.tile_size, stride)
    ys = _axis_origins(spec.image_height, spec.tile_size, stride)
    w = min(spec.tile_size, spec.image_width)
    h = min(spec.tile_size, spec.image_height)
    # tuple.__new__ skips the NamedTuple wrapper; large scenes emit
    # thousands of rects and this path is latency-sensitive
    new = tuple.__new__
    return tuple(
        ((row, col), new(TileRect, (x, y, w, h)))
        for row, y in enumerate(ys)
        for col, x in enumerate(xs)
    )


def plan_grid(spec: TileGridSpec) -> list[tuple[tuple[int, int], TileRect]]:
    """Lay out the sliding-window grid for an image.

    Returns ``((row, col), rect)`` pairs in row-major order. The grid has
    ``ceil((H - tile)/stride) + 1`` rows when H >= tile (1 otherwise), and
    the analogous column count. Identical specs always produce identical
    ordered grids; plans are memoized per spec.
    """
    return list(_plan_grid_cached(spec))


def is_undersized(spec: TileGridSpec) -> bool:
    """True when the image is smaller than one tile on either axis."""
    return spec.image_width < spec.tile_size or spec.image_height < spec.tile_size


def open_raster(path: str | Path) -> Image.Image:
    """Open a PNG/JPEG/TIFF raster for tile extraction."""
    try:
        img = Image.open(path)
        img.load()
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ImageDecodeError(f"cannot decode {path}: {exc}") from exc
    return img


def extract_tile(image: Image.Image, rect: TileRect) -> Image.Image:
    """Crop one tile; channel order and bit depth follow the source."""
    if rect.x < 0 or rect.y < 0 or rect.width <= 0 or rect.height <= 0:
        raise RectOutOfBounds(f"malformed rect {rect}")
    if rect.x + rect.width > image.width or rect.y + rect.height > image.height:
        raise RectOutOfBounds(
            f"rect {rect} exceeds image bounds {image.width}x{image.height}"
        )
    return image.crop(rect.as_box())


def iter_tiles(
    image: Image.Image, spec: TileGridSpec
) -> Iterator[tuple[int, int, TileRect, Image.Image]]:
    """Yield (row, col, rect, pixels) over the planned grid in row-major order."""
    for (row, col), rect in plan_grid(spec):
        yield row, col, rect, extract_tile(image, rect)


def tile_filename(image_id: str, row: int, col: int) -> str:
    return f"{image_id}_{row}_{col}.png"
