"""Persistent flat vector index mapping tile ids to embeddings.

On-disk layout, one directory per store:

    manifest.json     dim, record/segment bookkeeping, registered images
    segments/NNN.vec  immutable vector segments (binary embedding format)
    labels.jsonl      sidecar per-record label / pixel rect / tile image path
    tiles/            tile image files referenced by tile_path
    .lock             advisory writer lock

Writes append a new segment and atomically replace the manifest, so a
reader sees either the old or the new record set, never a torn one.
Scans are exact brute-force dot products in a fixed accumulation order
(one float64 dot per stored vector), which keeps every retrieval property
bit-for-bit testable against a naive oracle.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Embedding, TileId
from .embedders import read_binary, write_binary
from .errors import (
    DegenerateVector,
    DimensionMismatch,
    DuplicateTile,
    EmptyStore,
    ManifestParseError,
)
from .tiler import TileGridSpec, TileRect

MANIFEST_VERSION = 1


@dataclass(frozen=True)
class TileRecord:
    id: TileId
    embedding: Embedding
    rect: TileRect | None = None  # None for imported archive vectors
    label: str | None = None
    tile_path: str | None = None


@dataclass(frozen=True)
class ScanRow:
    tile_id: TileId
    sim_to_query: float
    candidate_sims: tuple[float, ...]


@dataclass(frozen=True)
class _Sidecar:
    rect: TileRect | None
    label: str | None
    tile_path: str | None


@dataclass(frozen=True)
class _Snapshot:
    # (tile_id, segment_index, row_index) sorted by tile id
    index: tuple[tuple[TileId, int, int], ...]
    matrices: tuple[np.ndarray, ...]
    sidecar: dict[str, _Sidecar]

    @property
    def count(self) -> int:
        return len(self.index)


def _clamp(x: float) -> float:
    return max(-1.0, min(1.0, x))


class TileStore:
    def __init__(self, path: str | Path, manifest: dict, snapshot: _Snapshot):
        self.path = Path(path)
        self._manifest = manifest
        self._snapshot = snapshot
        self._write_lock = threading.Lock()

    # -- lifecycle -----------------------------------------------------

    @classmethod
    def create(cls, path: str | Path, dim: int = 512) -> "TileStore":
        path = Path(path)
        if (path / "manifest.json").exists():
            raise FileExistsError(f"store already exists at {path}")
        (path / "segments").mkdir(parents=True, exist_ok=True)
        (path / "tiles").mkdir(exist_ok=True)
        manifest = {
            "format_version": MANIFEST_VERSION,
            "dim": int(dim),
            "record_count": 0,
            "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "images": [],
            "segments": [],
        }
        store = cls(path, manifest, _Snapshot((), (), {}))
        store._write_manifest()
        return store

    @classmethod
    def open(cls, path: str | Path) -> "TileStore":
        path = Path(path)
        manifest_path = path / "manifest.json"
        if not manifest_path.exists():
            raise FileNotFoundError(f"no store at {path}")
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        if manifest.get("format_version") != MANIFEST_VERSION:
            raise ManifestParseError(
                f"unsupported store format_version {manifest.get('format_version')}"
            )
        snapshot = cls._load_snapshot(path, manifest)
        if snapshot.count != manifest["record_count"]:
            raise ManifestParseError(
                f"manifest claims {manifest['record_count']} records, "
                f"segments hold {snapshot.count}"
            )
        return cls(path, manifest, snapshot)

    @classmethod
    def open_or_create(cls, path: str | Path, dim: int = 512) -> "TileStore":
        if (Path(path) / "manifest.json").exists():
            return cls.open(path)
        return cls.create(path, dim)

    @staticmethod
    def _load_snapshot(path: Path, manifest: dict) -> _Snapshot:
        sidecar: dict[str, _Sidecar] = {}
        labels_path = path / "labels.jsonl"
        if labels_path.exists():
            with open(labels_path, "r", encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    row = json.loads(line)
                    rect = row.get("rect")
                    sidecar[row["key"]] = _Sidecar(
                        rect=TileRect(*rect) if rect else None,
                        label=row.get("label"),
                        tile_path=row.get("tile_path"),
                    )
        entries = []
        matrices = []
        for seg_i, name in enumerate(manifest["segments"]):
            dim, records = read_binary(path / "segments" / name)
            if dim != manifest["dim"]:
                raise ManifestParseError(
                    f"segment {name} has dim {dim}, store dim {manifest['dim']}"
                )
            matrices.append(np.stack([rec[1].values for rec in records]))
            for row_i, (key, _emb, label) in enumerate(records):
                tile_id = TileId.from_key(key)
                entries.append((tile_id, seg_i, row_i))
                if key not in sidecar:
                    sidecar[key] = _Sidecar(rect=None, label=label, tile_path=None)
        entries.sort(key=lambda e: e[0])
        return _Snapshot(tuple(entries), tuple(matrices), sidecar)

    # -- properties ----------------------------------------------------

    @property
    def dim(self) -> int:
        return int(self._manifest["dim"])

    @property
    def count(self) -> int:
        return self._snapshot.count

    @property
    def images(self) -> list[dict]:
        return list(self._manifest["images"])

    def has_image(self, image_id: str) -> bool:
        return any(img["image_id"] == image_id for img in self._manifest["images"])

    def manifest_path(self) -> Path:
        return self.path / "manifest.json"

    # -- writes ----------------------------------------------------------

    def insert_batch(self, records: list[TileRecord]) -> int:
        """All-or-nothing durable insert; returns the number inserted."""
        if not records:
            return 0
        for rec in records:
            if rec.embedding.dim != self.dim:
                raise DimensionMismatch(
                    f"record {rec.id.key()} has dim {rec.embedding.dim}, "
                    f"store dim {self.dim}"
                )
            if not rec.embedding.normalized:
                raise ValueError(f"record {rec.id.key()} embedding is not normalized")

        with self._write_lock, _file_lock(self.path / ".lock"):
            snapshot = self._snapshot
            existing = {tid.key() for tid, _, _ in snapshot.index}
            seen: set[str] = set()
            for rec in records:
                key = rec.id.key()
                if key in existing or key in seen:
                    raise DuplicateTile(f"tile {key} already present")
                seen.add(key)
            seg_name = f"{len(self._manifest['segments']):03d}.vec"
            seg_path = self.path / "segments" / seg_name
            tmp = seg_path.with_suffix(".vec.tmp")
            with open(tmp, "wb") as fh:
                write_binary(
                    fh,
                    self.dim,
                    ((r.id.key(), r.embedding, r.label) for r in records),
                )
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, seg_path)

            with open(self.path / "labels.jsonl", "a", encoding="utf-8") as fh:
                for r in records:
                    fh.write(
                        json.dumps(
                            {
                                "key": r.id.key(),
                                "label": r.label,
                                "rect": [r.rect.x, r.rect.y, r.rect.width, r.rect.height]
                                if r.rect
                                else None,
                                "tile_path": r.tile_path,
                            },
                            ensure_ascii=False,
                        )
                    )
                    fh.write("\n")
                fh.flush()
                os.fsync(fh.fileno())

            self._manifest["segments"].append(seg_name)
            self._manifest["record_count"] += len(records)
            self._write_manifest()

            matrix = np.stack([r.embedding.values for r in records])
            seg_i = len(self._snapshot.matrices)
            entries = list(snapshot.index) + [
                (r.id, seg_i, row_i) for row_i, r in enumerate(records)
            ]
            entries.sort(key=lambda e: e[0])
            sidecar = dict(snapshot.sidecar)
            for r in records:
                sidecar[r.id.key()] = _Sidecar(r.rect, r.label, r.tile_path)
            self._snapshot = _Snapshot(
                tuple(entries), snapshot.matrices + (matrix,), sidecar
            )
        return len(records)

    def register_image(self, image_id: str, grid: TileGridSpec) -> None:
        with self._write_lock, _file_lock(self.path / ".lock"):
            self._manifest["images"].append(
                {
                    "image_id": image_id,
                    "image_width": grid.image_width,
                    "image_height": grid.image_height,
                    "tile_size": grid.tile_size,
                    "stride": grid.effective_stride,
                }
            )
            self._write_manifest()

    def _write_manifest(self) -> None:
        tmp = self.path / "manifest.json.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(self._manifest, fh, indent=2, sort_keys=True)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self.path / "manifest.json")

    # -- reads ----------------------------------------------------------

    def record(self, tile_id: TileId) -> TileRecord | None:
        snapshot = self._snapshot
        key = tile_id.key()
        for tid, seg_i, row_i in snapshot.index:
            if tid == tile_id:
                side = snapshot.sidecar.get(key, _Sidecar(None, None, None))
                emb = Embedding(snapshot.matrices[seg_i][row_i], normalized=True)
                return TileRecord(tid, emb, side.rect, side.label, side.tile_path)
        return None

    def labels_by_tile(self) -> dict[TileId, str | None]:
        snapshot = self._snapshot
        return {
            tid: snapshot.sidecar.get(tid.key(), _Sidecar(None, None, None)).label
            for tid, _, _ in snapshot.index
        }

    def scan_similarities(
        self,
        query: Embedding,
        candidate_texts: list[Embedding],
        image_filter: str | None = None,
    ) -> list[ScanRow]:
        """Cosine of every stored tile to the query and each candidate.

        Exact brute-force float64 dots in deterministic tile-id order
        (image_id, then row, then col). Stored vectors are unit by
        construction; non-unit query/candidate vectors are divided by
        their norms, and a tile byte-identical to a probe scores exactly 1.
        """
        snapshot = self._snapshot
        if snapshot.count == 0:
            raise EmptyStore("the store holds no tiles")
        probes = []
        for e in [query] + list(candidate_texts):
            if e.dim != self.dim:
                raise DimensionMismatch(f"probe dim {e.dim}, store dim {self.dim}")
            v64 = e.values.astype(np.float64)
            if e.normalized:
                norm = 1.0
            else:
                norm = float(np.linalg.norm(v64))
                if norm <= 1e-12:
                    raise DegenerateVector("zero-norm probe vector")
            probes.append((e.values.tobytes(), v64, norm))

        def sim(row64, row_bytes, probe):
            pbytes, p64, pnorm = probe
            if row_bytes == pbytes:
                return 1.0
            return _clamp(float(np.dot(row64, p64)) / pnorm)

        rows = []
        for tile_id, seg_i, row_i in snapshot.index:
            if image_filter is not None and tile_id.image_id != image_filter:
                continue
            stored = snapshot.matrices[seg_i][row_i]
            row64 = stored.astype(np.float64)
            row_bytes = stored.tobytes()
            rows.append(
                ScanRow(
                    tile_id,
                    sim(row64, row_bytes, probes[0]),
                    tuple(sim(row64, row_bytes, p) for p in probes[1:]),
                )
            )
        if image_filter is not None and not rows:
            raise EmptyStore(f"no tiles indexed for image {image_filter!r}")
        return rows

    def top_k(self, query: Embedding, k: int) -> list[tuple[TileId, float]]:
        """k highest-similarity tiles, ties broken by ascending tile id."""
        if k < 1:
            raise ValueError("k must be >= 1")
        rows = self.scan_similarities(query, [])
        rows.sort(key=lambda r: (-r.sim_to_query, r.tile_id))
        return [(r.tile_id, r.sim_to_query) for r in rows[:k]]


class _file_lock:
    """Advisory exclusive lock on a file (single writer across processes)."""

    def __init__(self, path: Path):
        self.path = path

    def __enter__(self):
        self._fh = open(self.path, "a+")
        try:
            import fcntl

            fcntl.flock(self._fh.fileno(), fcntl.LOCK_EX)
        except ImportError:  # non-POSIX: in-process lock still applies
            pass
        return self

    def __exit__(self, *exc):
        try:
            import fcntl

            fcntl.flock(self._fh.fileno(), fcntl.LOCK_UN)
        except ImportError:
            pass
        self._fh.close()
        return False
