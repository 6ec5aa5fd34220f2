"""Embedding providers and the embedding interchange formats.

Three provider kinds share one interface:

* ``mock``   — deterministic pseudo-embeddings seeded by a 64-bit hash of
  the input bytes; no model dependency, direction-uniform on the sphere.
* ``file``   — precomputed text vectors loaded from a JSONL manifest
  (the path for archives of real encoder output).
* ``remote`` — HTTP provider speaking ``POST {"model":…, "inputs":[…]}``
  for text and a multipart image batch for pixels, responding
  ``{"embeddings": [[…], …]}``.

Interchange formats (bit-exact):

* JSON Lines — ``{"key": str, "vector": [float…], "label": str|null}``,
  floats serialized at round-trip precision.
* Binary sibling — magic ``OSAT``, u32 version=1, u32 dim, u64 count,
  then per record u16 key length, UTF-8 key, dim little-endian float32,
  u8 label flag, optional u16 + UTF-8 label. All integers little-endian.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import struct
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator

import numpy as np
from PIL import Image

from .core import Embedding, l2_normalize
from .errors import (
    DimensionMismatch,
    ImageDecodeError,
    ManifestParseError,
    ProviderUnavailable,
)

logger = logging.getLogger(__name__)

MAGIC = b"OSAT"
FORMAT_VERSION = 1

RETRY_BASE_SECONDS = 0.5
MAX_RETRIES = 2


@dataclass(frozen=True)
class EmbedderSpec:
    """Configuration for an embedding provider."""

    kind: str  # mock | file | remote
    dim: int = 512
    endpoint: str | None = None
    model_name: str | None = None
    batch_size: int = 64
    manifest_path: str | None = None
    seed: int = 0
    max_inflight: int = 4

    def __post_init__(self):
        if self.kind not in ("mock", "file", "remote"):
            raise ValueError(f"unknown embedder kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("embedding dim must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.kind == "remote" and not self.endpoint:
            raise ValueError("remote embedder requires an endpoint")
        if self.kind == "file" and not self.manifest_path:
            raise ValueError("file embedder requires a manifest path")


class MockEmbedder:
    """Pure function of (seed, input bytes, dim); unit-norm outputs."""

    def __init__(self, spec: EmbedderSpec):
        self.spec = spec
        self.dim = spec.dim

    def _vector(self, domain: bytes, data: bytes) -> Embedding:
        digest = hashlib.blake2b(
            domain + data, digest_size=8, key=struct.pack("<q", self.spec.seed)
        ).digest()
        key = int.from_bytes(digest, "little")
        rng = np.random.Generator(np.random.Philox(key=key))
        v = rng.standard_normal(self.dim)
        return l2_normalize(Embedding(np.asarray(v, dtype=np.float32)))

    def embed_text(self, texts: list[str]) -> list[Embedding]:
        if not texts:
            raise ValueError("embed_text requires a non-empty list")
        # Texts are embedded verbatim; prompt templates are meaning-bearing.
        return [self._vector(b"t:", t.encode("utf-8")) for t in texts]

    def embed_image(self, images: list[Image.Image]) -> list[Embedding]:
        if not images:
            raise ValueError("embed_image requires a non-empty list")
        out = []
        for img in images:
            header = f"{img.mode}:{img.width}x{img.height}:".encode("ascii")
            out.append(self._vector(b"i:", header + img.tobytes()))
        return out


class FileEmbedder:
    """Text vectors looked up from a JSONL manifest, keyed by exact string."""

    def __init__(self, spec: EmbedderSpec):
        self.spec = spec
        self.dim = spec.dim
        self._vectors: dict[str, Embedding] = {}
        reader = import_embeddings(spec.manifest_path)
        for rec in reader:
            self._vectors[rec.key] = rec.embedding
        if reader.dim is not None and reader.dim != spec.dim:
            raise DimensionMismatch(
                f"manifest vectors have dim {reader.dim}, spec says {spec.dim}"
            )

    def embed_text(self, texts: list[str]) -> list[Embedding]:
        if not texts:
            raise ValueError("embed_text requires a non-empty list")
        out = []
        for t in texts:
            try:
                out.append(self._vectors[t])
            except KeyError:
                raise ProviderUnavailable(
                    f"file embedder has no vector for text {t!r}"
                ) from None
        return out

    def embed_image(self, images: list) -> list[Embedding]:
        raise ProviderUnavailable(
            "file embedder holds precomputed text vectors only; "
            "import image vectors with import_embeddings instead"
        )


class RemoteEmbedder:
    """HTTP embedding service client with bounded retries and in-flight cap."""

    def __init__(self, spec: EmbedderSpec, retry_base: float = RETRY_BASE_SECONDS):
        self.spec = spec
        self.dim = spec.dim
        self._retry_base = retry_base
        self._gate = threading.Semaphore(spec.max_inflight)

    def _post(self, send) -> list[Embedding]:
        import requests

        last_error: Exception | None = None
        for attempt in range(MAX_RETRIES + 1):
            if attempt:
                time.sleep(self._retry_base * (2 ** (attempt - 1)))
            try:
                with self._gate:
                    resp = send(requests)
                resp.raise_for_status()
                payload = resp.json()
                vectors = payload["embeddings"]
                out = []
                for vec in vectors:
                    if len(vec) != self.dim:
                        raise DimensionMismatch(
                            f"provider returned dim {len(vec)}, expected {self.dim}"
                        )
                    out.append(l2_normalize(Embedding.of(vec)))
                return out
            except DimensionMismatch:
                raise
            except Exception as exc:
                last_error = exc
        raise ProviderUnavailable(
            f"embedding provider {self.spec.endpoint} unreachable: {last_error}"
        ) from last_error

    def embed_text(self, texts: list[str]) -> list[Embedding]:
        if not texts:
            raise ValueError("embed_text requires a non-empty list")
        body = {"model": self.spec.model_name, "inputs": texts}
        return self._post(
            lambda requests: requests.post(self.spec.endpoint, json=body, timeout=30)
        )

    def embed_image(self, images: list[Image.Image]) -> list[Embedding]:
        if not images:
            raise ValueError("embed_image requires a non-empty list")
        files = []
        for i, img in enumerate(images):
            buf = io.BytesIO()
            try:
                img.save(buf, format="PNG")
            except Exception as exc:
                raise ImageDecodeError(f"cannot encode tile {i}: {exc}") from exc
            files.append(("images", (f"tile_{i}.png", buf.getvalue(), "image/png")))
        data = {"model": self.spec.model_name or ""}
        return self._post(
            lambda requests: requests.post(
                self.spec.endpoint, data=data, files=files, timeout=60
            )
        )


def build_embedder(spec: EmbedderSpec, **kwargs):
    if spec.kind == "mock":
        return MockEmbedder(spec)
    if spec.kind == "file":
        return FileEmbedder(spec)
    return RemoteEmbedder(spec, **kwargs)


@dataclass(frozen=True)
class ImportedRecord:
    key: str
    embedding: Embedding
    label: str | None


def write_jsonl(path: str | Path, records: Iterable[tuple[str, Embedding, str | None]]) -> int:
    """Write the JSONL interchange format; returns the record count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for key, emb, label in records:
            fh.write(
                json.dumps(
                    {"key": key, "vector": emb.tolist(), "label": label},
                    ensure_ascii=False,
                )
            )
            fh.write("\n")
            n += 1
    return n


class EmbeddingImport:
    """Streaming reader over a JSONL (or binary) embedding manifest.

    Validates dimensional uniformity, normalizes any non-unit vectors and
    counts the fixes (``fixes``), and reports parse failures with their
    line number.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.fixes = 0
        self.dim: int | None = None
        self.count = 0

    def __iter__(self) -> Iterator[ImportedRecord]:
        if self._is_binary():
            yield from self._iter_binary()
        else:
            yield from self._iter_jsonl()
        if self.fixes:
            logger.info(
                "normalized %d non-unit vector(s) while importing %s",
                self.fixes,
                self.path,
            )

    def _is_binary(self) -> bool:
        with open(self.path, "rb") as fh:
            return fh.read(4) == MAGIC

    def _emit(self, key: str, values, label: str | None, where: str) -> ImportedRecord:
        try:
            emb = Embedding.of(values)
        except ValueError as exc:
            raise ManifestParseError(f"{where}: {exc}") from exc
        if self.dim is None:
            self.dim = emb.dim
        elif emb.dim != self.dim:
            raise DimensionMismatch(
                f"{where}: vector dim {emb.dim} differs from first record dim {self.dim}"
            )
        norm = float(np.linalg.norm(emb.values.astype(np.float64)))
        if abs(norm - 1.0) <= 1e-6:
            emb = Embedding(emb.values, normalized=True)
        else:
            emb = l2_normalize(emb)
            self.fixes += 1
        self.count += 1
        return ImportedRecord(key, emb, label)

    def _iter_jsonl(self) -> Iterator[ImportedRecord]:
        with open(self.path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ManifestParseError(f"invalid JSON: {exc.msg}", lineno) from exc
                if not isinstance(obj, dict) or "key" not in obj or "vector" not in obj:
                    raise ManifestParseError(
                        'record must be an object with "key" and "vector"', lineno
                    )
                label = obj.get("label")
                if label is not None and not isinstance(label, str):
                    raise ManifestParseError("label must be a string or null", lineno)
                yield self._emit(str(obj["key"]), obj["vector"], label, f"line {lineno}")

    def _iter_binary(self) -> Iterator[ImportedRecord]:
        with open(self.path, "rb") as fh:
            header = fh.read(20)
            if len(header) < 20 or header[:4] != MAGIC:
                raise ManifestParseError("truncated or invalid binary header")
            version, dim, count = struct.unpack("<IIQ", header[4:])
            if version != FORMAT_VERSION:
                raise ManifestParseError(f"unsupported format version {version}")
            for i in range(count):
                key, values, label = _read_binary_record(fh, dim, i)
                yield self._emit(key, values, label, f"record {i}")


def import_embeddings(path: str | Path) -> EmbeddingImport:
    if not Path(path).exists():
        raise ManifestParseError(f"manifest does not exist: {path}")
    return EmbeddingImport(path)


def _read_binary_record(fh: IO[bytes], dim: int, index: int):
    def need(n: int) -> bytes:
        buf = fh.read(n)
        if len(buf) != n:
            raise ManifestParseError(f"record {index}: truncated file")
        return buf

    (key_len,) = struct.unpack("<H", need(2))
    key = need(key_len).decode("utf-8")
    values = np.frombuffer(need(4 * dim), dtype="<f4").astype(np.float32)
    (has_label,) = struct.unpack("<B", need(1))
    label = None
    if has_label:
        (label_len,) = struct.unpack("<H", need(2))
        label = need(label_len).decode("utf-8")
    return key, values, label


def write_binary(
    fh: IO[bytes], dim: int, records: Iterable[tuple[str, Embedding, str | None]]
) -> int:
    """Write the binary embedding format to an open file; returns count.

    The count field is back-patched, so ``fh`` must be seekable.
    """
    start = fh.tell()
    fh.write(MAGIC)
    fh.write(struct.pack("<IIQ", FORMAT_VERSION, dim, 0))
    n = 0
    for key, emb, label in records:
        if emb.dim != dim:
            raise DimensionMismatch(f"record {key!r} has dim {emb.dim}, expected {dim}")
        kb = key.encode("utf-8")
        fh.write(struct.pack("<H", len(kb)))
        fh.write(kb)
        fh.write(np.ascontiguousarray(emb.values, dtype="<f4").tobytes())
        if label is None:
            fh.write(struct.pack("<B", 0))
        else:
            lb = label.encode("utf-8")
            fh.write(struct.pack("<BH", 1, len(lb)))
            fh.write(lb)
        n += 1
    end = fh.tell()
    fh.seek(start + 12)
    fh.write(struct.pack("<Q", n))
    fh.seek(end)
    return n


def read_binary(path: str | Path) -> tuple[int, list[tuple[str, Embedding, str | None]]]:
    """Load a binary segment fully; returns (dim, records)."""
    with open(path, "rb") as fh:
        header = fh.read(20)
        if len(header) < 20 or header[:4] != MAGIC:
            raise ManifestParseError(f"not a vector segment: {path}")
        version, dim, count = struct.unpack("<IIQ", header[4:])
        if version != FORMAT_VERSION:
            raise ManifestParseError(f"unsupported segment version {version}")
        records = []
        for i in range(count):
            key, values, label = _read_binary_record(fh, dim, i)
            records.append((key, Embedding(values, normalized=True), label))
    return dim, records
