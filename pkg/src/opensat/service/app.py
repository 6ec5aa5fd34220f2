"""HTTP service: upload, index, query, tile evidence.

All failures surface as structured JSON ``{"code": …, "message": …}``;
stack traces never leak. Query endpoints are strictly read-only against
the store.
"""

from __future__ import annotations

import logging
import uuid
from pathlib import Path

from fastapi import FastAPI, Request, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles

from ..config import AppConfig
from ..context import ChatContextProvider, ContextCache, FixtureContextProvider
from ..core import TileId
from ..embedders import build_embedder
from ..errors import OpenSatError, ProviderUnavailable
from ..ingest import ingest_image
from ..refine import RefinementConfig
from ..retrieval import RetrievalRequest, retrieve
from ..store import TileStore
from .jobs import JobRegistry
from .schemas import (
    HealthResponse,
    HealthStore,
    IndexResponse,
    JobView,
    QueryBody,
    UploadResponse,
    build_query_document,
)

logger = logging.getLogger(__name__)

UPLOAD_CHUNK = 1024 * 1024

SNIFF_FORMATS = (
    (b"\x89PNG\r\n\x1a\n", "png"),
    (b"\xff\xd8\xff", "jpg"),
    (b"II*\x00", "tif"),
    (b"MM\x00*", "tif"),
)

_STATUS_BY_CODE = {
    "provider_unavailable": 503,
    "deficient_context": 503,
    "context_parse_error": 503,
    "empty_store": 409,
    "duplicate_tile": 409,
    "unsupported_format": 415,
}


def _sniff_format(head: bytes) -> str | None:
    for magic, ext in SNIFF_FORMATS:
        if head.startswith(magic):
            return ext
    return None


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


def create_app(config: AppConfig, serve_ui: str | None = None) -> FastAPI:
    app = FastAPI(title="opensat", version="0.1.0")

    store = TileStore.open_or_create(config.store_path, dim=config.embedder.dim)
    embedder = build_embedder(config.embedder)
    cache = ContextCache(store.path / "context_cache.json")
    jobs = JobRegistry()

    uploads_dir = store.path / "uploads"
    uploads_dir.mkdir(parents=True, exist_ok=True)
    uploads: dict[str, Path] = {
        p.stem: p for p in uploads_dir.iterdir() if p.is_file()
    }

    if config.llm.fixture_path:
        provider = FixtureContextProvider(config.llm.fixture_path)
    elif config.llm.endpoint:
        provider = ChatContextProvider(
            config.llm.endpoint,
            config.llm.model,
            config.llm.api_key,
            max_inflight=config.llm.max_inflight,
        )
    else:
        provider = None

    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(config.cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(OpenSatError)
    async def opensat_error(_req: Request, exc: OpenSatError):
        return _error(_STATUS_BY_CODE.get(exc.code, 422), exc.code, str(exc))

    @app.exception_handler(Exception)
    async def unexpected_error(_req: Request, exc: Exception):
        logger.exception("unhandled error")
        return _error(500, "internal_error", "internal server error")

    @app.get("/healthz", response_model=HealthResponse)
    def healthz():
        return HealthResponse(
            status="ok",
            store=HealthStore(
                dim=store.dim,
                record_count=store.count,
                image_count=len(store.images),
            ),
        )

    @app.post("/images", response_model=UploadResponse)
    async def upload_image(file: UploadFile):
        head = await file.read(16)
        ext = _sniff_format(head)
        if ext is None:
            return _error(415, "unsupported_format", "expected PNG, JPEG, or TIFF")
        image_id = uuid.uuid4().hex[:12]
        dest = uploads_dir / f"{image_id}.{ext}"
        size = len(head)
        with open(dest, "wb") as out:
            out.write(head)
            while True:
                chunk = await file.read(UPLOAD_CHUNK)
                if not chunk:
                    break
                size += len(chunk)
                if size > config.max_upload_bytes:
                    out.close()
                    dest.unlink(missing_ok=True)
                    return _error(
                        413,
                        "payload_too_large",
                        f"upload exceeds {config.max_upload_bytes} bytes",
                    )
                out.write(chunk)
        uploads[image_id] = dest
        return UploadResponse(image_id=image_id)

    @app.post("/images/{image_id}/index", response_model=IndexResponse)
    def start_index(image_id: str):
        path = uploads.get(image_id)
        if path is None:
            return _error(404, "unknown_image", f"no uploaded image {image_id!r}")
        if store.has_image(image_id) or jobs.image_active(image_id):
            return _error(409, "already_indexed", f"image {image_id!r} already indexed")

        def runner(progress):
            ingest_image(
                store,
                embedder,
                path,
                image_id=image_id,
                parallelism=config.ingest_parallelism,
                progress=progress,
            )

        return IndexResponse(job_id=jobs.start(image_id, runner))

    @app.get("/jobs/{job_id}", response_model=JobView)
    def job_status(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            return _error(404, "unknown_job", f"no job {job_id!r}")
        return JobView(**vars(job))

    @app.post("/query")
    def query(body: QueryBody):
        if provider is None:
            raise ProviderUnavailable(
                "no context provider configured: set a fixture or an LLM endpoint"
            )
        try:
            request = RetrievalRequest(
                query=body.text,
                method=body.method,
                threshold=body.threshold,
                cfg=RefinementConfig(
                    alpha=body.alpha,
                    beta=body.beta,
                    n=body.n,
                    normalize_stage=body.normalize_stage,
                ),
                image_filter=body.image_id,
            )
        except ValueError as exc:
            return _error(422, "invalid_params", str(exc))
        result = retrieve(store, embedder, provider, request, cache=cache)
        doc = build_query_document(
            store,
            result,
            query=body.text,
            params={
                "alpha": body.alpha,
                "beta": body.beta,
                "n": body.n,
                "threshold": body.threshold,
                "normalize_stage": body.normalize_stage,
            },
        )
        return JSONResponse(doc)

    @app.get("/tiles/{image_id}/{row}/{col}.png")
    def tile_image(image_id: str, row: int, col: int):
        if row < 0 or col < 0:
            return _error(404, "unknown_tile", "tile coordinates out of range")
        rec = store.record(TileId(image_id, row, col))
        if rec is None or rec.tile_path is None:
            return _error(404, "unknown_tile", f"no tile {image_id}:{row}:{col}")
        path = (store.path / rec.tile_path).resolve()
        if not str(path).startswith(str(store.path.resolve())) or not path.exists():
            return _error(404, "unknown_tile", f"tile file missing for {image_id}")
        return FileResponse(path, media_type="image/png")

    if serve_ui:
        app.mount("/ui", StaticFiles(directory=serve_ui, html=True), name="ui")

    return app
