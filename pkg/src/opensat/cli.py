"""Command-line front door: ingest, query, eval, import, serve.

Exit codes are stable: 0 success, 2 configuration or input error,
3 provider failure, 4 empty store, 5 manifest error. Diagnostics go to
stderr; stdout carries only results.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import tempfile
from pathlib import Path

from .config import AppConfig, load_config, with_refinement
from .context import ChatContextProvider, ContextCache, FixtureContextProvider
from .embedders import build_embedder, import_embeddings
from .errors import (
    ConfigError,
    ContextParseError,
    DeficientContext,
    DimensionMismatch,
    EmptyImage,
    EmptyStore,
    ImageDecodeError,
    ManifestParseError,
    ProviderUnavailable,
    RectOutOfBounds,
    UnknownClass,
)
from .evaluation import emit_report, evaluate_archive, load_archive
from .ingest import ingest_image
from .retrieval import RetrievalRequest, retrieve
from .service.schemas import build_query_document
from .store import TileRecord, TileStore
from .core import TileId

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROVIDER = 3
EXIT_EMPTY_STORE = 4
EXIT_MANIFEST = 5

METHOD_ALIASES = {
    "threshold": "threshold",
    "plain": "opensat_plain",
    "refined": "opensat_refined",
}


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--store", help="store directory")
    parser.add_argument("--config", help="TOML config file")
    parser.add_argument("--embedder", choices=["mock", "file", "remote"])
    parser.add_argument("--dim", type=int, help="embedding dimension")
    parser.add_argument("--seed", type=int, help="mock embedder seed")
    parser.add_argument("--embed-endpoint", help="remote embedder URL")
    parser.add_argument("--embed-model", help="remote embedder model name")
    parser.add_argument("--embed-manifest", help="file embedder manifest (JSONL)")
    parser.add_argument("--fixture", help="context fixture JSON (offline mode)")
    parser.add_argument("--llm-endpoint", help="chat-completions endpoint")
    parser.add_argument("--llm-model", help="chat model name")
    parser.add_argument("--llm-key", help="chat API key")
    parser.add_argument("--log-level", help="logging level")


def _config_from_args(args: argparse.Namespace) -> AppConfig:
    return load_config(
        config_path=args.config,
        store_path=args.store,
        embedder_kind=args.embedder,
        dim=args.dim,
        seed=args.seed,
        embed_endpoint=args.embed_endpoint,
        embed_model=args.embed_model,
        embed_manifest=args.embed_manifest,
        fixture=args.fixture,
        llm_endpoint=args.llm_endpoint,
        llm_model=args.llm_model,
        llm_key=args.llm_key,
        log_level=args.log_level,
    )


def _provider(config: AppConfig):
    if config.llm.fixture_path:
        return FixtureContextProvider(config.llm.fixture_path)
    if config.llm.endpoint:
        return ChatContextProvider(
            config.llm.endpoint,
            config.llm.model,
            config.llm.api_key,
            max_inflight=config.llm.max_inflight,
        )
    raise ProviderUnavailable(
        "no context provider configured: pass --fixture or --llm-endpoint"
    )


def _open_store(config: AppConfig) -> TileStore:
    if not (config.store_path / "manifest.json").exists():
        raise EmptyStore(f"no store at {config.store_path}; run `opensat ingest` first")
    return TileStore.open(config.store_path)


def cmd_ingest(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    store = TileStore.open_or_create(config.store_path, dim=config.embedder.dim)
    embedder = build_embedder(config.embedder)
    report = ingest_image(
        store,
        embedder,
        args.image,
        image_id=args.image_id,
        tile_size=args.tile_size,
        stride=args.stride,
        dump_dir=args.dump_tiles,
        parallelism=config.ingest_parallelism,
    )
    unit = "tile" if report.count == 1 else "tiles"
    print(f"{report.image_id}: {report.rows} x {report.cols} grid, {report.count} {unit}")
    return EXIT_OK


def cmd_query(args: argparse.Namespace) -> int:
    config = with_refinement(
        _config_from_args(args),
        alpha=args.alpha,
        beta=args.beta,
        n=args.n,
    )
    store = _open_store(config)
    embedder = build_embedder(config.embedder)
    provider = _provider(config)
    cache = ContextCache(store.path / "context_cache.json")
    request = RetrievalRequest(
        query=args.text,
        method=METHOD_ALIASES[args.method],
        threshold=args.threshold if args.threshold is not None else config.threshold,
        cfg=config.refinement,
        image_filter=args.image_id,
    )
    result = retrieve(store, embedder, provider, request, cache=cache)
    params = {
        "alpha": config.refinement.alpha,
        "beta": config.refinement.beta,
        "n": config.refinement.n,
        "threshold": request.threshold,
        "normalize_stage": config.refinement.normalize_stage,
    }
    if args.json:
        # elapsed_ms is omitted so identical runs stay byte-identical.
        doc = build_query_document(
            store, result, query=args.text, params=params, include_elapsed=False
        )
        print(json.dumps(doc, indent=2, ensure_ascii=False))
    else:
        ctx = result.context
        print(f"query: {args.text!r}  method: {result.method}")
        if ctx is not None:
            print(f"object of interest: {ctx.object_of_interest}")
            print(f"surroundings: {', '.join(ctx.surroundings)}")
        print(f"retrieved {len(result.retrieved)} of {len(result.per_tile)} tiles")
        for d in result.per_tile:
            mark = "*" if d.tile_id in result.retrieved else " "
            surr = (
                f"  max-surrounding={d.max_sim_to_surroundings:+.4f}"
                if d.max_sim_to_surroundings is not None
                else ""
            )
            print(
                f" {mark} {d.tile_id.key():<40} object={d.sim_to_object:+.4f}{surr}"
                f"  winner={d.winning_label or '-'}"
            )
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    config = with_refinement(
        _config_from_args(args), alpha=args.alpha, beta=args.beta, n=args.n
    )
    embedder = build_embedder(config.embedder)
    provider = _provider(config)
    out_dir = Path(args.out) if args.out else None
    store_dir = (
        out_dir / "archive_store" if out_dir else Path(tempfile.mkdtemp(prefix="osat-"))
    )
    archive = load_archive(args.archive, store_dir)
    cache = ContextCache(archive.store.path / "context_cache.json")
    report = evaluate_archive(
        archive,
        embedder,
        provider,
        method=METHOD_ALIASES[args.method],
        cfg=config.refinement,
        threshold=args.threshold if args.threshold is not None else config.threshold,
        query_classes=args.classes,
        cache=cache,
    )
    if out_dir:
        emit_report(report, out_dir)
        print(f"report written to {out_dir}", file=sys.stderr)
    avg = report.micro if args.average == "micro" else report.macro
    print(
        f"{args.average} precision={avg['precision']:.3f} "
        f"recall={avg['recall']:.3f} f1={avg['f1']:.3f}"
    )
    return EXIT_OK


def cmd_import(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    reader = import_embeddings(args.manifest)
    records = []
    for rec in reader:
        try:
            tile_id = TileId.from_key(rec.key)
        except (ValueError, TypeError):
            tile_id = TileId(rec.key, 0, 0)
        records.append(TileRecord(tile_id, rec.embedding, label=rec.label))
    if not records:
        print("manifest holds no records", file=sys.stderr)
        return EXIT_OK
    store = TileStore.open_or_create(config.store_path, dim=reader.dim)
    inserted = store.insert_batch(records)
    print(f"imported {inserted} records ({reader.fixes} normalization fixes)")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import socket

    import uvicorn

    from .service import create_app

    config = _config_from_args(args)
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((args.host, args.port))
    except OSError as exc:
        print(f"cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return 1
    finally:
        probe.close()
    app = create_app(config, serve_ui=args.serve_ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level=config.log_level)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="opensat")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="tile, embed, and index an image")
    _common_flags(p)
    p.add_argument("image", help="raster image (PNG/JPEG/TIFF)")
    p.add_argument("--tile-size", type=int, default=224)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--dump-tiles", help="also write tiles as PNGs to this directory")
    p.add_argument("--image-id", help="override the image id (default: file stem)")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("query", help="retrieve tiles for a text query")
    _common_flags(p)
    p.add_argument("text")
    p.add_argument("--method", choices=sorted(METHOD_ALIASES), default="refined")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--image-id", help="restrict to one indexed image")
    p.add_argument("--json", action="store_true", help="emit the service JSON document")
    p.set_defaults(fn=cmd_query)

    p = sub.add_parser("eval", help="evaluate retrieval over a labeled archive")
    _common_flags(p)
    p.add_argument("--archive", required=True, help="labeled embedding manifest")
    p.add_argument("--method", choices=sorted(METHOD_ALIASES), default="refined")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--classes", nargs="*", default=None, help="subset of classes to query")
    p.add_argument("--average", choices=["macro", "micro"], default="macro")
    p.add_argument("--out", help="directory for metrics.json/csv reports")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("import", help="import precomputed embeddings into the store")
    _common_flags(p)
    p.add_argument("--manifest", required=True)
    p.set_defaults(fn=cmd_import)

    p = sub.add_parser("serve", help="run the HTTP service")
    _common_flags(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--serve-ui", help="serve built console assets from this directory")
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=(args.log_level or "info").upper())
    try:
        return args.fn(args)
    except (ConfigError, EmptyImage, ImageDecodeError, RectOutOfBounds) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, NotADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ProviderUnavailable, DeficientContext, ContextParseError) as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except EmptyStore as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY_STORE
    except (ManifestParseError, UnknownClass) as exc:
        print(f"manifest error: {exc}", file=sys.stderr)
        return EXIT_MANIFEST
    except DimensionMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
