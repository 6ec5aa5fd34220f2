"""Application configuration: TOML file, environment overrides, flag overrides.

Precedence (lowest to highest): built-in defaults, config file,
``OPENSAT_*`` environment variables, explicit flag overrides.

Recognized environment variables:

    OPENSAT_STORE           store directory
    OPENSAT_EMBEDDER        embedder kind (mock|file|remote)
    OPENSAT_EMBED_DIM       embedding dimension
    OPENSAT_EMBED_ENDPOINT  remote embedder URL
    OPENSAT_EMBED_MODEL     remote embedder model name
    OPENSAT_EMBED_SEED      mock embedder seed
    OPENSAT_EMBED_MANIFEST  file embedder manifest path
    OPENSAT_FIXTURE         context fixture path (offline mode)
    OPENSAT_LLM_ENDPOINT    chat-completions endpoint
    OPENSAT_LLM_MODEL       chat model name
    OPENSAT_LLM_KEY         chat API key
    OPENSAT_LOG_LEVEL       logging level
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from .embedders import EmbedderSpec
from .errors import ConfigError
from .refine import RefinementConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULT_MAX_UPLOAD_BYTES = 2 * 1024**3


@dataclass(frozen=True)
class LlmSettings:
    endpoint: str | None = None
    model: str = "gpt-4o"
    api_key: str | None = None
    fixture_path: str | None = None
    max_inflight: int = 2


@dataclass(frozen=True)
class AppConfig:
    store_path: Path = Path("opensat-store")
    embedder: EmbedderSpec = field(default_factory=lambda: EmbedderSpec(kind="mock"))
    llm: LlmSettings = field(default_factory=LlmSettings)
    refinement: RefinementConfig = field(default_factory=RefinementConfig)
    threshold: float = 0.28
    ingest_parallelism: int = 4
    max_upload_bytes: int = DEFAULT_MAX_UPLOAD_BYTES
    cors_origins: tuple[str, ...] = ("*",)
    log_level: str = "info"


def _get(table: dict, path: str, default):
    cur = table
    for part in path.split("."):
        if not isinstance(cur, dict) or part not in cur:
            return default
        cur = cur[part]
    return cur


def load_config(
    config_path: str | Path | None = None,
    env: dict | None = None,
    **overrides,
) -> AppConfig:
    """Resolve the effective configuration.

    ``overrides`` hold flag-level values (highest precedence); a None
    override is ignored.
    """
    env = dict(os.environ if env is None else env)
    table: dict = {}
    if config_path is not None:
        try:
            with open(config_path, "rb") as fh:
                table = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {config_path}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid config file {config_path}: {exc}") from exc

    def pick(override_key, env_key, table_key, default, cast=str):
        v = overrides.get(override_key)
        if v is not None:
            return v
        if env_key and env_key in env:
            try:
                return cast(env[env_key])
            except ValueError as exc:
                raise ConfigError(f"bad {env_key}: {exc}") from exc
        return _get(table, table_key, default)

    store_path = Path(pick("store_path", "OPENSAT_STORE", "store.path", "opensat-store"))
    kind = pick("embedder_kind", "OPENSAT_EMBEDDER", "embed.kind", "mock")
    try:
        embedder = EmbedderSpec(
            kind=kind,
            dim=int(pick("dim", "OPENSAT_EMBED_DIM", "embed.dim", 512, int)),
            endpoint=pick("embed_endpoint", "OPENSAT_EMBED_ENDPOINT", "embed.endpoint", None),
            model_name=pick("embed_model", "OPENSAT_EMBED_MODEL", "embed.model", None),
            batch_size=int(_get(table, "embed.batch_size", 64)),
            manifest_path=pick(
                "embed_manifest", "OPENSAT_EMBED_MANIFEST", "embed.manifest", None
            ),
            seed=int(pick("seed", "OPENSAT_EMBED_SEED", "embed.seed", 0, int)),
            max_inflight=int(_get(table, "embed.max_inflight", 4)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    llm = LlmSettings(
        endpoint=pick("llm_endpoint", "OPENSAT_LLM_ENDPOINT", "llm.endpoint", None),
        model=pick("llm_model", "OPENSAT_LLM_MODEL", "llm.model", "gpt-4o"),
        api_key=pick("llm_key", "OPENSAT_LLM_KEY", "llm.key", None),
        fixture_path=pick("fixture", "OPENSAT_FIXTURE", "llm.fixture", None),
        max_inflight=int(_get(table, "llm.max_inflight", 2)),
    )

    try:
        refinement = RefinementConfig(
            alpha=float(pick("alpha", None, "refine.alpha", 1.0, float)),
            beta=float(pick("beta", None, "refine.beta", 1.0, float)),
            n=int(pick("n", None, "refine.n", 5, int)),
            normalize_stage=pick(
                "normalize_stage", None, "refine.normalize_stage", "per_term"
            ),
        )
        return AppConfig(
            store_path=store_path,
            embedder=embedder,
            llm=llm,
            refinement=refinement,
            threshold=float(pick("threshold", None, "retrieve.threshold", 0.28, float)),
            ingest_parallelism=int(_get(table, "ingest.parallelism", 4)),
            max_upload_bytes=int(
                _get(table, "service.max_upload_bytes", DEFAULT_MAX_UPLOAD_BYTES)
            ),
            cors_origins=tuple(_get(table, "service.cors_origins", ["*"])),
            log_level=pick("log_level", "OPENSAT_LOG_LEVEL", "log.level", "info"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def with_refinement(config: AppConfig, **kwargs) -> AppConfig:
    """Copy the config with some refinement parameters replaced."""
    clean = {k: v for k, v in kwargs.items() if v is not None}
    return replace(config, refinement=replace(config.refinement, **clean))
