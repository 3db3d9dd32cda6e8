"""TOML configuration for the service, CLI and pipeline stages.

Secrets never live in the file; clients read them from environment
variables (NUDGEX_EO_TOKEN, NUDGEX_MLLM_API_KEY, NUDGEX_JUDGE_API_KEY,
NUDGEX_EMBED_API_KEY, NUDGEX_RAG_API_KEY). Unknown keys are rejected so a
stray ``api_key = ...`` fails fast.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from datetime import date
from pathlib import Path
from typing import Optional

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - py310 fallback
    import tomli as tomllib

from .eo import AcquisitionConfig
from .errors import ConfigError

PROVIDER_KINDS = ("stub", "http")

DEFAULT_INDICES = ("NDVI", "NDWI", "NDBI", "BSI", "IRONOX")


@dataclass(frozen=True)
class ServiceConfig:
    bind: str = "127.0.0.1:8088"
    ui_dir: Optional[Path] = None


@dataclass(frozen=True)
class EOConfig:
    provider: str = "fixture"
    manifest: Optional[Path] = None
    base_url: str = ""


@dataclass(frozen=True)
class CaptionerConfig:
    provider: str = "stub"
    base_url: str = ""
    model_id: str = "llama-4-maverick"
    temperature: float = 0.2
    retries: int = 3
    concurrency: int = 4
    system_prompt_path: Optional[Path] = None
    shots_path: Optional[Path] = None
    indices: tuple[str, ...] = DEFAULT_INDICES


@dataclass(frozen=True)
class JudgeConfig:
    provider: str = "stub"
    base_url: str = ""
    model_id: str = "gemini-flash-2.5"
    theta_avg: float = 4.0
    theta_min: int = 3
    parse_retries: int = 2
    retries: int = 3


@dataclass(frozen=True)
class EmbeddingConfig:
    provider: str = "stub"
    base_url: str = ""
    model_id: str = "all-minilm-l6-v2"
    dim: int = 384


@dataclass(frozen=True)
class RagConfig:
    provider: str = "stub"
    base_url: str = ""
    model_id: str = "deepseek-chat"
    k: int = 5


@dataclass(frozen=True)
class IndexEntry:
    name: str
    expression: str
    valid_range: tuple[float, float]
    threshold: Optional[float] = None
    label: Optional[str] = None


@dataclass(frozen=True)
class ApiConfig:
    data_root: Path = Path("data")
    service: ServiceConfig = field(default_factory=ServiceConfig)
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    eo: EOConfig = field(default_factory=EOConfig)
    captioner: CaptionerConfig = field(default_factory=CaptionerConfig)
    judge: JudgeConfig = field(default_factory=JudgeConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    rag: RagConfig = field(default_factory=RagConfig)
    extra_indices: tuple[IndexEntry, ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.acquisition.max_cloud_fraction <= 1.0:
            raise ConfigError("acquisition.max_cloud_fraction must be in [0, 1]")
        if not 1.0 <= self.judge.theta_avg <= 5.0:
            raise ConfigError("judge.theta_avg must be in [1, 5]")
        if self.judge.theta_min not in (1, 2, 3, 4, 5):
            raise ConfigError("judge.theta_min must be an integer in 1..5")
        if self.judge.theta_min > self.judge.theta_avg:
            raise ConfigError("judge.theta_min must not exceed judge.theta_avg")
        if self.rag.k < 1:
            raise ConfigError("rag.k must be >= 1")
        if self.embedding.dim < 1:
            raise ConfigError("embedding.dim must be >= 1")
        if self.captioner.temperature < 0:
            raise ConfigError("captioner.temperature must be >= 0")
        if self.captioner.concurrency < 1:
            raise ConfigError("captioner.concurrency must be >= 1")
        for section in (self.eo,):
            if section.provider not in ("fixture", "http"):
                raise ConfigError(f"eo.provider must be fixture or http, got {section.provider!r}")
        for name, section in (("captioner", self.captioner), ("judge", self.judge),
                              ("embedding", self.embedding), ("rag", self.rag)):
            if section.provider not in PROVIDER_KINDS:
                raise ConfigError(f"{name}.provider must be one of {PROVIDER_KINDS}")


_PATH_FIELDS = {"manifest", "system_prompt_path", "shots_path", "ui_dir", "data_root"}
_DATE_FIELDS = {"date_start", "date_end", "horizon_cutoff"}


def _coerce(name: str, value, base_dir: Path):
    if name in _PATH_FIELDS and value is not None:
        path = Path(value)
        return path if path.is_absolute() else base_dir / path
    if name in _DATE_FIELDS and isinstance(value, str):
        return date.fromisoformat(value)
    if name == "indices" and isinstance(value, list):
        return tuple(value)
    if name == "valid_range" and isinstance(value, list):
        return (float(value[0]), float(value[1]))
    return value


def _build_section(cls, table: dict, section: str, base_dir: Path):
    known = {f.name for f in fields(cls)}
    unknown = set(table) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
    kwargs = {name: _coerce(name, value, base_dir) for name, value in table.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad [{section}] section: {exc}") from exc


def load_config(path: Optional[Path] = None, data_root: Optional[Path] = None) -> ApiConfig:
    """Parse a TOML config file; missing file means all-stub defaults."""
    if path is None:
        config = ApiConfig()
        return dataclasses.replace(config, data_root=data_root or config.data_root)

    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with path.open("rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config file is not valid TOML: {exc}") from exc
    base_dir = path.parent.resolve()

    sections = {
        "service": ServiceConfig,
        "acquisition": AcquisitionConfig,
        "eo": EOConfig,
        "captioner": CaptionerConfig,
        "judge": JudgeConfig,
        "embedding": EmbeddingConfig,
        "rag": RagConfig,
    }
    known_top = set(sections) | {"data", "indices"}
    unknown = set(raw) - known_top
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")

    kwargs = {}
    for section, cls in sections.items():
        table = raw.get(section, {})
        if not isinstance(table, dict):
            raise ConfigError(f"[{section}] must be a table")
        kwargs[section] = _build_section(cls, table, section, base_dir)

    data_table = raw.get("data", {})
    unknown = set(data_table) - {"root"}
    if unknown:
        raise ConfigError(f"unknown key(s) in [data]: {', '.join(sorted(unknown))}")
    root = data_root or _coerce("data_root", data_table.get("root", "data"), base_dir)

    extra = []
    for i, entry in enumerate(raw.get("indices", [])):
        extra.append(_build_section(IndexEntry, entry, f"indices[{i}]", base_dir))

    config = ApiConfig(
        data_root=Path(root),
        acquisition=kwargs["acquisition"],
        service=kwargs["service"],
        eo=kwargs["eo"],
        captioner=kwargs["captioner"],
        judge=kwargs["judge"],
        embedding=kwargs["embedding"],
        rag=kwargs["rag"],
        extra_indices=tuple(extra),
    )
    return config
