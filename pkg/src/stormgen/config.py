"""Pipeline configuration: a JSON file plus command-line overrides."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional, Union

from .ingest import CsvOptions

P_SOURCES = ("from:empirical", "from:gpd", "from:gev")
CALIBRATION_SOURCES = ("none", "climatology", "ar_model", "tercile:below", "tercile:near", "tercile:above")
SCENARIO_FORMATS = ("csv", "ndjson")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class InputConfig:
    path: Optional[str] = None
    station_id: str = ""
    date_column: str = "date"
    value_column: str = "precip_mm"
    date_format: str = "%Y-%m-%d"
    gap_policy: str = "reject"

    def csv_options(self) -> CsvOptions:
        return CsvOptions(self.date_column, self.value_column, self.date_format, self.gap_policy, self.station_id)


@dataclass(frozen=True)
class ExtremesConfig:
    percentile: float = 0.95
    wet_threshold: float = 0.1
    per_month: bool = False
    gpd_threshold: Optional[float] = None
    gev_block: Union[str, int] = "month"


@dataclass(frozen=True)
class GeneratorConfig:
    knn_k: Optional[int] = None
    alpha: float = 0.5
    bandwidth: Optional[float] = None
    kernel: str = "linear"


@dataclass(frozen=True)
class MeansConfig:
    ar_order: int = 1
    ar_differencing: int = 0


@dataclass(frozen=True)
class EnsembleConfig:
    n: int = 100
    p: Union[float, str] = "from:empirical"
    year: Optional[int] = None
    month: Optional[int] = 1
    master_seed: int = 0
    workers: int = 1
    max_attempts: int = 1000
    calibration: str = "none"


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"
    bundle: Optional[str] = None
    format: str = "csv"


@dataclass(frozen=True)
class EvaluateConfig:
    scenarios: Optional[str] = None
    heldout: Optional[str] = None
    qq_points: int = 99
    wet_only: bool = False


@dataclass(frozen=True)
class PipelineConfig:
    input: InputConfig = field(default_factory=InputConfig)
    extremes: ExtremesConfig = field(default_factory=ExtremesConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    means: MeansConfig = field(default_factory=MeansConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    evaluate: EvaluateConfig = field(default_factory=EvaluateConfig)

    @property
    def out_dir(self) -> Path:
        return Path(self.output.dir)

    @property
    def bundle_path(self) -> Path:
        return Path(self.output.bundle) if self.output.bundle else self.out_dir / "bundle.json"

    @property
    def scenarios_path(self) -> Path:
        if self.evaluate.scenarios:
            return Path(self.evaluate.scenarios)
        return self.out_dir / ("scenarios.ndjson" if self.output.format == "ndjson" else "scenarios")

    def existing_scenarios_path(self) -> Path:
        """Where evaluate reads from: the configured path, else whichever default output exists."""
        path = self.scenarios_path
        if self.evaluate.scenarios or path.exists():
            return path
        other = self.out_dir / ("scenarios" if self.output.format == "ndjson" else "scenarios.ndjson")
        return other if other.exists() else path

    @property
    def evaluation_dir(self) -> Path:
        return self.out_dir / "evaluation"

    def to_dict(self) -> dict:
        return asdict(self)

    def override(self, section: str, **values) -> "PipelineConfig":
        """Replace fields of one section, ignoring ``None`` values."""
        values = {k: v for k, v in values.items() if v is not None}
        if not values:
            return self
        return replace(self, **{section: replace(getattr(self, section), **values)})

    def validate(self) -> "PipelineConfig":
        x, g, m, e = self.extremes, self.generator, self.means, self.ensemble
        _require(0 < x.percentile < 1, "extremes.percentile must lie in (0, 1)")
        _require(x.wet_threshold >= 0, "extremes.wet_threshold must be >= 0")
        _require(x.gev_block == "month" or (isinstance(x.gev_block, int) and x.gev_block > 0),
                 "extremes.gev_block must be 'month' or a positive day count")
        _require(g.knn_k is None or g.knn_k >= 1, "generator.knn_k must be >= 1")
        _require(g.alpha > 0, "generator.alpha must be > 0")
        _require(g.bandwidth is None or g.bandwidth >= 0, "generator.bandwidth must be >= 0")
        _require(g.kernel in ("linear", "log"), "generator.kernel must be 'linear' or 'log'")
        _require(m.ar_order >= 1 and m.ar_differencing in (0, 1), "means.ar_order must be >= 1 and ar_differencing 0 or 1")
        _require(e.n >= 1, "ensemble.n must be >= 1")
        if isinstance(e.p, str):
            _require(e.p in P_SOURCES, f"ensemble.p must be a number in [0, 1] or one of {', '.join(P_SOURCES)}")
        else:
            _require(0 <= e.p <= 1, "ensemble.p must lie in [0, 1]")
        _require(e.month is None or 1 <= e.month <= 12, "ensemble.month must be 1..12")
        _require(e.year is None or 1 <= e.year <= 9998, "ensemble.year out of range")
        _require(0 <= e.master_seed < 2**64, "ensemble.master_seed must be an unsigned 64-bit integer")
        _require(e.workers >= 1 and e.max_attempts >= 1, "ensemble.workers and ensemble.max_attempts must be >= 1")
        _require(e.calibration in CALIBRATION_SOURCES, f"ensemble.calibration must be one of {', '.join(CALIBRATION_SOURCES)}")
        _require(self.output.format in SCENARIO_FORMATS, "output.format must be 'csv' or 'ndjson'")
        _require(self.evaluate.qq_points >= 2, "evaluate.qq_points must be >= 2")
        return self


def _require(ok: bool, message: str) -> None:
    if not ok:
        raise ConfigError(message)


def _section(cls, data: Any, name: str):
    if not isinstance(data, dict):
        raise ConfigError(f"section {name!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key {name}.{unknown[0]}")
    return cls(**data)


def config_from_dict(data: dict) -> PipelineConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    sections = {f.name: f for f in fields(PipelineConfig)}
    unknown = sorted(set(data) - set(sections))
    if unknown:
        raise ConfigError(f"unknown config section {unknown[0]!r}")
    kwargs = {}
    for name, value in data.items():
        cls = type(sections[name].default_factory())
        kwargs[name] = _section(cls, value, name)
    return PipelineConfig(**kwargs)


def load_config(path) -> PipelineConfig:
    """Read a JSON config; relative paths inside it resolve against its directory."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    cfg = config_from_dict(data)
    base = path.parent

    def resolve(p):
        return None if p is None else str(base / p)

    cfg = replace(cfg, input=replace(cfg.input, path=resolve(cfg.input.path)))
    cfg = replace(cfg, output=replace(cfg.output, dir=str(base / cfg.output.dir), bundle=resolve(cfg.output.bundle)))
    ev = cfg.evaluate
    return replace(cfg, evaluate=replace(ev, scenarios=resolve(ev.scenarios), heldout=resolve(ev.heldout)))
