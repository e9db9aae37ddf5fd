"""Writing and reading generated scenario sets.

Two layouts are supported: a directory holding one CSV per scenario plus
``manifest.json``, or a single NDJSON file whose first line is the manifest
header and each further line one scenario.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .bundle import definition_from_dict, definition_to_dict, dumps, forecast_to_dict
from .ingest import read_daily_csv, write_daily_csv
from .means import MeanForecast
from .timeseries import DailySeries, ExtremeDefinition, classify
from .weathergen.ensemble import ScenarioSet

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"


class StoreError(ValueError):
    pass


def manifest(
    scenario_set: ScenarioSet,
    bundle_fingerprint: str = "",
    target: Optional[MeanForecast] = None,
    p_source: str = "",
) -> dict:
    spec = scenario_set.spec
    return {
        "kind": "stormgen.scenario-set",
        "schema_version": MANIFEST_VERSION,
        "generator_version": __version__,
        "bundle_fingerprint": bundle_fingerprint,
        "ensemble": {
            "n": spec.n,
            "p": spec.p,
            "p_source": p_source,
            "n_extreme": spec.n_extreme,
            "period": {"year": spec.period.year, "month": spec.period.month, "label": spec.period.label()},
            "start_date": spec.period.start_date.isoformat(),
            "n_days": spec.period.n_days,
            "master_seed": spec.master_seed,
            "max_attempts": spec.max_attempts,
        },
        "extreme_definition": definition_to_dict(scenario_set.definition),
        "calibration": {
            "target": forecast_to_dict(target) if target else None,
            "factor": scenario_set.calibration_factor,
            "rounds": scenario_set.calibration_rounds,
            "ensemble_mean_total": float(scenario_set.totals().mean()),
        },
        "counts": {
            "extreme": scenario_set.n_extreme,
            "non_extreme": len(scenario_set) - scenario_set.n_extreme,
            "forced": scenario_set.forced_count(),
        },
    }


def write_csv_dir(scenario_set: ScenarioSet, out_dir, header: dict) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for s in scenario_set.scenarios:
        name = f"scenario_{s.index:04d}.csv"
        write_daily_csv(s.series, out / name)
        entries.append({"file": name, **s.metadata()})
    (out / MANIFEST_NAME).write_text(dumps({**header, "format": "csv", "scenarios": entries}), encoding="utf-8")
    return out


def write_ndjson(scenario_set: ScenarioSet, path, header: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps({**header, "format": "ndjson", "record": "header"}, sort_keys=True)]
    for s in scenario_set.scenarios:
        rec = {"record": "scenario", **s.metadata(), "start_date": s.series.start_date.isoformat(),
               "values": s.series.values.tolist()}
        lines.append(json.dumps(rec, sort_keys=True))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@dataclass(frozen=True)
class StoredScenario:
    metadata: dict
    series: DailySeries


@dataclass(frozen=True)
class StoredSet:
    manifest: dict
    scenarios: tuple[StoredScenario, ...]

    @property
    def definition(self) -> ExtremeDefinition:
        return definition_from_dict(self.manifest["extreme_definition"])

    def totals(self) -> np.ndarray:
        return np.array([s.series.values.sum() for s in self.scenarios])

    def states(self):
        d = self.definition
        return [classify(s.series, d) for s in self.scenarios]


def read_scenarios(path) -> StoredSet:
    """Load a scenario directory (or its manifest) or an NDJSON file."""
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise FileNotFoundError(f"scenario set not found: {path}")
    if path.name == MANIFEST_NAME:
        head = json.loads(path.read_text(encoding="utf-8"))
        _check(head)
        scenarios = []
        for entry in head["scenarios"]:
            series = read_daily_csv(path.parent / entry["file"])
            meta = {k: v for k, v in entry.items() if k != "file"}
            scenarios.append(StoredScenario(meta, series))
        return StoredSet(head, tuple(scenarios))
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise StoreError(f"{path}: empty file")
    head = json.loads(lines[0])
    _check(head)
    scenarios = []
    for no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        rec = json.loads(line)
        if rec.get("record") != "scenario":
            raise StoreError(f"{path}: line {no} is not a scenario record")
        series = DailySeries(dt.date.fromisoformat(rec.pop("start_date")), rec.pop("values"))
        rec.pop("record")
        scenarios.append(StoredScenario(rec, series))
    return StoredSet(head, tuple(scenarios))


def _check(head: dict) -> None:
    if head.get("kind") != "stormgen.scenario-set":
        raise StoreError("not a stormgen scenario set")
    if head.get("schema_version") != MANIFEST_VERSION:
        raise StoreError(f"unsupported scenario-set schema version {head.get('schema_version')!r}")
