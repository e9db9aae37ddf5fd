"""JSON serialization of fitted models.

Floats are written in shortest round-trip form, so a reloaded model is
bit-identical to the fitted one and rewriting it reproduces the same bytes.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import __version__
from .extremes import ExtremeProbability, GEVFit, GPDFit
from .means import AnnualARModel, ClimatologyModel, MeanForecast
from .timeseries import ExtremeDefinition
from .weathergen.intensity import IntensityModel, Pool
from .weathergen.markov import MonthlyMarkovModel

SCHEMA_VERSION = 1
BUNDLE_KIND = "stormgen.model-bundle"


class BundleError(ValueError):
    pass


def file_fingerprint(path) -> str:
    return "sha256:" + hashlib.sha256(Path(path).read_bytes()).hexdigest()


def dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"


def _floats(arr) -> list:
    """Array to nested lists with NaN mapped to null."""
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim == 0:
        return None if math.isnan(a) else float(a)
    return [_floats(x) for x in a] if a.ndim > 1 else [None if math.isnan(x) else x for x in a.tolist()]


def _array(data) -> np.ndarray:
    return np.array([np.nan if x is None else x for x in data], dtype=np.float64)


def definition_to_dict(d: ExtremeDefinition) -> dict:
    return {
        "wet_threshold": d.wet_threshold,
        "extreme_threshold": d.extreme_threshold,
        "percentile_used": d.percentile_used,
        "monthly_extreme": list(d.monthly_extreme) if d.monthly_extreme else None,
        "degenerate": d.degenerate,
    }


def definition_from_dict(data: dict) -> ExtremeDefinition:
    monthly = data.get("monthly_extreme")
    return ExtremeDefinition(
        data["wet_threshold"],
        data["extreme_threshold"],
        data.get("percentile_used"),
        tuple(monthly) if monthly else None,
        bool(data.get("degenerate", False)),
    )


def climatology_to_dict(c: ClimatologyModel) -> dict:
    return {
        "monthly_mean": list(c.monthly_mean),
        "monthly_sd": list(c.monthly_sd),
        "annual_mean": c.annual_mean,
        "annual_sd": c.annual_sd,
        "terciles": list(c.terciles),
        "annual_totals": [[y, v] for y, v in c.annual_totals],
        "degenerate": c.degenerate,
    }


def climatology_from_dict(data: dict) -> ClimatologyModel:
    return ClimatologyModel(
        tuple(data["monthly_mean"]),
        tuple(data["monthly_sd"]),
        data["annual_mean"],
        data["annual_sd"],
        tuple(data["terciles"]),
        tuple((int(y), float(v)) for y, v in data["annual_totals"]),
        bool(data.get("degenerate", False)),
    )


def ar_to_dict(m: AnnualARModel) -> dict:
    return {
        "order": m.order,
        "coefficients": list(m.coefficients),
        "intercept": m.intercept,
        "innovation_sd": m.innovation_sd,
        "differencing": m.differencing,
        "rmse": m.rmse,
        "intercept_only": m.intercept_only,
    }


def ar_from_dict(data: dict) -> AnnualARModel:
    return AnnualARModel(
        data["order"],
        tuple(data["coefficients"]),
        data["intercept"],
        data["innovation_sd"],
        data["differencing"],
        data.get("rmse", 0.0),
        bool(data.get("intercept_only", False)),
    )


def forecast_to_dict(f: MeanForecast) -> dict:
    return {"target_period": list(f.target_period), "mean": f.mean, "sd": f.sd, "source": f.source, "anomalous": f.anomalous}


def forecast_from_dict(data: dict) -> MeanForecast:
    return MeanForecast(tuple(data["target_period"]), data["mean"], data["sd"], data["source"], bool(data.get("anomalous")))


def gpd_to_dict(f: GPDFit) -> dict:
    return {
        "threshold": f.threshold,
        "shape": f.shape,
        "scale": f.scale,
        "exceedance_rate": f.exceedance_rate,
        "n_exceedances": f.n_exceedances,
    }


def gpd_from_dict(data: dict) -> GPDFit:
    return GPDFit(**data)


def gev_to_dict(f: GEVFit) -> dict:
    return {"block_length": f.block_length, "location": f.location, "scale": f.scale, "shape": f.shape, "n_blocks": f.n_blocks}


def gev_from_dict(data: dict) -> GEVFit:
    return GEVFit(**data)


def probability_to_dict(p: ExtremeProbability) -> dict:
    return {"period": list(p.period), "p": p.p, "method": p.method, "p_day": p.p_day, "bounded_support": p.bounded_support}


def probability_from_dict(data: dict) -> ExtremeProbability:
    return ExtremeProbability(tuple(data["period"]), data["p"], data["method"], data.get("p_day"), bool(data.get("bounded_support")))


def markov_to_dict(m: MonthlyMarkovModel) -> dict:
    return {
        "alpha": m.alpha,
        "fitted": m.fitted.tolist(),
        "transitions": _floats(m.transitions),
        "initial": _floats(m.initial),
    }


def markov_from_dict(data: dict) -> MonthlyMarkovModel:
    return MonthlyMarkovModel(
        np.array(data["transitions"], dtype=np.float64),
        np.array(data["initial"], dtype=np.float64),
        np.array(data["fitted"], dtype=bool),
        data["alpha"],
    )


def _pool_to_dict(p: Pool) -> dict:
    return {"values": _floats(p.values), "predecessors": _floats(p.predecessors), "bandwidth": p.bandwidth}


def _pool_from_dict(data: dict) -> Pool:
    return Pool(_array(data["values"]), _array(data["predecessors"]), data["bandwidth"])


def intensity_to_dict(m: IntensityModel) -> dict:
    return {
        "definition": definition_to_dict(m.definition),
        "knn_k": m.knn_k,
        "kernel": m.kernel,
        "pools": [
            {"month": month, "state": state, **_pool_to_dict(pool)} for (month, state), pool in sorted(m.pools.items())
        ],
        "pooled": [{"state": state, **_pool_to_dict(pool)} for state, pool in sorted(m.pooled.items())],
    }


def intensity_from_dict(data: dict) -> IntensityModel:
    pools = {(p["month"], p["state"]): _pool_from_dict(p) for p in data["pools"]}
    pooled = {p["state"]: _pool_from_dict(p) for p in data["pooled"]}
    return IntensityModel(definition_from_dict(data["definition"]), pools, pooled, data.get("knn_k"), data.get("kernel", "linear"))


@dataclass
class ModelBundle:
    """Everything ``fit`` produces, as one self-describing document."""

    fingerprint: str
    station_id: str
    record: dict
    settings: dict
    definition: ExtremeDefinition
    climatology: ClimatologyModel
    markov: MonthlyMarkovModel
    intensity: IntensityModel
    empirical: dict[str, ExtremeProbability]
    ar_model: Optional[AnnualARModel] = None
    gpd: Optional[GPDFit] = None
    gev: Optional[GEVFit] = None
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        opt = lambda f, x: None if x is None else f(x)  # noqa: E731
        return {
            "kind": BUNDLE_KIND,
            "schema_version": SCHEMA_VERSION,
            "generator_version": __version__,
            "fingerprint": self.fingerprint,
            "station_id": self.station_id,
            "record": self.record,
            "settings": self.settings,
            "warnings": list(self.warnings),
            "components": {
                "extreme_definition": definition_to_dict(self.definition),
                "climatology": climatology_to_dict(self.climatology),
                "ar_model": opt(ar_to_dict, self.ar_model),
                "gpd": opt(gpd_to_dict, self.gpd),
                "gev": opt(gev_to_dict, self.gev),
                "empirical_probability": {k: probability_to_dict(v) for k, v in self.empirical.items()},
                "markov": markov_to_dict(self.markov),
                "intensity": intensity_to_dict(self.intensity),
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelBundle":
        if data.get("kind") != BUNDLE_KIND:
            raise BundleError("not a stormgen model bundle")
        if data.get("schema_version") != SCHEMA_VERSION:
            raise BundleError(f"unsupported bundle schema version {data.get('schema_version')!r}")
        c = data["components"]
        opt = lambda f, x: None if x is None else f(x)  # noqa: E731
        try:
            return cls(
                fingerprint=data["fingerprint"],
                station_id=data.get("station_id", ""),
                record=data.get("record", {}),
                settings=data.get("settings", {}),
                definition=definition_from_dict(c["extreme_definition"]),
                climatology=climatology_from_dict(c["climatology"]),
                markov=markov_from_dict(c["markov"]),
                intensity=intensity_from_dict(c["intensity"]),
                empirical={k: probability_from_dict(v) for k, v in c["empirical_probability"].items()},
                ar_model=opt(ar_from_dict, c.get("ar_model")),
                gpd=opt(gpd_from_dict, c.get("gpd")),
                gev=opt(gev_from_dict, c.get("gev")),
                warnings=list(data.get("warnings", [])),
            )
        except (KeyError, TypeError) as exc:
            raise BundleError(f"malformed bundle: {exc}") from None

    def save(self, path) -> None:
        Path(path).write_text(dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ModelBundle":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise BundleError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(data)
