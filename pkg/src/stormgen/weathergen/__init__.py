"""Baseline stochastic weather generator."""

from .ensemble import (
    CalibrationError,
    ConditioningError,
    EnsembleSpec,
    Scenario,
    ScenarioSet,
    TargetPeriod,
    WeatherGenerator,
    calibrate,
    derive_seed,
    extreme_count,
    generate_ensemble,
    generate_scenario,
    run_ensemble,
)
from .intensity import (
    IntensityModel,
    NoAnalogueError,
    Pool,
    draw_raw,
    fit_intensity,
    place,
    sample_intensity,
    silverman_bandwidth,
)
from .markov import MonthlyMarkovModel, UnfitMonthError, fit_markov, simulate_occurrence, simulate_states

__all__ = [
    "CalibrationError",
    "ConditioningError",
    "EnsembleSpec",
    "IntensityModel",
    "MonthlyMarkovModel",
    "NoAnalogueError",
    "Pool",
    "Scenario",
    "ScenarioSet",
    "TargetPeriod",
    "UnfitMonthError",
    "WeatherGenerator",
    "calibrate",
    "derive_seed",
    "draw_raw",
    "extreme_count",
    "fit_intensity",
    "fit_markov",
    "generate_ensemble",
    "generate_scenario",
    "place",
    "run_ensemble",
    "sample_intensity",
    "silverman_bandwidth",
    "simulate_occurrence",
    "simulate_states",
]
