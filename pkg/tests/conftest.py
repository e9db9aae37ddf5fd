import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from stormgen.extremes import define_extreme  # noqa: E402
from stormgen.fixtures import fixture_path, load_fixture  # noqa: E402
from stormgen.timeseries import classify  # noqa: E402
from stormgen.weathergen import WeatherGenerator, fit_intensity, fit_markov  # noqa: E402


@pytest.fixture(scope="session")
def fixture_record():
    return load_fixture()


@pytest.fixture(scope="session")
def fixture_csv():
    return fixture_path()


@pytest.fixture(scope="session")
def fitted(fixture_record):
    series, _ = fixture_record
    definition = define_extreme(series, 0.95)
    states = classify(series, definition)
    markov = fit_markov(states)
    intensity = fit_intensity(series, definition)
    return {
        "series": series,
        "definition": definition,
        "states": states,
        "markov": markov,
        "intensity": intensity,
        "generator": WeatherGenerator(markov, intensity),
    }


_ACCEPTANCE: list[str] = []


@pytest.fixture
def acceptance():
    """Record one ``criterion N: PASS|FAIL|SKIP ...`` line; all lines are echoed in the terminal summary.

    ``ok=None`` marks a check that could not run.
    """

    def record(label: str, ok, detail: str):
        status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        line = f"criterion {label}: {status}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: s.split(":")[0]):
            terminalreporter.write_line(line)
