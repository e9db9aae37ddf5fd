"""CSV ingestion of daily precipitation records."""

from __future__ import annotations

import csv
import datetime as dt
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Union

import numpy as np

from .timeseries import DailySeries

logger = logging.getLogger(__name__)

GapPolicy = Literal["reject", "fill_zero", "fill_missing_marker"]
PathLike = Union[str, Path]


class IngestError(ValueError):
    """Raised for malformed or inconsistent input files."""


@dataclass(frozen=True)
class CsvOptions:
    date_column: str = "date"
    value_column: str = "precip_mm"
    date_format: str = "%Y-%m-%d"
    gap_policy: GapPolicy = "reject"
    station_id: str = ""


def _parse_date(text: str, fmt: str) -> dt.date:
    if fmt == "%Y-%m-%d":
        return dt.date.fromisoformat(text)
    return dt.datetime.strptime(text, fmt).date()


def read_daily_csv(path: PathLike, options: CsvOptions | None = None) -> DailySeries:
    """Read a ``date,precip_mm`` CSV file into a :class:`DailySeries`.

    Rows must be strictly increasing in date. Missing dates are rejected
    unless ``options.gap_policy`` asks for them to be filled with 0.0 (either
    silently or marked missing). Line numbers in error messages count data
    lines, so the first line after the header is line 1.
    """
    options = options or CsvOptions()
    path = Path(path)
    text = path.read_bytes().decode("utf-8-sig")
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise IngestError(f"{path}: empty file") from None
    try:
        di = header.index(options.date_column)
        vi = header.index(options.value_column)
    except ValueError:
        raise IngestError(
            f"{path}: header must contain '{options.date_column}' and '{options.value_column}'"
        ) from None

    values: list[float] = []
    missing: list[bool] = []
    start = prev = None
    for row in reader:
        line = reader.line_num - 1
        if not row or all(not c.strip() for c in row):
            continue
        try:
            date = _parse_date(row[di].strip(), options.date_format)
            value = float(row[vi])
        except (IndexError, ValueError):
            raise IngestError(f"malformed row at line {line}") from None
        if not math.isfinite(value):
            raise IngestError(f"non-finite precipitation at line {line}")
        if value < 0:
            raise IngestError(f"negative precipitation at line {line}")
        if prev is not None:
            step = (date - prev).days
            if step <= 0:
                raise IngestError(f"non-monotone date at line {line}")
            if step > 1:
                if options.gap_policy == "reject":
                    raise IngestError(f"date gap at line {line}")
                values.extend([0.0] * (step - 1))
                missing.extend([options.gap_policy == "fill_missing_marker"] * (step - 1))
                logger.info("filled %d missing days before line %d", step - 1, line)
        else:
            start = date
        values.append(value)
        missing.append(False)
        prev = date
    if start is None:
        raise IngestError(f"{path}: no data rows")
    return DailySeries(start, values, options.station_id, missing if any(missing) else None)


def write_daily_csv(series: DailySeries, path: PathLike) -> None:
    """Write ``series`` so that :func:`read_daily_csv` returns it unchanged.

    Values are written in shortest round-trip form. Days flagged missing are
    omitted and come back through the ``fill_missing_marker`` gap policy.
    """
    lines = ["date,precip_mm"]
    observed = series.observed
    for date, value, ok in zip(series.dates().astype(str), series.values.tolist(), observed):
        if ok:
            lines.append(f"{date},{value!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def annual_totals(series: DailySeries, *, report: list[int] | None = None) -> list[tuple[int, float]]:
    """Sum of daily values per complete calendar year.

    A year counts only when every one of its days is present and observed.
    Excluded years are logged and, if ``report`` is given, appended to it.
    """
    years, _, _ = series.calendar()
    observed = series.observed
    out = []
    for year in np.unique(years).tolist():
        sel = years == year
        n_year = 366 if (year % 4 == 0 and (year % 100 != 0 or year % 400 == 0)) else 365
        if sel.sum() == n_year and observed[sel].all():
            out.append((int(year), float(series.values[sel].sum())))
        else:
            logger.debug("year %d incomplete, excluded from annual totals", year)
            if report is not None:
                report.append(int(year))
    if not out:
        raise IngestError("no complete years")
    return out
