"""Yield-curve ingestion and one-day yield-change matrices.

Input files are delimited text tables (comma or semicolon) with a header row,
one date column and one column per tenor.  ECB data-warehouse exports whose
column headers are series keys ending in ``SR_<tenor>`` are recognised
automatically; anything else can be mapped with ``column_map``.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

DEFAULT_PILLARS = ("6M", "1Y", "2Y", "3Y", "4Y", "5Y")
MISSING_TOKENS = frozenset({"", "na", "nan", "n/a", "-", "null"})

_TENOR_RE = re.compile(r"^(\d+(?:\.\d+)?)([MY])$", re.IGNORECASE)
_ECB_KEY_RE = re.compile(r"SR_(\d+[MY])$", re.IGNORECASE)


class Factor(NamedTuple):
    """A risk factor: one pillar of one curve."""

    curve: str
    pillar: str

    def __str__(self):
        return f"{self.curve}:{self.pillar}"

    @classmethod
    def parse(cls, text: str) -> "Factor":
        curve, sep, pillar = text.strip().rpartition(":")
        if not sep or not curve or not pillar:
            raise ValueError(f"factor label must look like CURVE:PILLAR, got {text!r}")
        return cls(curve, pillar.upper())


def tenor_years(tenor: str) -> float:
    """``"6M" -> 0.5``, ``"3Y" -> 3.0``."""
    m = _TENOR_RE.match(tenor.strip())
    if m is None:
        raise ValueError(f"unrecognised tenor label {tenor!r}")
    n = float(m.group(1))
    return n / 12.0 if m.group(2).upper() == "M" else n


@dataclass(frozen=True)
class CurveSeries:
    """Yields (percentage points) of one curve on a set of pillars."""

    curve_id: str
    pillars: tuple[str, ...]
    dates: tuple[dt.date, ...]
    yields: np.ndarray
    source: str = ""

    def __post_init__(self):
        y = np.asarray(self.yields, dtype=float)
        if y.shape != (len(self.dates), len(self.pillars)):
            raise DataError(
                f"{self.curve_id}: yields shape {y.shape} does not match "
                f"{len(self.dates)} dates x {len(self.pillars)} pillars"
            )
        if not np.all(np.isfinite(y)):
            raise DataError(f"{self.curve_id}: yields contain missing values")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise DataError(f"{self.curve_id}: dates must be strictly increasing")
        y.setflags(write=False)
        object.__setattr__(self, "yields", y)

    @property
    def factors(self) -> list[Factor]:
        return [Factor(self.curve_id, p) for p in self.pillars]


@dataclass(frozen=True)
class ReturnMatrix:
    """Aligned one-day yield changes.

    ``levels`` holds the joined yield paths (one more row than ``rows``) and
    ``dates`` the matching business dates, so ``rows[k]`` is the move from
    ``dates[k]`` to ``dates[k + 1]``.
    """

    factor_labels: tuple[Factor, ...]
    dates: tuple[dt.date, ...]
    rows: np.ndarray
    levels: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        labels = tuple(Factor(*f) for f in self.factor_labels)
        object.__setattr__(self, "factor_labels", labels)
        if len(set(labels)) != len(labels):
            raise DataError("duplicate factor labels")
        rows = np.asarray(self.rows, dtype=float)
        levels = np.asarray(self.levels, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != len(labels):
            raise DataError(f"return matrix shape {rows.shape} does not match {len(labels)} factors")
        if levels.shape != (rows.shape[0] + 1, rows.shape[1]) or len(self.dates) != levels.shape[0]:
            raise DataError("levels/dates must have exactly one more row than returns")
        rows.setflags(write=False)
        levels.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "levels", levels)

    @classmethod
    def from_rows(cls, factor_labels, rows, start: dt.date = dt.date(2000, 1, 3)) -> "ReturnMatrix":
        """Wrap a bare return array (e.g. simulated draws) with a synthetic daily calendar."""
        rows = np.asarray(rows, dtype=float)
        levels = np.vstack([np.zeros((1, rows.shape[1])), np.cumsum(rows, axis=0)])
        dates = tuple(start + dt.timedelta(days=k) for k in range(levels.shape[0]))
        return cls(tuple(factor_labels), dates, rows, levels, {"synthetic": True})

    @property
    def n_obs(self) -> int:
        return self.rows.shape[0]

    @property
    def window(self) -> tuple[str, str]:
        return self.dates[0].isoformat(), self.dates[-1].isoformat()

    def index(self, label) -> int:
        try:
            return self.factor_labels.index(Factor(*label))
        except ValueError:
            raise KeyError(f"unknown factor {label}") from None

    def column(self, label) -> np.ndarray:
        return self.rows[:, self.index(label)]

    def subset(self, labels: Sequence) -> "ReturnMatrix":
        idx = [self.index(lab) for lab in labels]
        return ReturnMatrix(
            tuple(self.factor_labels[i] for i in idx),
            self.dates,
            self.rows[:, idx],
            self.levels[:, idx],
            dict(self.meta),
        )

    def last_levels(self) -> dict[Factor, float]:
        return dict(zip(self.factor_labels, self.levels[-1].tolist()))


def _sniff_delimiter(header_line: str) -> str:
    return ";" if header_line.count(";") > header_line.count(",") else ","


def _pillar_for_header(name: str, column_map: dict | None) -> str | None:
    if column_map and name in column_map:
        return column_map[name].upper()
    if _TENOR_RE.match(name):
        return name.upper()
    m = _ECB_KEY_RE.search(name)
    return m.group(1).upper() if m else None


def ingest_curve(
    file_path,
    curve_id: str,
    pillar_filter: Sequence[str] = DEFAULT_PILLARS,
    date_column: str = "DATE",
    column_map: dict | None = None,
) -> CurveSeries:
    """Read one curve from a delimited file, keeping only ``pillar_filter``.

    Rows with any requested pillar missing are dropped; the result is sorted by
    date.  Unparseable cells raise :class:`DataError` naming the file line and
    column.
    """
    pillars = tuple(p.strip().upper() for p in pillar_filter)
    if not pillars:
        raise DataError("pillar_filter must not be empty")
    path = Path(file_path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")

    with path.open(newline="", encoding="utf-8-sig") as fh:
        lines = [(n, ln) for n, ln in enumerate(fh, start=1) if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise DataError(f"{path}: empty file")
    delim = _sniff_delimiter(lines[0][1])
    reader = csv.reader((ln for _, ln in lines), delimiter=delim)
    header = [h.strip() for h in next(reader)]

    try:
        date_idx = [h.upper() for h in header].index(date_column.upper())
    except ValueError:
        raise DataError(f"{path}: no date column named {date_column!r}") from None
    col_for = {}
    for j, h in enumerate(header):
        if j == date_idx:
            continue
        p = _pillar_for_header(h, column_map)
        if p is not None and p not in col_for:
            col_for[p] = j
    unknown = [p for p in pillars if p not in col_for]
    if unknown:
        raise DataError(f"{path}: unknown pillar label(s) {unknown}; available {sorted(col_for)}")

    dates, values, dropped = [], [], 0
    for (lineno, _), cells in zip(lines[1:], reader):
        try:
            d = dt.date.fromisoformat(cells[date_idx].strip())
        except (ValueError, IndexError):
            raise DataError(f"{path}: line {lineno}, column {date_column!r}: unparseable date") from None
        row = []
        for p in pillars:
            j = col_for[p]
            raw = cells[j].strip() if j < len(cells) else ""
            if raw.lower() in MISSING_TOKENS:
                row = None
                break
            try:
                row.append(float(raw))
            except ValueError:
                raise DataError(f"{path}: line {lineno}, column {header[j]!r}: unparseable number {raw!r}") from None
        if row is None:
            dropped += 1
            continue
        dates.append(d)
        values.append(row)

    if len(dates) < 2:
        raise DataError(f"{path}: fewer than 2 usable rows")
    if len(set(dates)) != len(dates):
        raise DataError(f"{path}: duplicate dates")
    order = sorted(range(len(dates)), key=dates.__getitem__)
    if dropped:
        log.info("%s: dropped %d rows with missing pillars", path.name, dropped)
    return CurveSeries(
        curve_id,
        pillars,
        tuple(dates[k] for k in order),
        np.array([values[k] for k in order], dtype=float),
        source=str(path),
    )


def to_returns(series_list: Sequence[CurveSeries]) -> ReturnMatrix:
    """Inner-join curves on date and take first differences of yields.

    Factor order is curve order as given, then pillar order within each curve.
    """
    if not series_list:
        raise DataError("no curves given")
    labels = [f for s in series_list for f in s.factors]
    if len(set(labels)) != len(labels):
        raise DataError("duplicate factor labels")
    common = set(series_list[0].dates)
    for s in series_list[1:]:
        common &= set(s.dates)
    if not common:
        raise DataError("empty date intersection")
    if len(common) < 2:
        raise DataError("fewer than 2 common dates")
    dates = tuple(sorted(common))
    blocks = []
    for s in series_list:
        pos = {d: k for k, d in enumerate(s.dates)}
        blocks.append(s.yields[[pos[d] for d in dates]])
    levels = np.hstack(blocks)
    return ReturnMatrix(
        tuple(labels),
        dates,
        np.diff(levels, axis=0),
        levels,
        {"window": [dates[0].isoformat(), dates[-1].isoformat()],
         "sources": [s.source for s in series_list]},
    )
