"""Bond spread portfolios and their linear exposures to yield moves.

A bond's P&L is approximated by its duration times the yield move.  By
default the sign is taken literally as ``+D * dY`` (``pnl_sign="direct"``);
``pnl_sign="price"`` uses the textbook ``-D * dY``.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .marketdata import Factor, ReturnMatrix, tenor_years

PNL_SIGNS = {"direct": 1.0, "price": -1.0}
BETA_KINDS = ("unit", "duration")

UNIVERSE_COLUMNS = [
    "name", "curve_i", "pillar_i", "curve_j", "pillar_j", "beta_kind",
    "weight_i", "weight_j", "duration_i", "duration_j",
    "coupon_i", "coupon_j", "yield_i", "yield_j", "pnl_sign",
]


@dataclass(frozen=True)
class BondSpec:
    curve_id: str
    maturity: str
    duration: float
    coupon_rate: float = math.nan
    yield_level: float = math.nan
    coupon_frequency: int = 2

    def __post_init__(self):
        if not self.duration > 0:
            raise ValidationError(f"bond {self.curve_id}:{self.maturity}: duration must be positive")

    @property
    def factor(self) -> Factor:
        return Factor(self.curve_id, self.maturity)


@dataclass(frozen=True, eq=False)
class PortfolioExposure:
    """Linear portfolio: P&L for a return vector ``s`` is ``exposure @ s``."""

    name: str
    legs: tuple[tuple[BondSpec, float], ...]
    factor_labels: tuple[Factor, ...]
    exposure: np.ndarray
    beta_kind: str = ""
    pnl_sign: str = "direct"

    def __post_init__(self):
        e = np.array(self.exposure, dtype=float)
        if e.shape != (len(self.factor_labels),):
            raise ValidationError(f"{self.name}: exposure length does not match factor labels")
        if not np.any(e != 0.0):
            raise ValidationError(f"{self.name}: exposure is identically zero")
        e.setflags(write=False)
        object.__setattr__(self, "exposure", e)
        object.__setattr__(self, "factor_labels", tuple(Factor(*f) for f in self.factor_labels))

    def restricted(self, labels: Sequence) -> np.ndarray:
        """Exposure entries on ``labels`` in the order given."""
        idx = [self.factor_labels.index(Factor(*lab)) for lab in labels]
        return self.exposure[idx]

    def scaled(self, factor: float) -> "PortfolioExposure":
        return PortfolioExposure(
            self.name, tuple((b, w * factor) for b, w in self.legs),
            self.factor_labels, self.exposure * factor, self.beta_kind, self.pnl_sign,
        )


def bond_duration(maturity_years: float, yield_level: float, coupon_rate: float, frequency: int = 2) -> float:
    """Macaulay duration (years) of a fixed-coupon bond.

    Rates are decimals, compounded ``frequency`` times a year.  Cash flows fall
    on ``maturity, maturity - 1/f, ...`` back to the first date after today.
    """
    if not maturity_years > 0:
        raise ValidationError(f"maturity must be positive, got {maturity_years}")
    if coupon_rate < 0:
        raise ValidationError(f"coupon rate must be non-negative, got {coupon_rate}")
    if yield_level <= -frequency:
        raise ValidationError(f"yield {yield_level} below -{frequency} has no discount factor")
    if coupon_rate == 0:
        return float(maturity_years)
    n = int(math.ceil(maturity_years * frequency - 1e-9))
    times = maturity_years - np.arange(n)[::-1] / frequency
    flows = np.full(n, 100.0 * coupon_rate / frequency)
    flows[-1] += 100.0
    pv = flows * (1.0 + yield_level / frequency) ** (-frequency * times)
    return float(np.sum(times * pv) / np.sum(pv))


def make_bonds(returns: ReturnMatrix, coupon_rate: float | None = None, frequency: int = 2) -> dict[Factor, BondSpec]:
    """One bond per factor, priced at the factor's last observed yield.

    Yields in ``returns`` are percentage points.  Without ``coupon_rate`` each
    bond is priced at par (coupon equal to the last yield, floored at zero).
    """
    bonds = {}
    for f, level in returns.last_levels().items():
        y = level / 100.0
        c = max(y, 0.0) if coupon_rate is None else coupon_rate
        d = bond_duration(tenor_years(f.pillar), y, c, frequency)
        bonds[f] = BondSpec(f.curve, f.pillar, d, c, y, frequency)
    return bonds


def _name(long_f: Factor, short_f: Factor, beta_kind: str) -> str:
    tag = "b1" if beta_kind == "unit" else "bD"
    return f"L.{long_f.curve}.{long_f.pillar}_S.{short_f.curve}.{short_f.pillar}_{tag}"


def build_universe(
    curves: Sequence[str],
    pillars: Sequence[str],
    durations: Mapping,
    pnl_sign: str = "direct",
    bonds: Mapping | None = None,
) -> list[PortfolioExposure]:
    """All two-leg spread portfolios over the ``curves x pillars`` instruments.

    Every unordered pair of distinct instruments gives four portfolios: each
    orientation (long i / short j and long j / short i) with the short weight
    either -1 or minus the long/short duration ratio.
    """
    if pnl_sign not in PNL_SIGNS:
        raise ValidationError(f"pnl_sign must be one of {sorted(PNL_SIGNS)}")
    sign = PNL_SIGNS[pnl_sign]
    instruments = [Factor(c, p) for c in curves for p in pillars]
    specs = {}
    for f in instruments:
        if bonds is not None and f in bonds:
            specs[f] = bonds[f]
            continue
        d = durations.get(f, durations.get(tuple(f)))
        if d is None:
            raise ValidationError(f"missing duration for {f}")
        specs[f] = BondSpec(f.curve, f.pillar, float(d))

    out = []
    for a, b in itertools.combinations(instruments, 2):
        for long_f, short_f in ((a, b), (b, a)):
            bl, bs = specs[long_f], specs[short_f]
            for kind in BETA_KINDS:
                w_short = -1.0 if kind == "unit" else -bl.duration / bs.duration
                exposure = np.zeros(len(instruments))
                exposure[instruments.index(long_f)] = sign * bl.duration
                exposure[instruments.index(short_f)] = sign * w_short * bs.duration
                out.append(PortfolioExposure(
                    _name(long_f, short_f, kind), ((bl, 1.0), (bs, w_short)),
                    tuple(instruments), exposure, kind, pnl_sign,
                ))
    return out


def involved_factors(p: PortfolioExposure) -> list[Factor]:
    """Factors carrying a non-zero exposure, in factor order."""
    return [f for f, e in zip(p.factor_labels, p.exposure) if e != 0.0]


def write_universe_csv(universe: Sequence[PortfolioExposure], path, header_lines: Sequence[str] = ()) -> None:
    with Path(path).open("w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(UNIVERSE_COLUMNS)
        for p in universe:
            (bi, wi), (bj, wj) = p.legs
            w.writerow([
                p.name, bi.curve_id, bi.maturity, bj.curve_id, bj.maturity, p.beta_kind,
                repr(wi), repr(wj), repr(bi.duration), repr(bj.duration),
                repr(bi.coupon_rate), repr(bj.coupon_rate), repr(bi.yield_level), repr(bj.yield_level),
                p.pnl_sign,
            ])
