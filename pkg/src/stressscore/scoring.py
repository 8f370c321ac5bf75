"""Driver selection, plausibility (phi) and direction (psi) scores, aggregation."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .distributions.fitting import FitCache
from .distributions.metat import MetaTParams, log_density
from .errors import StressScoreError, ValidationError
from .marketdata import Factor
from .optimizer import LossConstraint, OptimalScenarioResult, SolverSettings, exact_optimal
from .portfolios import PortfolioExposure, involved_factors
from .scenarios import ScenarioSet

log = logging.getLogger(__name__)

TIE_RULES = ("density", "mahalanobis")
FIT_MODES = ("per-group", "full")
TOTAL_ID = "Total"


@dataclass
class ScoreRecord:
    portfolio: str
    driver_id: str
    loss: float
    q: float
    optimal: OptimalScenarioResult
    phi: float
    psi: float
    tie_broken: bool
    group: tuple[Factor, ...] = ()
    driver: np.ndarray | None = None
    driver_log_density: float = math.nan
    set_name: str = ""

    @property
    def converged(self) -> bool:
        return self.optimal.converged


@dataclass(frozen=True)
class ScenarioAggregate:
    scenario_id: str
    quantity: int
    phi_mean: float
    phi_std: float
    psi_mean: float
    psi_std: float

    def to_dict(self, null_aware: bool = False) -> dict:
        empty = null_aware and self.quantity == 0
        stat = (lambda v: None) if empty else float
        return {
            "scenario_id": self.scenario_id,
            "quantity": self.quantity,
            "phi_mean": stat(self.phi_mean),
            "phi_std": stat(self.phi_std),
            "psi_mean": stat(self.psi_mean),
            "psi_std": stat(self.psi_std),
        }


@dataclass
class UniverseScores:
    set_name: str
    records: list[ScoreRecord]
    failures: list[tuple[str, str]] = field(default_factory=list)

    @property
    def exclusions(self) -> int:
        return len(self.failures)

    @property
    def nonconverged(self) -> list[str]:
        return [r.portfolio for r in self.records if not r.converged]


def _group_view(p: PortfolioExposure, set_: ScenarioSet, params: MetaTParams):
    group = params.factor_labels
    missing = [str(f) for f in involved_factors(p) if f not in group]
    if missing:
        raise ValidationError(f"{p.name}: parameters do not cover factor(s) {missing}")
    return group, p.restricted(group), set_.restricted(group)


def select_driver(p: PortfolioExposure, set_: ScenarioSet, params: MetaTParams,
                  tie_break: str = "density", rel_tol: float = 1e-12) -> tuple[str, float, bool]:
    """Scenario with the worst (lowest) P&L for ``p``.

    Ties within ``rel_tol`` go to the most plausible scenario (highest density,
    or smallest Mahalanobis norm with ``tie_break="mahalanobis"``), then to the
    lowest index.
    """
    if tie_break not in TIE_RULES:
        raise ValidationError(f"tie_break must be one of {TIE_RULES}")
    _, P, S = _group_view(p, set_, params)
    # row by row: a batched product may round differently with the set size
    losses = np.array([float(P @ row) for row in S])
    lmin = float(losses.min())
    cand = np.flatnonzero(np.abs(losses - lmin) <= rel_tol * abs(lmin))
    if cand.size == 1:
        k = int(cand[0])
        return set_.ids[k], float(losses[k]), False
    pts = S[cand]
    if tie_break == "density":
        key = -log_density(params, pts)
    else:
        z = (pts - params.mu) / params.sigma
        key = np.einsum("ij,jk,ik->i", z, params.corr_inv, z)
    k = int(cand[int(np.argmin(key))])  # argmin keeps the first of equal keys
    return set_.ids[k], float(losses[k]), True


def _cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 1.0 if nu == nv else 0.0
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def score_portfolio(p: PortfolioExposure, set_: ScenarioSet, params: MetaTParams,
                    solver: SolverSettings = SolverSettings(), tie_break: str = "density") -> ScoreRecord:
    """Score one portfolio against one scenario set under ``params``.

    ``phi`` is the density ratio driver/optimum, computed in log space; ``psi``
    the cosine between driver and optimum on the parameters' factor group.
    """
    group, P, S = _group_view(p, set_, params)
    driver_id, loss, tie = select_driver(p, set_, params, tie_break)
    driver = S[set_.ids.index(driver_id)]
    q = float(P @ driver)
    opt = exact_optimal(params, LossConstraint(P, q), solver, driver=driver)
    ld = float(log_density(params, driver))
    phi = math.exp(ld - opt.log_density)
    if not opt.converged:
        log.warning("%s: optimizer did not converge (%s)", p.name, opt.diagnostics.get("starts"))
    return ScoreRecord(
        p.name, driver_id, loss, q, opt, phi, _cosine(driver, opt.scenario), tie,
        group, driver.copy(), ld, set_.name,
    )


def params_for(p: PortfolioExposure, cache: FitCache, fit_mode: str = "per-group") -> MetaTParams:
    """Distribution used to score ``p``: a fit on its own factors, or the full fit restricted to them."""
    group = involved_factors(p)
    if fit_mode == "per-group":
        return cache.group(group)
    if fit_mode == "full":
        return cache.group(cache.returns.factor_labels).subset(group)
    raise ValidationError(f"fit_mode must be one of {FIT_MODES}")


def _score_task(args):
    p, set_, params, solver, tie_break = args
    try:
        return score_portfolio(p, set_, params, solver, tie_break), None
    except StressScoreError as exc:
        return None, f"{type(exc).__name__}: {exc}"


def score_universe(universe: Sequence[PortfolioExposure], set_: ScenarioSet, cache: FitCache,
                   fit_mode: str = "per-group", solver: SolverSettings = SolverSettings(),
                   tie_break: str = "density", jobs: int = 1) -> UniverseScores:
    """Score every portfolio; fits are drawn from ``cache`` so they are shared across sets.

    Portfolios that fail (fit or solver error) are listed in ``failures`` and
    left out of the records.
    """
    tasks, failures = [], []
    for p in universe:
        try:
            tasks.append((p, set_, params_for(p, cache, fit_mode), solver, tie_break))
        except StressScoreError as exc:
            failures.append((p.name, f"{type(exc).__name__}: {exc}"))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_score_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        results = [_score_task(t) for t in tasks]
    records = []
    for task, (rec, err) in zip(tasks, results):
        if err is None:
            records.append(rec)
        else:
            failures.append((task[0].name, err))
    if failures:
        log.warning("%s: %d portfolio(s) excluded", set_.name, len(failures))
    return UniverseScores(set_.name, records, failures)


def _stats(values: list[float]) -> tuple[float, float]:
    if not values:
        return 0.0, 0.0
    arr = np.asarray(values)
    return float(arr.mean()), float(arr.std())


def aggregate_by_scenario(records: Sequence[ScoreRecord], set_: ScenarioSet) -> list[ScenarioAggregate]:
    """Per-scenario mean/std of phi and psi over the portfolios it drives, plus a Total row.

    Scenarios driving no portfolio get quantity 0 and zero statistics.
    Standard deviations are population (ddof=0).
    """
    if not records:
        raise ValidationError("no score records to aggregate")
    rows = []
    for sid in set_.ids:
        mine = [r for r in records if r.driver_id == sid]
        pm, ps = _stats([r.phi for r in mine])
        qm, qs = _stats([r.psi for r in mine])
        rows.append(ScenarioAggregate(sid, len(mine), pm, ps, qm, qs))
    pm, ps = _stats([r.phi for r in records])
    qm, qs = _stats([r.psi for r in records])
    rows.append(ScenarioAggregate(TOTAL_ID, len(records), pm, ps, qm, qs))
    return rows


@dataclass(frozen=True)
class CurveRow:
    portfolio: str
    score_s: float
    score_t: float
    same_driver: bool


def portfolio_curves(records_s: Sequence[ScoreRecord], records_t: Sequence[ScoreRecord],
                     score: str = "phi") -> list[CurveRow]:
    """Per-portfolio scores under two sets, ordered by ascending score under the first."""
    if score not in ("phi", "psi"):
        raise ValidationError("score must be 'phi' or 'psi'")
    by_t = {r.portfolio: r for r in records_t}
    if len(by_t) != len(records_t) or set(by_t) != {r.portfolio for r in records_s} or len(records_s) != len(by_t):
        raise ValidationError("the two record lists cover different portfolio universes")
    rows = [
        CurveRow(r.portfolio, getattr(r, score), getattr(by_t[r.portfolio], score),
                 bool(np.array_equal(r.driver, by_t[r.portfolio].driver)))
        for r in records_s
    ]
    order = sorted(range(len(rows)), key=lambda k: (rows[k].score_s, k))
    return [rows[k] for k in order]


def classify(loss_ratio: float, density_ratio: float, same_driver: bool) -> str:
    if same_driver:
        return "same_driver"
    loss = "higher_loss" if loss_ratio > 1.0 else "lower_loss"
    plaus = "higher_plausibility" if density_ratio > 1.0 else "lower_plausibility"
    return f"{loss}_{plaus}"


def plausibility_comparison(p: PortfolioExposure, record_s: ScoreRecord, record_t: ScoreRecord,
                            params: MetaTParams, grid_points: int = 0) -> dict:
    """Plot-ready comparison of one portfolio's drivers and optima under two sets.

    ``loss_ratio`` is the second set's P&L over the first's (above 1 when the
    second set hits harder) and ``density_ratio`` the driver density ratio.
    With ``grid_points`` > 0 and two factors, a log-density grid spanning all
    four points is included for drawing level lines.
    """
    if record_s.portfolio != p.name or record_t.portfolio != p.name:
        raise ValidationError("records do not belong to this portfolio")
    same = bool(np.array_equal(record_s.driver, record_t.driver))
    pts = {
        "driver_s": record_s.driver, "driver_t": record_t.driver,
        "optimal_s": record_s.optimal.scenario, "optimal_t": record_t.optimal.scenario,
    }
    levels = {k: float(log_density(params, v)) for k, v in pts.items()}
    loss_ratio = record_t.loss / record_s.loss if record_s.loss != 0 else (1.0 if record_t.loss == 0 else math.inf)
    density_ratio = math.exp(levels["driver_t"] - levels["driver_s"])
    if same:
        loss_ratio, density_ratio = 1.0, 1.0
    out = {
        "portfolio": p.name,
        "factors": [str(f) for f in params.factor_labels],
        "exposure": p.restricted(params.factor_labels).tolist(),
        "sets": [record_s.set_name, record_t.set_name],
        "driver_ids": [record_s.driver_id, record_t.driver_id],
        "losses": [record_s.loss, record_t.loss],
        "loss_ratio": loss_ratio,
        "density_ratio": density_ratio,
        "phi": [record_s.phi, record_t.phi],
        "psi": [record_s.psi, record_t.psi],
        "points": {k: v.tolist() for k, v in pts.items()},
        "log_density_levels": levels,
        "classification": classify(loss_ratio, density_ratio, same),
    }
    if grid_points and params.dim == 2:
        allp = np.vstack(list(pts.values()) + [params.mu])
        lo, hi = allp.min(axis=0), allp.max(axis=0)
        pad = 0.25 * np.maximum(hi - lo, params.sigma)
        axes = [np.linspace(lo[i] - pad[i], hi[i] + pad[i], grid_points) for i in range(2)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        out["grid"] = {
            "x": axes[0].tolist(), "y": axes[1].tolist(),
            "log_density": log_density(params, mesh).tolist(),
        }
    return out
