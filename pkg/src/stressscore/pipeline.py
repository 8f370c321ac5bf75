"""End-to-end steps shared by the CLI subcommands, plus output writers."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import RunConfig
from .distributions.fitting import FitCache
from .distributions.metat import MetaTParams
from .errors import SolverError, ValidationError
from .marketdata import Factor, ReturnMatrix, ingest_curve, to_returns
from .optimizer import LossConstraint, approximate_optimal, brute_force_optimal, exact_optimal
from .portfolios import PortfolioExposure, build_universe, involved_factors, make_bonds, write_universe_csv
from .scenarios import PcaBasis, ScenarioSet, build_base_set, build_enriched_set, load_scenario_set, pca_per_curve
from .scoring import (
    ScenarioAggregate,
    ScoreRecord,
    UniverseScores,
    aggregate_by_scenario,
    params_for,
    plausibility_comparison,
    portfolio_curves,
    score_universe,
)

log = logging.getLogger(__name__)


def load_returns(cfg: RunConfig) -> ReturnMatrix:
    d = cfg.raw["data"]
    series = [
        ingest_curve(cfg.path(c["path"]), c["id"], cfg.pillars,
                     date_column=c.get("date_column", d.get("date_column", "DATE")),
                     column_map=c.get("column_map"))
        for c in d["curves"]
    ]
    return to_returns(series)


def make_universe(cfg: RunConfig, returns: ReturnMatrix) -> list[PortfolioExposure]:
    pc = cfg.raw["portfolios"]
    bonds = make_bonds(returns, pc.get("coupon_rate"))
    return build_universe(cfg.curve_ids, cfg.pillars, {f: b.duration for f, b in bonds.items()},
                          pnl_sign=pc["pnl_sign"], bonds=bonds)


def make_cache(cfg: RunConfig, returns: ReturnMatrix) -> FitCache:
    cache = FitCache(returns, cfg.fit_settings())
    params_file = cfg.raw["fit"].get("params_file")
    if params_file:
        doc = json.loads(cfg.path(params_file).read_text())
        cache.seed(MetaTParams.from_dict(g) for g in doc["groups"])
    return cache


def pca_bases(cfg: RunConfig, returns: ReturnMatrix) -> list[PcaBasis]:
    return [pca_per_curve(returns, c, 3) for c in cfg.curve_ids]


def generated_sets(cfg: RunConfig, returns: ReturnMatrix) -> tuple[ScenarioSet, ScenarioSet]:
    aaa, all_ = pca_bases(cfg, returns)
    scale = float(cfg.raw["scenarios"]["scale"])
    return build_base_set(aaa, all_, scale), build_enriched_set(aaa, all_, scale)


def scenario_sets(cfg: RunConfig, returns: ReturnMatrix, paths: Sequence | None = None) -> list[ScenarioSet]:
    """Sets from explicit ``paths``, else configured files, else generated base/enriched."""
    files = list(paths or []) or [cfg.path(f) for f in cfg.raw["scenarios"]["files"]]
    if files:
        return [load_scenario_set(f, returns.factor_labels) for f in files]
    if cfg.raw["scenarios"]["source"] == "files":
        raise ValidationError("scenarios.source is 'files' but no scenario files were given")
    return list(generated_sets(cfg, returns))


def fit_all(cfg: RunConfig, returns: ReturnMatrix, universe: Sequence[PortfolioExposure],
            cache: FitCache) -> list[MetaTParams]:
    if cfg.fit_mode == "full":
        return [cache.group(returns.factor_labels)]
    seen, out = set(), []
    for p in universe:
        key = tuple(involved_factors(p))
        if key not in seen:
            seen.add(key)
            out.append(cache.group(key))
    return out


def score_set(cfg: RunConfig, universe, set_: ScenarioSet, cache: FitCache) -> UniverseScores:
    sc = cfg.raw["scoring"]
    return score_universe(universe, set_, cache, cfg.fit_mode, cfg.solver_settings(),
                          sc["tie_break"], int(sc["jobs"]))


# -- writers -----------------------------------------------------------------

def _f(x) -> str:
    return repr(float(x))


def _vec(v) -> str:
    return ";".join(_f(x) for x in v)


def write_json(path: Path, doc: dict, cfg: RunConfig) -> None:
    doc = {"provenance": cfg.provenance(), **doc}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, Factor):
        return str(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _open_csv(path: Path, cfg: RunConfig):
    fh = path.open("w", newline="")
    for line in cfg.header_lines():
        fh.write(f"# {line}\n")
    return fh, csv.writer(fh, lineterminator="\n")


SCORE_COLUMNS = [
    "set", "portfolio", "driver_id", "loss", "q", "phi", "psi", "log_density_driver",
    "log_density_optimal", "constraint_value", "converged", "iterations", "tie_broken",
    "method", "factors", "driver", "optimal",
]


def write_scores(path: Path, results: Sequence[UniverseScores], cfg: RunConfig) -> None:
    fh, w = _open_csv(path, cfg)
    with fh:
        w.writerow(SCORE_COLUMNS)
        for res in results:
            for r in res.records:
                w.writerow([
                    res.set_name, r.portfolio, r.driver_id, _f(r.loss), _f(r.q), _f(r.phi), _f(r.psi),
                    _f(r.driver_log_density), _f(r.optimal.log_density), _f(r.optimal.constraint_value),
                    int(r.converged), r.optimal.iterations, int(r.tie_broken), r.optimal.method,
                    ";".join(str(f) for f in r.group), _vec(r.driver), _vec(r.optimal.scenario),
                ])


def scenario_table(results: Sequence[UniverseScores], sets: Sequence[ScenarioSet]):
    """Side-by-side aggregate rows: scenario ids in first-seen order, Total last."""
    aggs = [{a.scenario_id: a for a in aggregate_by_scenario(res.records, s)} for res, s in zip(results, sets)]
    ids = []
    for s in sets:
        ids += [i for i in s.ids if i not in ids]
    ids.append("Total")
    zero = lambda sid: ScenarioAggregate(sid, 0, 0.0, 0.0, 0.0, 0.0)  # noqa: E731
    return ids, [[a.get(sid) or zero(sid) for a in aggs] for sid in ids]


def write_scenario_table(outdir: Path, results, sets, cfg: RunConfig) -> None:
    ids, rows = scenario_table(results, sets)
    fh, w = _open_csv(outdir / "scenario_table.csv", cfg)
    with fh:
        head = ["Scenario"]
        for s in sets:
            head += [f"{s.name} Quantity", f"{s.name} phi mean", f"{s.name} phi std",
                     f"{s.name} psi mean", f"{s.name} psi std"]
        w.writerow(head)
        for sid, row in zip(ids, rows):
            cells = [sid]
            for a in row:
                cells += [a.quantity, _f(a.phi_mean), _f(a.phi_std), _f(a.psi_mean), _f(a.psi_std)]
            w.writerow(cells)
    write_json(outdir / "scenario_table.json", {
        "sets": [s.name for s in sets],
        "rows": [{"scenario": sid, "by_set": [a.to_dict(null_aware=True) for a in row]} for sid, row in zip(ids, rows)],
        "exclusions": {res.set_name: [{"portfolio": n, "error": e} for n, e in res.failures] for res in results},
    }, cfg)


def write_portfolio_curves(path: Path, res_s: UniverseScores, res_t: UniverseScores, cfg: RunConfig) -> None:
    fh, w = _open_csv(path, cfg)
    with fh:
        w.writerow(["score", "rank", "portfolio", "score_s", "score_t", "delta", "same_driver"])
        for score in ("phi", "psi"):
            for k, row in enumerate(portfolio_curves(res_s.records, res_t.records, score)):
                w.writerow([score, k, row.portfolio, _f(row.score_s), _f(row.score_t),
                            _f(row.score_t - row.score_s), int(row.same_driver)])


def comparisons(cfg: RunConfig, universe, res_s: UniverseScores, res_t: UniverseScores, cache: FitCache):
    """Comparison documents for portfolios whose driver changed, plus configured detail portfolios."""
    detail = set(cfg.raw["scoring"]["detail_portfolios"])
    grid = int(cfg.raw["scoring"]["detail_grid_points"])
    by_s = {r.portfolio: r for r in res_s.records}
    by_t = {r.portfolio: r for r in res_t.records}
    out = {}
    for p in universe:
        rs, rt = by_s.get(p.name), by_t.get(p.name)
        if rs is None or rt is None:
            continue
        if p.name in detail or not np.array_equal(rs.driver, rt.driver):
            params = params_for(p, cache, cfg.fit_mode)
            out[p.name] = plausibility_comparison(p, rs, rt, params, grid if p.name in detail else 0)
    return out


@dataclass
class OracleRow:
    portfolio: str
    set_name: str
    exact_log_density: float
    brute_log_density: float
    approx_violation: float
    residual: float
    converged: bool

    @property
    def ok(self) -> bool:
        return self.converged and self.exact_log_density >= self.brute_log_density - 1e-6


def oracle_checks(cfg: RunConfig, universe, records: Sequence[ScoreRecord], cache: FitCache,
                  limit: int | None = None) -> list[OracleRow]:
    """Brute-force cross-check of the exact optimum for scored portfolios."""
    s = cfg.solver_settings()
    by_name = {p.name: p for p in universe}
    rows = []
    for r in list(records)[:limit]:
        p = by_name[r.portfolio]
        params = params_for(p, cache, cfg.fit_mode)
        c = LossConstraint(p.restricted(params.factor_labels), r.q)
        ex = exact_optimal(params, c, s, driver=r.driver)
        bf = brute_force_optimal(params, c, s.box_halfwidth_sigmas, s.grid_points if params.dim <= 2 else 61)
        try:
            viol = approximate_optimal(params, c).diagnostics["constraint_violation"]
        except SolverError:  # quantile overflow
            viol = float("nan")
        rows.append(OracleRow(p.name, r.set_name, ex.log_density, bf.log_density, viol,
                              abs(ex.constraint_value - c.q), ex.converged))
    return rows
