"""Command-line interface.

    stressscore fit            fit meta-t parameters (per portfolio group or full)
    stressscore gen-scenarios  write the PCA base and enriched scenario sets
    stressscore score [SET..]  score scenario sets against the portfolio universe
    stressscore compare [A B]  side-by-side comparison of two sets
    stressscore oracle [SET]   brute-force cross-check of the optimizer

Exit codes: 0 success, 2 validation error, 3 solver non-convergence, 4 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

from . import __version__
from . import pipeline as pl
from .config import RunConfig
from .errors import StressScoreError, ValidationError

log = logging.getLogger("stressscore")

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_DATA = 0, 2, 3, 4


def _overrides(args) -> dict:
    o: dict = {}
    if args.out:
        o["output_dir"] = args.out
    if args.pillars:
        o.setdefault("data", {})["pillars"] = [p.strip() for p in args.pillars.split(",") if p.strip()]
    if args.full_fit:
        o.setdefault("fit", {})["mode"] = "full"
    if args.pnl_sign:
        o.setdefault("portfolios", {})["pnl_sign"] = args.pnl_sign
    if args.jobs:
        o.setdefault("scoring", {})["jobs"] = args.jobs
    if args.tie_break:
        o.setdefault("scoring", {})["tie_break"] = args.tie_break
    if args.params:
        o.setdefault("fit", {})["params_file"] = args.params
    return o


def _outdir(cfg: RunConfig, name: str):
    d = cfg.output_dir / name
    d.mkdir(parents=True, exist_ok=True)
    return d


def _prepare(cfg: RunConfig):
    returns = pl.load_returns(cfg)
    universe = pl.make_universe(cfg, returns)
    cache = pl.make_cache(cfg, returns)
    return returns, universe, cache


def cmd_fit(cfg: RunConfig, args) -> int:
    returns, universe, cache = _prepare(cfg)
    fitted = pl.fit_all(cfg, returns, universe, cache)
    out = _outdir(cfg, "fit")
    pl.write_json(out / "params.json", {
        "fit_mode": cfg.fit_mode,
        "window": list(returns.window),
        "n_obs": returns.n_obs,
        "fit_settings": cfg.fit_settings().to_dict(),
        "groups": [p.to_dict() for p in fitted],
    }, cfg)
    log.info("wrote %d fitted group(s) to %s", len(fitted), out / "params.json")
    return EXIT_OK


def cmd_generate(cfg: RunConfig, args) -> int:
    returns = pl.load_returns(cfg)
    bases = pl.pca_bases(cfg, returns)
    base, enriched = pl.generated_sets(cfg, returns)
    out = _outdir(cfg, "scenarios")
    for s in (base, enriched):
        s.to_csv(out / f"scenarios_{s.name}.csv", cfg.header_lines())
    pl.write_json(out / "pca.json", {
        "window": list(returns.window),
        "bases": [{"curve": b.curve_id, "pillars": list(b.pillars), "sigmas": b.sigmas,
                   "components": b.components, "warnings": list(b.warnings)} for b in bases],
    }, cfg)
    return EXIT_OK


def _converged_exit(results) -> int:
    bad = [n for r in results for n in r.nonconverged]
    if bad:
        log.error("optimizer did not converge for %d record(s): %s", len(bad), ", ".join(bad[:10]))
        return EXIT_SOLVER
    return EXIT_OK


def cmd_score(cfg: RunConfig, args) -> int:
    returns, universe, cache = _prepare(cfg)
    sets = pl.scenario_sets(cfg, returns, args.sets)
    results = [pl.score_set(cfg, universe, s, cache) for s in sets]
    out = _outdir(cfg, "score")
    pl.write_universe_csv(universe, out / "universe.csv", cfg.header_lines())
    pl.write_scores(out / "scores.csv", results, cfg)
    pl.write_scenario_table(out, results, sets, cfg)
    return _converged_exit(results)


def cmd_compare(cfg: RunConfig, args) -> int:
    returns, universe, cache = _prepare(cfg)
    if args.sets and len(args.sets) != 2:
        raise ValidationError("compare takes exactly two scenario set files (or none for base vs enriched)")
    sets = pl.scenario_sets(cfg, returns, args.sets)
    if len(sets) != 2:
        raise ValidationError(f"compare needs two scenario sets, got {len(sets)}")
    if sets[0].name == sets[1].name:
        sets[1] = type(sets[1])(sets[1].name + "_2", sets[1].factor_labels, sets[1].scenarios)
    results = [pl.score_set(cfg, universe, s, cache) for s in sets]
    out = _outdir(cfg, "compare")
    pl.write_scores(out / "scores.csv", results, cfg)
    pl.write_scenario_table(out, results, sets, cfg)
    pl.write_portfolio_curves(out / "portfolio_curves.csv", results[0], results[1], cfg)
    cdir = out / "comparisons"
    cdir.mkdir(exist_ok=True)
    for name, doc in pl.comparisons(cfg, universe, results[0], results[1], cache).items():
        pl.write_json(cdir / f"comparison_{name}.json", doc, cfg)
    return _converged_exit(results)


def cmd_oracle(cfg: RunConfig, args) -> int:
    returns, universe, cache = _prepare(cfg)
    sets = pl.scenario_sets(cfg, returns, args.sets)
    out = _outdir(cfg, "oracle")
    rows = []
    for s in sets[:1] if not args.sets else sets:
        res = pl.score_set(cfg, universe, s, cache)
        rows += pl.oracle_checks(cfg, universe, res.records, cache, args.limit)
    fh, w = pl._open_csv(out / "oracle.csv", cfg)
    with fh:
        w.writerow(["set", "portfolio", "exact_log_density", "brute_log_density", "gap",
                    "approx_constraint_violation", "residual", "converged", "ok"])
        for r in rows:
            w.writerow([r.set_name, r.portfolio, pl._f(r.exact_log_density), pl._f(r.brute_log_density),
                        pl._f(r.exact_log_density - r.brute_log_density), pl._f(r.approx_violation),
                        pl._f(r.residual), int(r.converged), int(r.ok)])
    failed = [r for r in rows if not r.ok]
    print(json.dumps({"checked": len(rows), "failed": len(failed)}))
    return EXIT_SOLVER if failed else EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "gen-scenarios": cmd_generate,
    "score": cmd_score,
    "compare": cmd_compare,
    "oracle": cmd_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="JSON run config (defaults use the bundled fixture)")
    common.add_argument("-o", "--out", help="output directory (overrides output_dir)")
    common.add_argument("--pillars", help="comma-separated pillars, e.g. 6M,1Y,2Y,3Y,4Y,5Y")
    common.add_argument("--full-fit", action="store_true", help="fit one distribution on all factors")
    common.add_argument("--pnl-sign", choices=["direct", "price"], help="bond P&L sign convention")
    common.add_argument("--jobs", type=int, help="parallel scoring workers")
    common.add_argument("--tie-break", choices=["density", "mahalanobis"])
    common.add_argument("--params", help="reuse a params.json written by 'fit'")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="stressscore", description=__doc__.splitlines()[0] if __doc__ else None)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("fit", parents=[common], help="fit meta-t parameters")
    sub.add_parser("gen-scenarios", parents=[common], help="generate PCA scenario sets")
    for name, helptext in (("score", "score scenario sets"), ("compare", "compare two scenario sets")):
        sp = sub.add_parser(name, parents=[common], help=helptext)
        sp.add_argument("sets", nargs="*", help="scenario CSV files")
    sp = sub.add_parser("oracle", parents=[common], help="brute-force optimizer cross-check")
    sp.add_argument("sets", nargs="*", help="scenario CSV files")
    sp.add_argument("--limit", type=int, default=None, help="check at most N portfolios per set")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        cfg = RunConfig.load(args.config, _overrides(args))
        code = COMMANDS[args.command](cfg, args)
    except StressScoreError as exc:
        print(f"stressscore {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    log.info("%s finished in %.1fs", args.command, time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
