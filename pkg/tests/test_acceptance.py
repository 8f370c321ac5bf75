"""Acceptance gate: one test per criterion, each reporting a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline; they
are also repeated in the terminal summary.
"""

from __future__ import annotations

import math
import time

import mpmath
import numpy as np
import pytest

from stressscore import pipeline as pl
from stressscore.distributions import fit_group, log_density, meta_t_log_density, sample_meta_t, t_cdf, t_quantile
from stressscore.marketdata import Factor
from stressscore.optimizer import LossConstraint, approximate_optimal, brute_force_optimal, exact_optimal
from stressscore.portfolios import BETA_KINDS, PortfolioExposure
from stressscore.scenarios import ScenarioSet, pca_per_curve
from stressscore.scoring import plausibility_comparison, score_portfolio

from conftest import corr2, make_params, random_corr, report


def test_criterion_01_closed_form_equivalence():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst, n = 0.0, 0
    for d in (2, 3):
        for _ in range(60):
            nu = float(rng.uniform(1.5, 30.0))
            corr = random_corr(rng, d)
            mu = rng.normal(0.0, 0.5, d)
            sigma = rng.uniform(0.3, 2.0, d)
            params = make_params(mu, sigma, nu, corr, nu)
            P = rng.normal(size=d)
            q = float(P @ mu) - rng.uniform(0.5, 6.0) * math.sqrt(float(P @ (np.outer(sigma, sigma) * corr) @ P))
            # affine form of q * Sigma P / P'Sigma P, with the dispersion matrix
            omega = np.outer(sigma, sigma) * corr
            expected = mu + (q - P @ mu) * (omega @ P) / float(P @ omega @ P)
            got = exact_optimal(params, LossConstraint(P, q)).scenario
            worst = max(worst, float(np.max(np.abs(got - expected))))
            n += 1
    elapsed = time.perf_counter() - t0
    report(1, "closed-form oracle equivalence", worst <= 1e-6 and elapsed < 10.0 and n >= 100,
           f"{n} instances, max coord error {worst:.2e}, {elapsed:.2f}s")


def test_criterion_02_brute_force_dominance():
    rng = np.random.default_rng(202)
    worst_gap, worst_res, n = -math.inf, 0.0, 0
    while n < 50:
        nu = rng.uniform(2.0, 12.0, 2)
        nu_bar = float(rng.uniform(2.0, 30.0))
        if min(abs(nu - nu_bar)) < 0.5:
            continue
        params = make_params(rng.normal(0, 0.2, 2), rng.uniform(0.5, 1.5, 2), nu,
                             corr2(float(rng.uniform(-0.8, 0.8))), nu_bar)
        P = rng.normal(size=2)
        q = float(P @ params.mu) - rng.uniform(0.5, 4.0) * float(np.abs(P) @ params.sigma)
        c = LossConstraint(P, q)
        ex = exact_optimal(params, c)
        bf = brute_force_optimal(params, c)
        worst_gap = max(worst_gap, math.exp(bf.log_density) - math.exp(ex.log_density))
        worst_res = max(worst_res, abs(ex.constraint_value - q))
        n += 1
    report(2, "brute-force dominance", worst_gap <= 1e-6 and worst_res < 1e-10,
           f"{n} instances, max density shortfall {worst_gap:.2e}, max residual {worst_res:.1e}")


def _violation(nu_bar: float) -> float:
    params = make_params(0.0, 1.0, 3.0, corr2(0.5), nu_bar)
    return approximate_optimal(params, LossConstraint([1.0, 1.0], -3.0)).diagnostics["constraint_violation"]


def test_criterion_03_approximation_gap_ordering():
    v_far, v_near = _violation(30.0), _violation(3.5)
    report(3, "approximation gap grows with dof mismatch", abs(v_far) > 0 and abs(v_far) > abs(v_near),
           f"|violation| {abs(v_far):.4f} at copula dof 30 vs {abs(v_near):.4f} at 3.5")


def test_criterion_04_score_range_invariants(fixture_run):
    bad = []
    n = 0
    for res in (fixture_run.res_base, fixture_run.res_enriched):
        for r in res.records:
            if not r.converged:
                continue
            n += 1
            tol = 1e-9 * max(1.0, abs(r.optimal.log_density))
            if not (0.0 < r.phi <= 1.0 + 1e-9 and -1.0 <= r.psi <= 1.0
                    and r.driver_log_density <= r.optimal.log_density + tol):
                bad.append((res.set_name, r.portfolio, r.phi, r.psi))
    total = len(fixture_run.res_base.records) + len(fixture_run.res_enriched.records)
    report(4, "score range and feasibility invariants", not bad and n > 0,
           f"{n}/{total} converged records checked, {len(bad)} violations")


def test_criterion_05_structural_counts(fixture_run, tmp_path):
    fr = fixture_run
    sets = [fr.base, fr.enriched]
    results = [fr.res_base, fr.res_enriched]
    ids, rows = pl.scenario_table(results, sets)
    sums = [sum(row[k].quantity for row in rows[:-1]) for k in range(2)]
    totals = [rows[-1][k].quantity for k in range(2)]
    pl.write_scenario_table(tmp_path, results, sets, fr.cfg)
    csv_last = [ln for ln in (tmp_path / "scenario_table.csv").read_text().splitlines() if ln][-1]
    checks = {
        "factors": len(fr.returns.factor_labels) == 12,
        "portfolios": len(fr.universe) == 264,
        "base": len(fr.base) == 6,
        "enriched": len(fr.enriched) == 10,
        "records": [len(r.records) for r in results] == [264, 264],
        "quantities": sums == [264, 264] and totals == [264, 264],
        "total_row": ids[-1] == "Total" and csv_last.startswith("Total,"),
    }
    report(5, "structural counts", all(checks.values()),
           ", ".join(f"{k}={'ok' if v else 'MISMATCH'}" for k, v in checks.items()))


def test_criterion_06_superset_monotonicity(fixture_run):
    by_e = {r.portfolio: r for r in fixture_run.res_enriched.records}
    loss_up, unstable, same = [], [], 0
    for rb in fixture_run.res_base.records:
        re_ = by_e[rb.portfolio]
        if re_.loss > rb.loss:
            loss_up.append(rb.portfolio)
        if np.array_equal(rb.driver, re_.driver):
            same += 1
            if not (rb.phi == re_.phi and rb.psi == re_.psi):
                unstable.append(rb.portfolio)
    report(6, "superset monotonicity and driver stability", not loss_up and not unstable,
           f"{len(loss_up)} loss increases, {same} unchanged drivers, {len(unstable)} score mismatches")


def _sign_changes(v) -> int:
    s = np.sign(v)
    return int(np.sum(s[1:] != s[:-1]))


def test_criterion_07_pca_sign_patterns(fixture_run):
    notes, ok = [], True
    for curve in fixture_run.cfg.curve_ids:
        b = pca_per_curve(fixture_run.returns, curve, 3)
        c = b.components
        level = bool(np.all(c[0] > 0))
        slope = c[1][0] < 0 < c[1][-1] and _sign_changes(c[1]) == 1
        curv = c[2][0] > 0 and c[2][-1] > 0 and _sign_changes(c[2]) == 2
        ortho = float(np.max(np.abs(c @ c.T - np.eye(3))))
        ok &= level and slope and curv and ortho <= 1e-10
        notes.append(f"{curve}: +{'ok' if level else 'X'} -/+{'ok' if slope else 'X'} "
                     f"+/-/+{'ok' if curv else 'X'} orth {ortho:.1e}")
    report(7, "PCA sign patterns", ok, "; ".join(notes))


def test_criterion_08_fit_recovery():
    labels = (Factor("A", "1Y"), Factor("B", "1Y"))
    truth = make_params([0.01, -0.02], [0.05, 0.1], 5.0, corr2(0.6), 4.0, labels)
    t0 = time.perf_counter()
    fitted = fit_group(sample_meta_t(truth, 20_000, seed=1), labels)
    elapsed = time.perf_counter() - t0
    d_rho = abs(fitted.corr[0, 1] - 0.6)
    d_nu = float(np.max(np.abs(fitted.nu - 5.0)))
    d_bar = abs(fitted.nu_bar - 4.0)
    report(8, "fit recovery", d_rho <= 0.03 and d_nu <= 0.5 and d_bar <= 1.0 and elapsed < 60.0,
           f"|d corr| {d_rho:.4f}, max |d nu| {d_nu:.3f}, |d copula dof| {d_bar:.3f}, {elapsed:.1f}s")


def _cdf_quad(x: float, nu: float) -> float:
    with mpmath.workdps(40):
        nu_m = mpmath.mpf(nu)
        c = mpmath.gamma((nu_m + 1) / 2) / (mpmath.sqrt(nu_m * mpmath.pi) * mpmath.gamma(nu_m / 2))
        pdf = lambda t: c * (1 + t * t / nu_m) ** (-(nu_m + 1) / 2)  # noqa: E731
        x_m = mpmath.mpf(x)
        if x_m <= 0:
            return float(mpmath.quad(pdf, [-mpmath.inf, x_m]))
        return float(mpmath.mpf(1) - mpmath.quad(pdf, [x_m, mpmath.inf]))


def test_criterion_09_special_functions():
    xs = np.array([-40.0, -7.5, -3.0, -1.0, -0.2, 0.0, 0.3, 1.7, 4.0, 12.0, 60.0])
    err_cauchy = float(np.max(np.abs(t_cdf(xs, 1.0) - (0.5 + np.arctan(xs) / np.pi))))
    err_quad = max(abs(float(t_cdf(x, nu)) - _cdf_quad(x, nu)) for nu in (2.0, 4.0, 10.0) for x in xs)
    ps = np.concatenate([np.logspace(-12, -1, 23), np.linspace(0.05, 0.95, 19), 1 - np.logspace(-1, -10, 19)])
    rt = 0.0
    for nu in (1.0, 2.0, 3.5, 4.0, 10.0, 50.0):
        rt = max(rt, float(np.max(np.abs(t_cdf(t_quantile(ps, nu), nu) - ps))))
    report(9, "special functions", err_cauchy <= 1e-12 and err_quad <= 1e-12 and rt <= 1e-10,
           f"Cauchy err {err_cauchy:.1e}, quadrature err {err_quad:.1e}, round-trip err {rt:.1e}")


def test_criterion_10_gradient():
    rng = np.random.default_rng(1010)
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(2, 5))
        params = make_params(rng.normal(0, 0.3, d), rng.uniform(0.3, 2.0, d), rng.uniform(1.5, 20.0, d),
                             random_corr(rng, d), float(rng.uniform(1.5, 30.0)))
        s = params.mu + params.sigma * rng.standard_t(4, size=d)
        g = meta_t_log_density(params, s, want_gradient=True).gradient
        h = 1e-5 * params.sigma
        fd = np.array([(log_density(params, s + h[i] * e) - log_density(params, s - h[i] * e)) / (2 * h[i])
                       for i, e in enumerate(np.eye(d))])
        scale = np.maximum(np.abs(fd), 1.0 / params.sigma)
        worst = max(worst, float(np.max(np.abs(g - fd) / scale)))
    report(10, "analytic gradient vs central differences", worst <= 1e-5, f"max relative error {worst:.1e}")


def _two_factor_case():
    labels = (Factor("A", "1Y"), Factor("B", "1Y"))
    params = make_params(0.0, [1.0, 1.5], 4.0, corr2(0.7), 5.0, labels)
    p = PortfolioExposure("P", (), labels, np.array([1.0, 1.0]), BETA_KINDS[0])
    return labels, params, p


def _classify(labels, params, p, first, second):
    set_s = ScenarioSet("S", labels, tuple(first))
    set_t = ScenarioSet("T", labels, tuple(second))
    rs, rt = score_portfolio(p, set_s, params), score_portfolio(p, set_t, params)
    return plausibility_comparison(p, rs, rt, params)


def test_criterion_11_tradeoff_classifier():
    labels, params, p = _two_factor_case()
    s0 = np.array([-3.0, -1.0])
    rescaled = _classify(labels, params, p, [("S0", s0)], [("S0", s0), ("S0x1.5", 1.5 * s0)])
    # an off-axis driver versus the most plausible point on a slightly harsher loss level
    skew = np.array([-6.0, 2.0])
    best = exact_optimal(params, LossConstraint(p.exposure, 1.1 * float(p.exposure @ skew))).scenario
    aligned = _classify(labels, params, p, [("S0", skew)], [("S0", skew), ("S1", best)])
    ok = (rescaled["classification"] == "higher_loss_lower_plausibility"
          and aligned["classification"] == "higher_loss_higher_plausibility")
    report(11, "trade-off classifier", ok,
           f"rescaled -> {rescaled['classification']}, aligned -> {aligned['classification']}")
