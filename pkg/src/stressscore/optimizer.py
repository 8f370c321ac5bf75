"""Most plausible scenario at a given loss level.

All solvers maximise the meta-t density subject to the linear loss cap
``P @ s <= q``.  The exact solver works in standardised coordinates
``z = (s - mu) / sigma``, where the cap reads ``(sigma * P) @ z <= q - P @ mu``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .distributions.metat import MetaTParams, log_density, meta_t_log_density
from .distributions.special import t_to_t
from .errors import SolverError, ValidationError

log = logging.getLogger(__name__)

METHODS = ("elliptical_closed_form", "meta_t_approximate", "exact_numerical", "brute_force")


@dataclass(frozen=True)
class SolverSettings:
    tol_grad: float = 1e-8  # projected gradient norm, standardised coordinates
    tol_con: float = 1e-10
    max_iters: int = 500  # per start
    armijo: float = 1e-4
    shrink: float = 0.5
    max_halvings: int = 60
    box_halfwidth_sigmas: float = 8.0
    grid_points: int = 201
    grid_refinements: int = 1

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class LossConstraint:
    """``exposure @ s <= q``."""

    exposure: np.ndarray
    q: float

    def __post_init__(self):
        e = np.array(self.exposure, dtype=float)
        if e.ndim != 1 or not np.any(e != 0.0):
            raise ValidationError("loss constraint needs a non-zero exposure vector")
        object.__setattr__(self, "exposure", e)
        object.__setattr__(self, "q", float(self.q))


@dataclass
class OptimalScenarioResult:
    scenario: np.ndarray
    log_density: float
    constraint_value: float
    method: str
    converged: bool
    iterations: int
    diagnostics: dict = field(default_factory=dict)


def elliptical_optimal(P, q: float, corr) -> np.ndarray:
    """Closed-form maximiser of a centred elliptical density on ``P @ s <= q``."""
    P = np.asarray(P, dtype=float)
    corr = np.asarray(corr, dtype=float)
    sp = corr @ P
    denom = float(P @ sp)
    if not denom > 0:
        raise SolverError(f"P' corr P = {denom} is not positive; correlation matrix corrupted?")
    return q * sp / denom


def _check(params: MetaTParams, c: LossConstraint):
    if c.exposure.shape != (params.dim,):
        raise ValidationError(f"exposure has {c.exposure.size} entries, parameters have {params.dim} factors")


def _standardised(params: MetaTParams, c: LossConstraint):
    a = params.sigma * c.exposure
    b = c.q - float(c.exposure @ params.mu)
    return a, b


def approximate_optimal(params: MetaTParams, c: LossConstraint) -> OptimalScenarioResult:
    """Elliptical solution in copula space mapped through the marginal quantiles.

    The resulting point generally violates the loss cap when the marginal and
    copula dof differ; the violation is reported, never corrected.
    """
    _check(params, c)
    a, b = _standardised(params, c)
    z_ell = elliptical_optimal(a, b, params.corr)
    z = t_to_t(z_ell, params.nu_bar, params.nu)
    bad = np.flatnonzero(~np.isfinite(z))
    if bad.size:
        i = int(bad[0])
        raise SolverError(
            f"quantile composition overflow at component {i} ({params.factor_labels[i]}): "
            f"copula-space value {z_ell[i]:.6g}"
        )
    s = params.mu + params.sigma * z
    value = float(c.exposure @ s)
    return OptimalScenarioResult(
        s, float(log_density(params, s)), value, "meta_t_approximate", True, 0,
        {"constraint_violation": value - c.q, "elliptical_point": (params.mu + params.sigma * z_ell).tolist()},
    )


def _ascend(params: MetaTParams, a, b, z0, settings: SolverSettings, c: LossConstraint):
    """Projected-gradient ascent on the hyperplane ``a @ z = b``."""
    aa = float(a @ a)
    mu, sigma = params.mu, params.sigma

    def proj(z):
        return z - a * ((float(a @ z) - b) / aa)

    def evaluate(z):
        ev = meta_t_log_density(params, mu + sigma * z, want_gradient=True)
        g = sigma * ev.gradient
        return ev.log_density, g - a * (float(a @ g) / aa)

    z = proj(np.asarray(z0, dtype=float))
    f, pg = evaluate(z)
    if not math.isfinite(f):
        return z, f, False, 0, "non-finite density at start"
    step = 1.0
    status = "max_iters"
    it = 0
    for it in range(settings.max_iters + 1):
        gn = float(np.linalg.norm(pg))
        s = mu + sigma * z
        resid = abs(float(c.exposure @ s) - c.q)
        if gn < settings.tol_grad and resid < settings.tol_con:
            return z, f, True, it, "converged"
        if it == settings.max_iters:
            break
        slack = 1e-12 * (1.0 + abs(f))
        t = step
        accepted = False
        for _ in range(settings.max_halvings + 1):
            z_new = proj(z + t * pg)
            f_new, pg_new = evaluate(z_new)
            if math.isfinite(f_new) and f_new >= f + settings.armijo * t * gn * gn - slack:
                accepted = True
                break
            t *= settings.shrink
        if not accepted:
            status = "line search failed"
            break
        dz = z_new - z
        dg = pg_new - pg
        curv = float(dz @ dg)
        # Barzilai-Borwein step for the next iteration (secant on the gradient)
        step = float(dz @ dz) / -curv if curv < 0 else 2.0 * t
        step = min(max(step, 1e-12), 1e12)
        z, f, pg = z_new, f_new, pg_new
    return z, f, False, it, status


def _uphill_probe(params: MetaTParams, a, z, f, step: float = 1e-2):
    """Best point ``z +/- step * t`` over a tangent basis of the hyperplane, if it beats ``f``.

    A zero projected gradient can sit on a saddle (the density is not concave),
    typically on a symmetry axis that every start shares.
    """
    basis = np.linalg.svd(a[None, :])[2][1:]
    best, best_f = None, f + 1e-12 * (1.0 + abs(f))
    for t in basis:
        for sgn in (1.0, -1.0):
            zt = z + sgn * step * t
            ft = float(log_density(params, params.mu + params.sigma * zt))
            if ft > best_f:
                best, best_f = zt, ft
    return best


def exact_optimal(params: MetaTParams, c: LossConstraint, settings: SolverSettings = SolverSettings(),
                  driver=None) -> OptimalScenarioResult:
    """Numerical maximiser of the meta-t density on ``P @ s <= q``.

    If the centre ``mu`` is feasible it is returned directly.  Otherwise the
    optimum lies on ``P @ s = q``; projected-gradient ascent is run from the
    approximate solution, from ``driver`` (if given) and from the projection of
    ``mu``, and the best converged end point is kept.  That point is then
    probed along the hyperplane and the ascent restarted if it was a saddle.
    """
    _check(params, c)
    a, b = _standardised(params, c)
    if b >= 0.0:
        s = params.mu.copy()
        return OptimalScenarioResult(
            s, float(log_density(params, s)), float(c.exposure @ s), "exact_numerical", True, 0,
            {"case": "mode_feasible"},
        )

    starts = []
    try:
        z_ell = elliptical_optimal(a, b, params.corr)
        z_app = t_to_t(z_ell, params.nu_bar, params.nu)
        if np.all(np.isfinite(z_app)):
            starts.append(("approximate", z_app))
    except SolverError:
        pass
    if driver is not None:
        z_drv = (np.asarray(driver, dtype=float) - params.mu) / params.sigma
        if np.all(np.isfinite(z_drv)):
            starts.append(("driver", z_drv))
    starts.append(("mode_projection", np.zeros(params.dim)))

    runs = []
    seen = []
    for name, z0 in starts:
        if any(np.array_equal(z0, other) for other in seen):
            continue
        seen.append(z0)
        z, f, ok, iters, status = _ascend(params, a, b, z0, settings, c)
        runs.append({"start": name, "z": z, "log_density": f, "converged": ok, "iterations": iters, "status": status})

    finite = [r for r in runs if math.isfinite(r["log_density"])]
    if not finite:
        raise SolverError("density is not finite at any start point")
    best = max(finite, key=lambda r: (r["converged"], r["log_density"]))
    for _ in range(5):
        if not best["converged"]:
            break
        z0 = _uphill_probe(params, a, best["z"], best["log_density"])
        if z0 is None:
            break
        z, f, ok, iters, status = _ascend(params, a, b, z0, settings, c)
        run = {"start": "saddle_escape", "z": z, "log_density": f, "converged": ok, "iterations": iters,
               "status": status}
        runs.append(run)
        if not (ok and f > best["log_density"]):
            break
        best = run
    s = params.mu + params.sigma * best["z"]
    s = s + c.exposure * ((c.q - float(c.exposure @ s)) / float(c.exposure @ c.exposure))
    return OptimalScenarioResult(
        s, float(log_density(params, s)), float(c.exposure @ s), "exact_numerical",
        best["converged"], best["iterations"],
        {
            "case": "constraint_active",
            "chosen_start": best["start"],
            "starts": [{k: v for k, v in r.items() if k != "z"} for r in runs],
            "settings": settings.to_dict(),
        },
    )


def brute_force_optimal(params: MetaTParams, c: LossConstraint, box_halfwidth_sigmas: float = 8.0,
                        grid_points: int = 201, refinements: int = 1) -> OptimalScenarioResult:
    """Exhaustive grid search over ``mu +/- k sigma`` restricted to feasible points.

    Test oracle for dimensions up to 3.  Each refinement re-grids the cell
    neighbourhood of the incumbent at the same point count.
    """
    _check(params, c)
    d = params.dim
    if d > 3:
        raise SolverError(f"brute force limited to 3 dimensions, got {d}")
    lo = params.mu - box_halfwidth_sigmas * params.sigma
    hi = params.mu + box_halfwidth_sigmas * params.sigma
    best_s, best_f, evaluated = None, -math.inf, 0
    for level in range(refinements + 1):
        axes = [np.linspace(lo[i], hi[i], grid_points) for i in range(d)]
        pts = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
        pts = pts[pts @ c.exposure <= c.q]
        if pts.shape[0] == 0:
            if level == 0:
                raise SolverError("empty feasible grid: enlarge box")
            break
        vals = log_density(params, pts)
        evaluated += pts.shape[0]
        k = int(np.argmax(vals))
        if vals[k] > best_f:
            best_s, best_f = pts[k].copy(), float(vals[k])
        cell = (hi - lo) / (grid_points - 1)
        lo, hi = best_s - cell, best_s + cell
    return OptimalScenarioResult(
        best_s, best_f, float(c.exposure @ best_s), "brute_force", True, 0,
        {"evaluated_points": evaluated, "final_cell": cell.tolist()},
    )
