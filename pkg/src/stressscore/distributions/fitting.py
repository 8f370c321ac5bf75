"""Maximum-likelihood fitting of Student-t marginals and the t-copula.

Marginals: profile likelihood over the dof on a log-spaced grid, refined by
golden-section search, with location/scale solved by Newton steps (EM steps
as a fallback where the Hessian is not negative definite).

Copula: correlation by Kendall's tau inversion ``sin(pi * tau / 2)`` repaired
to positive definite if needed, copula dof by 1-D profile likelihood on the
pseudo-observations implied by the fitted marginals.
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.stats import kendalltau

from ..errors import FitError
from ..marketdata import Factor, ReturnMatrix
from .metat import MIN_CORR_EIGENVALUE, MetaTParams, StudentMarginal
from .special import t_logpdf, t_to_t

log = logging.getLogger(__name__)

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class FitSettings:
    min_observations: int = 250
    marginal_nu_bounds: tuple[float, float] = (0.5, 50.0)
    marginal_grid_points: int = 20
    copula_nu_bounds: tuple[float, float] = (1.0, 100.0)
    copula_grid_points: int = 12
    golden_tol: float = 1e-4  # on log(nu)
    max_newton_iter: int = 200
    eig_clip: float = 1e-8

    def to_dict(self) -> dict:
        return {
            "min_observations": self.min_observations,
            "marginal_nu_bounds": list(self.marginal_nu_bounds),
            "marginal_grid_points": self.marginal_grid_points,
            "copula_nu_bounds": list(self.copula_nu_bounds),
            "copula_grid_points": self.copula_grid_points,
            "golden_tol": self.golden_tol,
            "max_newton_iter": self.max_newton_iter,
            "eig_clip": self.eig_clip,
        }


def _golden_max(f, a: float, b: float, tol: float, fa_cache: dict):
    """Maximise ``f`` on ``[a, b]``; evaluations are memoised in ``fa_cache``."""

    def ev(x):
        if x not in fa_cache:
            fa_cache[x] = f(x)
        return fa_cache[x]

    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = ev(c), ev(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = ev(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = ev(d)
    return max(fa_cache.items(), key=lambda kv: kv[1])


def _profile_max(f, lo: float, hi: float, n_grid: int, tol: float):
    """Grid then golden-section maximisation of ``f`` over log(nu) in ``[log lo, log hi]``.

    Returns the maximising log(nu), the value there and the evaluation count.
    """
    cache: dict[float, float] = {}
    grid = np.linspace(math.log(lo), math.log(hi), n_grid)
    for g in grid:
        cache[float(g)] = f(float(g))
    k = int(np.argmax([cache[float(g)] for g in grid]))
    a = float(grid[max(k - 1, 0)])
    b = float(grid[min(k + 1, n_grid - 1)])
    best, val = _golden_max(f, a, b, tol, cache)
    return best, val, len(cache)


def _t_loglik(x, mu, sigma, nu):
    return float(np.sum(t_logpdf((x - mu) / sigma, nu))) - x.size * math.log(sigma)


def _fit_location_scale(x, nu, mu, sigma, max_iter):
    """Maximise the t log-likelihood over (mu, log sigma) at fixed ``nu``."""
    n = x.size
    ll = _t_loglik(x, mu, sigma, nu)
    for it in range(max_iter):
        z = (x - mu) / sigma
        w = (nu + 1.0) / (nu + z * z)
        g = np.array([np.sum(w * z) / sigma, np.sum(w * z * z) - n])
        k = 2.0 * w * w / (nu + 1.0)
        h_mm = -np.sum(w - k * z * z) / sigma**2
        h_me = -np.sum(2.0 * w * z - k * z**3) / sigma
        h_ee = -np.sum(2.0 * w * z * z - k * z**4)
        hess = np.array([[h_mm, h_me], [h_me, h_ee]])
        moved = False
        if h_mm < 0 and np.linalg.det(hess) > 0:
            step = -np.linalg.solve(hess, g)
            t = 1.0
            for _ in range(40):
                mu_new = mu + t * step[0]
                sig_new = sigma * math.exp(t * step[1])
                ll_new = _t_loglik(x, mu_new, sig_new, nu)
                if ll_new >= ll - 1e-12 * abs(ll):
                    moved = True
                    break
                t *= 0.5
        if not moved:
            # EM update, monotone in the likelihood
            mu_new = float(np.sum(w * x) / np.sum(w))
            sig_new = math.sqrt(float(np.sum(w * (x - mu_new) ** 2)) / n)
            ll_new = _t_loglik(x, mu_new, sig_new, nu)
            step = np.array([mu_new - mu, math.log(sig_new / sigma)])
            t = 1.0
        done = abs(t * step[0]) <= 1e-10 * sigma and abs(t * step[1]) <= 1e-10
        mu, sigma, ll = mu_new, sig_new, ll_new
        if done:
            return mu, sigma, ll, it + 1
    raise FitError(
        f"location/scale optimisation did not converge in {max_iter} iterations at nu={nu:.4g}",
        {"nu": nu, "mu": mu, "sigma": sigma, "loglik": ll},
    )


def fit_marginal(sample, settings: FitSettings = FitSettings()) -> StudentMarginal:
    """Maximum-likelihood Student-t fit of one return column."""
    x = np.asarray(sample, dtype=float).ravel()
    x = x[np.isfinite(x)]
    if x.size < settings.min_observations:
        raise FitError(f"{x.size} observations, at least {settings.min_observations} required")
    std = float(np.std(x))
    if std == 0.0 or std <= 1e-14 * max(1.0, abs(float(np.mean(x)))):
        raise FitError("degenerate sample (zero variance)")

    mu0 = float(np.median(x))
    sigma0 = 1.482602218505602 * float(np.median(np.abs(x - mu0)))
    if sigma0 <= 0:
        sigma0 = std
    lo, hi = settings.marginal_nu_bounds
    kurt = float(np.mean((x - x.mean()) ** 4) / std**4) - 3.0
    nu_mom = min(max(4.0 + 6.0 / kurt, lo), hi) if kurt > 0 else hi
    start_ll = _t_loglik(x, mu0, sigma0, nu_mom)

    state = {"mu": mu0, "sigma": sigma0}
    fits = {}
    iters = 0

    def profile(log_nu):
        nonlocal iters
        nu = math.exp(log_nu)
        mu, sigma, ll, it = _fit_location_scale(x, nu, state["mu"], state["sigma"], settings.max_newton_iter)
        iters += it
        state["mu"], state["sigma"] = mu, sigma
        fits[log_nu] = (mu, sigma)
        return ll

    best, ll, n_eval = _profile_max(profile, lo, hi, settings.marginal_grid_points, settings.golden_tol)
    mu, sigma = fits[best]
    nu = math.exp(best)
    diagnostics = {
        "loglik": ll,
        "start_loglik": start_ll,
        "start": {"mu": mu0, "sigma": sigma0, "nu": nu_mom},
        "n_obs": int(x.size),
        "profile_evaluations": n_eval,
        "newton_iterations": iters,
        "nu_at_bound": bool(nu >= hi * (1 - 1e-3) or nu <= lo * (1 + 1e-3)),
    }
    if ll < start_ll:
        raise FitError("fitted likelihood below starting point", diagnostics)
    return StudentMarginal(float(mu), float(sigma), nu, diagnostics)


class CopulaFit(NamedTuple):
    corr: np.ndarray
    nu_bar: float
    diagnostics: dict


def kendall_correlation(u: np.ndarray) -> np.ndarray:
    """Pairwise Kendall tau mapped to linear correlation by ``sin(pi tau / 2)``."""
    d = u.shape[1]
    corr = np.eye(d)
    for i in range(d):
        for j in range(i + 1, d):
            tau = kendalltau(u[:, i], u[:, j]).statistic
            corr[i, j] = corr[j, i] = math.sin(0.5 * math.pi * tau)
    return corr


def nearest_correlation(corr: np.ndarray, clip: float = 1e-8, max_iter: int = 100) -> tuple[np.ndarray, int]:
    """Clip eigenvalues at ``clip`` and rescale to unit diagonal until positive definite."""
    c = 0.5 * (corr + corr.T)
    for it in range(max_iter + 1):
        if np.linalg.eigvalsh(c)[0] > MIN_CORR_EIGENVALUE:
            return c, it
        vals, vecs = np.linalg.eigh(c)
        c = (vecs * np.maximum(vals, clip)) @ vecs.T
        dinv = 1.0 / np.sqrt(np.diag(c))
        c = c * dinv[:, None] * dinv[None, :]
        c = 0.5 * (c + c.T)
        np.fill_diagonal(c, 1.0)
    raise FitError("projection to a positive-definite correlation matrix failed")


def t_copula_loglik(z: np.ndarray, nu: np.ndarray, corr: np.ndarray, nu_bar: float) -> float:
    """Log-likelihood of the t-copula at the standardised marginal values ``z``."""
    d = corr.shape[0]
    x = t_to_t(z, nu, nu_bar)
    inv = np.linalg.inv(corr)
    maha = np.einsum("ij,jk,ik->i", x, inv, x)
    const = (math.lgamma(0.5 * (nu_bar + d)) - math.lgamma(0.5 * nu_bar)
             - 0.5 * d * math.log(nu_bar * math.pi) - 0.5 * np.linalg.slogdet(corr)[1])
    joint = const - 0.5 * (nu_bar + d) * np.log1p(maha / nu_bar)
    return float(np.sum(joint) - np.sum(t_logpdf(x, nu_bar)))


def fit_copula(sample, marginals: Sequence[StudentMarginal], settings: FitSettings = FitSettings()) -> CopulaFit:
    """Fit the t-copula correlation and dof given fitted marginals."""
    rows = sample.rows if isinstance(sample, ReturnMatrix) else np.asarray(sample, dtype=float)
    if rows.ndim == 1:
        rows = rows[:, None]
    n, d = rows.shape
    if len(marginals) != d:
        raise FitError(f"{len(marginals)} marginals for {d} columns")
    if d == 1:
        return CopulaFit(np.eye(1), float(marginals[0].nu), {"copula_trivial": True})
    if n < d + 2:
        raise FitError(f"{n} observations, copula fit needs at least {d + 2}")

    mu = np.array([m.mu for m in marginals])
    sigma = np.array([m.sigma for m in marginals])
    nu = np.array([m.nu for m in marginals])
    z = (rows - mu) / sigma

    raw = kendall_correlation(z)
    corr, repairs = nearest_correlation(raw, settings.eig_clip)
    lo, hi = settings.copula_nu_bounds
    best, ll, n_eval = _profile_max(
        lambda g: t_copula_loglik(z, nu, corr, math.exp(g)),
        lo, hi, settings.copula_grid_points, settings.golden_tol,
    )
    nu_bar = math.exp(best)
    near_gaussian = nu_bar >= hi * (1 - 1e-3)
    if near_gaussian:
        log.warning("copula dof at upper bound %.1f: near-Gaussian copula", hi)
    diagnostics = {
        "copula_trivial": False,
        "loglik": ll,
        "n_obs": int(n),
        "profile_evaluations": n_eval,
        "pd_repairs": repairs,
        "near_gaussian_copula": bool(near_gaussian),
        "nu_bar_at_lower_bound": bool(nu_bar <= lo * (1 + 1e-3)),
    }
    return CopulaFit(corr, nu_bar, diagnostics)


class FitCache:
    """Write-once caches of per-factor marginals and per-group parameters.

    Both caches are keyed on factor labels; a key is fitted at most once so
    that scenario sets scored against the same returns share distributions.
    """

    def __init__(self, returns: ReturnMatrix, settings: FitSettings = FitSettings()):
        self.returns = returns
        self.settings = settings
        self._marginals: dict[Factor, StudentMarginal] = {}
        self._groups: dict[tuple[Factor, ...], MetaTParams] = {}
        self._lock = threading.Lock()

    def marginal(self, label) -> StudentMarginal:
        label = Factor(*label)
        with self._lock:
            cached = self._marginals.get(label)
        if cached is not None:
            return cached
        try:
            fitted = fit_marginal(self.returns.column(label), self.settings)
        except FitError as exc:
            raise FitError(f"marginal fit failed for {label}: {exc}", exc.diagnostics) from exc
        with self._lock:
            return self._marginals.setdefault(label, fitted)

    def group(self, labels: Sequence) -> MetaTParams:
        key = tuple(Factor(*f) for f in labels)
        with self._lock:
            cached = self._groups.get(key)
        if cached is not None:
            return cached
        params = fit_group(self.returns, key, self.settings, cache=self)
        with self._lock:
            return self._groups.setdefault(key, params)

    def seed(self, params_list) -> None:
        """Pre-load fitted groups (e.g. read back from a parameter document)."""
        with self._lock:
            for params in params_list:
                self._groups.setdefault(params.factor_labels, params)
                for lab, m in zip(params.factor_labels, params.marginals):
                    self._marginals.setdefault(lab, m)

    @property
    def groups(self) -> dict:
        return dict(self._groups)


def fit_group(returns: ReturnMatrix, factor_subset: Sequence, settings: FitSettings = FitSettings(),
              cache: FitCache | None = None) -> MetaTParams:
    """Fit a meta-t on the columns ``factor_subset`` of ``returns``."""
    labels = tuple(Factor(*f) for f in factor_subset)
    if not labels:
        raise FitError("empty factor subset")
    if len(set(labels)) != len(labels):
        raise FitError("duplicate factors in subset")
    for lab in labels:
        if lab not in returns.factor_labels:
            raise FitError(f"unknown factor {lab}")
    if cache is None:
        marginals = tuple(fit_marginal(returns.column(lab), settings) for lab in labels)
    else:
        marginals = tuple(cache.marginal(lab) for lab in labels)
    sub = returns.subset(labels)
    cop = fit_copula(sub, marginals, settings)
    diag = dict(cop.diagnostics)
    diag["window"] = list(returns.window)
    return MetaTParams(marginals, cop.corr, cop.nu_bar, labels, diag)
