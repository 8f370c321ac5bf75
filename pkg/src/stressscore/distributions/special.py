"""Standard Student-t CDF, quantile and log-density.

The CDF is evaluated through the regularized incomplete beta function
(modified Lentz continued fraction), working on the upper tail so that far
tail probabilities keep full relative precision.  The quantile is a safeguarded
Newton iteration on the log tail probability.  Kernels are compiled with numba
and exposed as ufuncs, so they broadcast over ``x`` and ``nu``.
"""

import math

import numba as nb
import numpy as np

_TINY = 1e-300
_CF_EPS = 1e-16
_CF_MAX_ITER = 2000
_LOG_PI = math.log(math.pi)


@nb.njit(cache=True)
def _betacf(a, b, x):
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            break
    return h


@nb.njit(cache=True)
def _ibeta(a, b, x, y):
    # I_x(a, b) with y = 1 - x passed separately to avoid cancellation.
    if x <= 0.0:
        return 0.0
    if y <= 0.0:
        return 1.0
    lbt = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
           + a * math.log(x) + b * math.log(y))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(lbt) * _betacf(a, b, x) / a
    return 1.0 - math.exp(lbt) * _betacf(b, a, y) / b


@nb.njit(cache=True)
def _tail(t, nu):
    # P(T > t) for t >= 0.
    if math.isinf(t):
        return 0.0
    if t > 1e100:
        # t * t overflows; x = nu / (nu + t^2) is carried in log space
        a = 0.5 * nu
        log_u2 = math.log(nu) - 2.0 * math.log(t)
        log_x = log_u2 - math.log1p(math.exp(log_u2))
        log_y = -math.log1p(math.exp(log_u2))
        lbt = math.lgamma(a + 0.5) - math.lgamma(a) - math.lgamma(0.5) + a * log_x + 0.5 * log_y
        return 0.5 * math.exp(lbt) * _betacf(a, 0.5, math.exp(log_x)) / a
    t2 = t * t
    return 0.5 * _ibeta(0.5 * nu, 0.5, nu / (nu + t2), t2 / (nu + t2))


@nb.njit(cache=True)
def _logpdf(t, nu):
    at = abs(t)
    if at > 1e150:
        core = 2.0 * math.log(at) - math.log(nu)
    else:
        core = math.log1p(t * t / nu)
    return (math.lgamma(0.5 * (nu + 1.0)) - math.lgamma(0.5 * nu)
            - 0.5 * (math.log(nu) + _LOG_PI) - 0.5 * (nu + 1.0) * core)


@nb.njit(cache=True)
def _tail_inv(q, nu):
    # Solve P(T > x) = q for x >= 0, q in (0, 1/2].
    if q >= 0.5:
        return 0.0
    if q <= 0.0:
        return math.inf
    lo = 0.0
    hi = 1.0
    for _ in range(4000):
        if _tail(hi, nu) <= q:
            break
        lo = hi
        hi *= 2.0
        if math.isinf(hi):
            return math.inf
    x = 0.5 * (lo + hi) if lo > 0.0 else 0.5 * hi
    log_q = math.log(q)
    for _ in range(300):
        tx = _tail(x, nu)
        if tx == q:
            return x
        if tx > q:
            lo = x
        else:
            hi = x
        if tx > 0.0:
            log_tx = math.log(tx)
            x_new = x + (log_tx - log_q) * math.exp(log_tx - _logpdf(x, nu))
        else:
            x_new = -1.0
        if not (lo < x_new < hi):
            if lo > 0.0 and hi > 4.0 * lo:
                x_new = math.sqrt(lo * hi)
            else:
                x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 4e-16 * x or hi - lo <= 4e-16 * hi:
            return x_new
        x = x_new
    return x


@nb.vectorize(["float64(float64, float64)"], cache=True)
def _cdf_ufunc(t, nu):
    if math.isnan(t):
        return math.nan
    if t >= 0.0:
        return 1.0 - _tail(t, nu)
    return _tail(-t, nu)


@nb.vectorize(["float64(float64, float64)"], cache=True)
def _sf_ufunc(t, nu):
    if math.isnan(t):
        return math.nan
    if t >= 0.0:
        return _tail(t, nu)
    return 1.0 - _tail(-t, nu)


@nb.vectorize(["float64(float64, float64)"], cache=True)
def _quantile_ufunc(p, nu):
    if p < 0.5:
        return -_tail_inv(p, nu)
    return _tail_inv(1.0 - p, nu)


@nb.vectorize(["float64(float64, float64)"], cache=True)
def _logpdf_ufunc(t, nu):
    return _logpdf(t, nu)


@nb.vectorize(["float64(float64, float64, float64)"], cache=True)
def _t_to_t_ufunc(z, nu_from, nu_to):
    if nu_from == nu_to or z == 0.0 or math.isnan(z):
        return z
    x = _tail_inv(_tail(abs(z), nu_from), nu_to)
    return x if z > 0.0 else -x


def _check_nu(nu):
    nu = np.asarray(nu, dtype=float)
    if not np.all(nu > 0):
        raise ValueError(f"degrees of freedom must be positive, got {nu}")
    return nu


def t_cdf(x, nu):
    """CDF of the standard Student-t with ``nu`` degrees of freedom.

    Infinite ``x`` maps to 0 or 1 by sign.
    """
    return _cdf_ufunc(np.asarray(x, dtype=float), _check_nu(nu))


def t_sf(x, nu):
    """Survival function ``1 - t_cdf(x, nu)`` without cancellation."""
    return _sf_ufunc(np.asarray(x, dtype=float), _check_nu(nu))


def t_quantile(p, nu):
    """Inverse of :func:`t_cdf`; ``p`` must lie strictly inside (0, 1)."""
    p = np.asarray(p, dtype=float)
    if not np.all((p > 0.0) & (p < 1.0)):
        raise ValueError("probabilities must lie strictly between 0 and 1")
    return _quantile_ufunc(p, _check_nu(nu))


def t_logpdf(x, nu):
    """Log-density of the standard Student-t."""
    return _logpdf_ufunc(np.asarray(x, dtype=float), _check_nu(nu))


def t_to_t(z, nu_from, nu_to):
    """Map ``z`` through ``T_{nu_to}^{-1}(T_{nu_from}(z))``.

    Evaluated via tail probabilities, so the composition keeps its precision
    far into either tail.  Returns ``z`` unchanged when the two dof agree.
    """
    return _t_to_t_ufunc(np.asarray(z, dtype=float), _check_nu(nu_from), _check_nu(nu_to))
