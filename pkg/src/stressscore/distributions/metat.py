"""Meta-t distribution: Student-t copula with Student-t marginals."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from ..errors import ValidationError
from ..marketdata import Factor, ReturnMatrix
from .special import t_logpdf, t_to_t

PARAMS_FORMAT = "stressscore.meta_t_params"
PARAMS_VERSION = 1
MIN_CORR_EIGENVALUE = 1e-10


@dataclass(frozen=True)
class StudentMarginal:
    """Location-scale Student-t: ``mu + sigma * T_nu``."""

    mu: float
    sigma: float
    nu: float
    diagnostics: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValidationError(f"marginal scale must be positive, got {self.sigma}")
        if not (self.nu > 0):
            raise ValidationError(f"marginal dof must be positive, got {self.nu}")
        if not math.isfinite(self.mu):
            raise ValidationError("marginal location must be finite")

    def logpdf(self, x):
        return t_logpdf((np.asarray(x, dtype=float) - self.mu) / self.sigma, self.nu) - math.log(self.sigma)

    def loglik(self, sample) -> float:
        return float(np.sum(self.logpdf(sample)))


class DensityEvaluation(NamedTuple):
    log_density: float
    gradient: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class MetaTParams:
    """Fitted meta-t parameters for a group of risk factors.

    ``corr`` is the copula correlation matrix and ``nu_bar`` the copula dof.
    """

    marginals: tuple[StudentMarginal, ...]
    corr: np.ndarray
    nu_bar: float
    factor_labels: tuple[Factor, ...]
    diagnostics: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        marginals = tuple(self.marginals)
        labels = tuple(Factor(*f) for f in self.factor_labels)
        corr = np.array(self.corr, dtype=float)
        d = len(marginals)
        if corr.shape != (d, d) or len(labels) != d or d == 0:
            raise ValidationError(
                f"dimension mismatch: {d} marginals, corr {corr.shape}, {len(labels)} labels")
        if not np.allclose(corr, corr.T, rtol=0, atol=1e-12):
            raise ValidationError("correlation matrix is not symmetric")
        if not np.allclose(np.diag(corr), 1.0, rtol=0, atol=1e-12):
            raise ValidationError("correlation matrix must have unit diagonal")
        corr = 0.5 * (corr + corr.T)
        np.fill_diagonal(corr, 1.0)
        eig = np.linalg.eigvalsh(corr)
        if eig[0] <= MIN_CORR_EIGENVALUE:
            raise ValidationError(f"correlation matrix not positive definite (min eigenvalue {eig[0]:.3e})")
        if not (self.nu_bar > 0):
            raise ValidationError(f"copula dof must be positive, got {self.nu_bar}")
        corr.setflags(write=False)
        object.__setattr__(self, "marginals", marginals)
        object.__setattr__(self, "factor_labels", labels)
        object.__setattr__(self, "corr", corr)
        object.__setattr__(self, "nu_bar", float(self.nu_bar))
        # cached quantities for density evaluation
        inv = np.linalg.inv(corr)
        object.__setattr__(self, "_corr_inv", 0.5 * (inv + inv.T))
        object.__setattr__(self, "_logdet", float(np.linalg.slogdet(corr)[1]))
        object.__setattr__(self, "_chol", np.linalg.cholesky(corr))
        for name in ("mu", "sigma", "nu"):
            arr = np.array([getattr(m, name) for m in marginals], dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, f"_{name}", arr)

    @property
    def dim(self) -> int:
        return len(self.marginals)

    @property
    def mu(self) -> np.ndarray:
        return self._mu

    @property
    def sigma(self) -> np.ndarray:
        return self._sigma

    @property
    def nu(self) -> np.ndarray:
        return self._nu

    @property
    def corr_inv(self) -> np.ndarray:
        return self._corr_inv

    def __eq__(self, other):
        if not isinstance(other, MetaTParams):
            return NotImplemented
        return (self.marginals == other.marginals and self.factor_labels == other.factor_labels
                and self.nu_bar == other.nu_bar and np.array_equal(self.corr, other.corr))

    __hash__ = None

    def subset(self, labels: Sequence) -> "MetaTParams":
        """Parameters of the sub-vector ``labels`` (a t-copula margin is a t-copula)."""
        idx = [self.factor_labels.index(Factor(*lab)) for lab in labels]
        return MetaTParams(
            tuple(self.marginals[i] for i in idx),
            self.corr[np.ix_(idx, idx)],
            self.nu_bar,
            tuple(self.factor_labels[i] for i in idx),
            dict(self.diagnostics),
        )

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "format": PARAMS_FORMAT,
            "version": PARAMS_VERSION,
            "factor_labels": [str(f) for f in self.factor_labels],
            "mu": [float(m.mu) for m in self.marginals],
            "sigma": [float(m.sigma) for m in self.marginals],
            "nu": [float(m.nu) for m in self.marginals],
            "corr": [float(v) for v in self.corr.ravel()],
            "nu_bar": self.nu_bar,
            "diagnostics": {
                "marginals": [m.diagnostics for m in self.marginals],
                "copula": self.diagnostics,
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MetaTParams":
        if doc.get("format") != PARAMS_FORMAT:
            raise ValidationError(f"not a meta-t parameter document: format={doc.get('format')!r}")
        if doc.get("version") != PARAMS_VERSION:
            raise ValidationError(f"unsupported parameter document version {doc.get('version')!r}")
        d = len(doc["factor_labels"])
        diag = doc.get("diagnostics", {})
        mdiag = diag.get("marginals") or [{}] * d
        marginals = tuple(
            StudentMarginal(mu, s, nu, dict(md))
            for mu, s, nu, md in zip(doc["mu"], doc["sigma"], doc["nu"], mdiag)
        )
        corr = np.array(doc["corr"], dtype=float).reshape(d, d)
        labels = tuple(Factor.parse(f) for f in doc["factor_labels"])
        return cls(marginals, corr, doc["nu_bar"], labels, dict(diag.get("copula", {})))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "MetaTParams":
        return cls.from_dict(json.loads(text))


def elliptical_params(corr, nu, mu=None, sigma=None, labels=None) -> MetaTParams:
    """Meta-t whose marginal dof all equal the copula dof, i.e. a multivariate t."""
    corr = np.asarray(corr, dtype=float)
    d = corr.shape[0]
    mu = np.zeros(d) if mu is None else np.asarray(mu, dtype=float)
    sigma = np.ones(d) if sigma is None else np.asarray(sigma, dtype=float)
    labels = labels or [Factor("X", f"{i + 1}Y") for i in range(d)]
    marginals = tuple(StudentMarginal(float(m), float(s), float(nu)) for m, s in zip(mu, sigma))
    return MetaTParams(marginals, corr, nu, labels)


def _mvt_logpdf_terms(params: MetaTParams, x: np.ndarray):
    d = params.dim
    nb = params.nu_bar
    y = x @ params.corr_inv
    maha = np.einsum("...i,...i->...", x, y)
    const = (math.lgamma(0.5 * (nb + d)) - math.lgamma(0.5 * nb)
             - 0.5 * d * math.log(nb * math.pi) - 0.5 * params._logdet)
    return const - 0.5 * (nb + d) * np.log1p(maha / nb), maha, y


def log_density(params: MetaTParams, s) -> np.ndarray:
    """Vectorised meta-t log-density; ``s`` has shape ``(..., d)``."""
    s = np.asarray(s, dtype=float)
    if s.shape[-1] != params.dim:
        raise ValidationError(f"scenario has {s.shape[-1]} entries, expected {params.dim}")
    z = (s - params.mu) / params.sigma
    x = t_to_t(z, params.nu, params.nu_bar)
    log_joint, _, _ = _mvt_logpdf_terms(params, x)
    copula = log_joint - np.sum(t_logpdf(x, params.nu_bar), axis=-1)
    marg = np.sum(t_logpdf(z, params.nu), axis=-1) - np.sum(np.log(params.sigma))
    return copula + marg


def meta_t_log_density(params: MetaTParams, s, want_gradient: bool = False) -> DensityEvaluation:
    """Log-density of a single scenario, with the analytic gradient on request.

    The density is the t-copula density at ``x = T_nu_bar^-1(T_nu(z))`` times
    the product of the marginal densities, ``z = (s - mu) / sigma``.
    """
    s = np.asarray(s, dtype=float)
    if s.shape != (params.dim,):
        raise ValidationError(f"scenario shape {s.shape} does not match dimension {params.dim}")
    nb = params.nu_bar
    nu = params.nu
    z = (s - params.mu) / params.sigma
    x = t_to_t(z, nu, nb)
    log_joint, maha, y = _mvt_logpdf_terms(params, x)
    lp_x = t_logpdf(x, nb)
    lp_z = t_logpdf(z, nu)
    value = float(log_joint - lp_x.sum() + lp_z.sum() - np.log(params.sigma).sum())
    if not want_gradient:
        return DensityEvaluation(value)
    dx_dz = np.where(nu == nb, 1.0, np.exp(lp_z - lp_x))
    d_copula_dx = -(nb + params.dim) / (nb + maha) * y + (nb + 1.0) * x / (nb + x * x)
    d_marg_dz = -(nu + 1.0) * z / (nu + z * z)
    grad = (d_copula_dx * dx_dz + d_marg_dz) / params.sigma
    return DensityEvaluation(value, grad)


def sample_meta_t(params: MetaTParams, n: int, seed: int) -> ReturnMatrix:
    """Draw ``n`` scenarios; identical seeds give identical matrices."""
    if n < 1:
        raise ValidationError("sample size must be at least 1")
    rng = np.random.default_rng(seed)
    gauss = rng.standard_normal((n, params.dim)) @ params._chol.T
    w = rng.chisquare(params.nu_bar, size=n) / params.nu_bar
    x = gauss / np.sqrt(w)[:, None]
    z = t_to_t(x, params.nu_bar, params.nu)
    return ReturnMatrix.from_rows(params.factor_labels, params.mu + params.sigma * z)
