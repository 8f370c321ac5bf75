from .fitting import CopulaFit, FitCache, FitSettings, fit_copula, fit_group, fit_marginal
from .metat import (
    DensityEvaluation,
    MetaTParams,
    StudentMarginal,
    elliptical_params,
    log_density,
    meta_t_log_density,
    sample_meta_t,
)
from .special import t_cdf, t_logpdf, t_quantile, t_sf, t_to_t

__all__ = [
    "CopulaFit", "DensityEvaluation", "FitCache", "FitSettings", "MetaTParams", "StudentMarginal",
    "elliptical_params", "fit_copula", "fit_group", "fit_marginal", "log_density",
    "meta_t_log_density", "sample_meta_t", "t_cdf", "t_logpdf", "t_quantile", "t_sf", "t_to_t",
]
