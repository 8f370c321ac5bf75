"""Plausibility scores for sets of hypothetical stress scenarios.

Each scenario set is judged, portfolio by portfolio, against the most
plausible scenario that produces the same loss under a fitted meta-t
distribution of the risk-factor returns.
"""

__version__ = "0.1.0"

from .distributions import (  # noqa: E402
    MetaTParams,
    StudentMarginal,
    fit_copula,
    fit_group,
    fit_marginal,
    meta_t_log_density,
    sample_meta_t,
    t_cdf,
    t_quantile,
)
from .marketdata import CurveSeries, Factor, ReturnMatrix, ingest_curve, to_returns  # noqa: E402
from .optimizer import (  # noqa: E402
    LossConstraint,
    OptimalScenarioResult,
    SolverSettings,
    approximate_optimal,
    brute_force_optimal,
    elliptical_optimal,
    exact_optimal,
)
from .portfolios import BondSpec, PortfolioExposure, bond_duration, build_universe, involved_factors  # noqa: E402
from .scenarios import (  # noqa: E402
    PcaBasis,
    ScenarioSet,
    build_base_set,
    build_enriched_set,
    load_scenario_set,
    pca_per_curve,
)
from .scoring import (  # noqa: E402
    ScenarioAggregate,
    ScoreRecord,
    aggregate_by_scenario,
    plausibility_comparison,
    portfolio_curves,
    score_portfolio,
    score_universe,
    select_driver,
)
