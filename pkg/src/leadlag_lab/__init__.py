"""Numerical laboratory for bivariate lead-lag market models.

Simulates continuous-time lead-lag price models (explicit lagged-Brownian
realization and general cross-spectral synthesis), executes simple trading
strategies under frictions (minimal waiting time, proportional transaction
costs), and verifies no-arbitrage machinery empirically: small-ball /
stickiness / sign-pattern properties, spectral tail integrability, and
consistent price systems on scenario trees.
"""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .cps import (
    CpsSolution,
    MinEpsResult,
    ScenarioTree,
    TreeNode,
    TreeStructureError,
    build_tree,
    find_cps,
    min_eps_cps,
    tree_from_csv,
    tree_to_csv,
)
from .experiments import (
    ArbStats,
    CudTable,
    DegenerateEventError,
    SmallBallQuery,
    clopper_pearson_bounds,
    empirical_cud,
    empirical_small_ball,
    empirical_small_ball_many,
    empirical_stickiness,
    evaluate_strategy,
    make_lag_exploit_rule,
    make_random_rebalance_rule,
    run_experiment,
    strategy_zoo,
)
from .kernels import CorrelationKernel, StepFunction, eval_rho_integral
from .simulate import (
    DriftSpec,
    EmbeddingError,
    Grid,
    GridMismatchError,
    LagModelSpec,
    PathBatch,
    PriceOverflowError,
    empirical_cross_cov,
    export_csv,
    simulate,
    simulate_hry,
    simulate_spectral,
    to_prices,
)
from .spectral import (
    CrossSpectralDensity,
    CsdValidation,
    GsvzReport,
    cross_cov_quadrature,
    eval_csd,
    gsvz_check,
    increment_cross_cov,
    validate_csd,
)
from .strategies import (
    AdmissibilityReport,
    CheriditoReport,
    FrictionSpec,
    SimpleStrategy,
    StrategyExecution,
    StrategyRuleError,
    buy_and_hold_rule,
    check_admissible,
    execute,
    export_execution_csv,
    export_values_csv,
    hold_rule,
    total_variation,
    validate_cheridito,
    value_frictionless,
    value_with_costs,
)

__all__ = [
    "CorrelationKernel",
    "StepFunction",
    "eval_rho_integral",
    "CrossSpectralDensity",
    "CsdValidation",
    "GsvzReport",
    "cross_cov_quadrature",
    "eval_csd",
    "gsvz_check",
    "increment_cross_cov",
    "validate_csd",
    "DriftSpec",
    "EmbeddingError",
    "Grid",
    "GridMismatchError",
    "LagModelSpec",
    "PathBatch",
    "PriceOverflowError",
    "empirical_cross_cov",
    "export_csv",
    "simulate",
    "simulate_hry",
    "simulate_spectral",
    "to_prices",
    "AdmissibilityReport",
    "CheriditoReport",
    "FrictionSpec",
    "SimpleStrategy",
    "StrategyExecution",
    "StrategyRuleError",
    "buy_and_hold_rule",
    "check_admissible",
    "execute",
    "export_execution_csv",
    "export_values_csv",
    "hold_rule",
    "total_variation",
    "validate_cheridito",
    "value_frictionless",
    "value_with_costs",
    "ArbStats",
    "CudTable",
    "DegenerateEventError",
    "SmallBallQuery",
    "clopper_pearson_bounds",
    "empirical_cud",
    "empirical_small_ball",
    "empirical_small_ball_many",
    "empirical_stickiness",
    "evaluate_strategy",
    "make_lag_exploit_rule",
    "make_random_rebalance_rule",
    "run_experiment",
    "strategy_zoo",
    "CpsSolution",
    "MinEpsResult",
    "ScenarioTree",
    "TreeNode",
    "TreeStructureError",
    "build_tree",
    "find_cps",
    "min_eps_cps",
    "tree_from_csv",
    "tree_to_csv",
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config",
]

__version__ = "0.1.0"
