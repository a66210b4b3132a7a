"""Model-free portfolio analytics on a rough-path foundation."""

__version__ = "0.1.0"

from .paths import (
    ControlFunction,
    PartitionSequence,
    SampledPath,
    TimeGrid,
    p_variation,
    p_variation_control,
    piecewise_constant_approx,
    two_param_p_variation,
)
from .rough import (
    BracketPath,
    ControlledPath,
    DiscreteMeasure,
    RoughLift,
    associativity_check,
    bracket,
    canonical_lift_of_controlled,
    chen_residual,
    compensated_integral,
    controlled_vs_controlled_integral,
    ito_formula_residual,
    left_point_integral,
    lift_via_left_point,
    mixture_integral_check,
    product,
    rie_diagnostic,
    rough_exponential,
    young_integral,
)
from .market import (
    MarketPath,
    PortfolioPath,
    WealthRecord,
    excess_growth,
    functionally_controlled,
    functionally_generated,
    log_relative_wealth,
    market_portfolio,
    market_weights,
    master_formula_check,
    relative_covariance,
    wealth,
)
from .universal import (
    AdmissibilityReport,
    ClockValues,
    FunctionFamily,
    admissibility_check,
    best_retrospective,
    controlled_equation_portfolio,
    cover_gap_trajectory,
    gradient_bound_check,
    growth_clock,
    metric_d_beta,
    mixture_wealth_identity,
    nontriviality_path,
    seminorm,
    universal_portfolio,
)
from .diffusion import (
    DiffusionSpec,
    MCResult,
    SimulationConfig,
    WeightEnsemble,
    alpha_star,
    ergodic_growth_rate,
    expected_log_optimal,
    figure1_experiment,
    log_optimal_portfolio,
    polynomial_spec,
    simulate_market_weights,
    solve_lambda,
    structure_condition_report,
    vol_stabilized_spec,
)
