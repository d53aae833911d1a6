"""Desk-scale laboratory for budget-relaxed competitive equilibrium on
combinatorial exchanges, with a Sybil-attack engine and empirical verifiers
for price stability, welfare rates, strategyproofness-in-the-large,
fairness lifting, non-existence and deterrence costs."""

__version__ = "0.1.0"

from .economy import (
    Bundle,
    Economy,
    EconomyError,
    EmpiricalDistribution,
    IdentityType,
    Lottery,
    SybilAttack,
    WeakOrder,
    aggregate_by_principal,
    build_economy,
    economy_to_spec,
    empirical_distribution,
    empty_attack,
    identity_share,
    infiltration_rate,
    make_economy,
    w1_discrete,
)
from .demand import (
    BudgetProfile,
    DemandResult,
    FosdOutcome,
    demand,
    demand_profile,
    fosd_compare,
    price_value,
    sample_budget_relaxations,
)
from .solver import (
    ClearingReport,
    EquilibriumResult,
    SolverConfig,
    excess_demand,
    feasibility_audit,
    project_to_simplex,
    solve_brace,
    uniform_prices,
    verify_clearing,
)
from .diagnostics import (
    BadRegionConfig,
    BadRegionReport,
    RegularityEstimates,
    detect_bad_region,
    estimate_LZ,
    estimate_gamma,
)
from .attacks import (
    AttackFamily,
    apply_attack,
    attack_search,
    coordinated_misreport,
    reported_type,
    unbounded_sybil_sequence,
)
from .bounds import (
    BoundReport,
    CardinalUtility,
    check_price_bound,
    check_welfare_bound,
    deterrence_check,
    deterrence_threshold,
    estimate_regularity,
    fit_identity_gain_constant,
    principal_utility,
    reduced_form_gain,
    spl_curves,
    tail_bound_check,
    true_score_gain,
)
from .fairness import (
    envy_free_sd,
    find_jef_lift_counterexample,
    jef_check,
    jef_lift_check,
)
from .corpus import TradingType, corpus_generate, default_type_space, generate_economy, preference_menu
from .scenarios import example_one_economy, example_one_family, example_one_split
