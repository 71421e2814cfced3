"""Verification laboratory for third-party enforcement in a repeated
prisoner's dilemma with private monitoring.

Two long-run partners open the game against each other; from the second
stage on, a coin decides which of them meets the moderator.  The package
checks, exactly, when cooperation between all three is self-enforcing.
"""

__version__ = "0.1.0"

from .beliefs import (
    BeliefPrecisionError,
    LimitReport,
    PerturbedProfile,
    PosteriorReport,
    SCHEMES,
    SeparationReport,
    TrembleScheme,
    limit_check,
    posterior,
    section3_scheme,
    section4_scheme,
    separation_check,
)
from .equilibrium import (
    CaseReport,
    ConsistencyError,
    EquilibriumReport,
    SearchReport,
    ThresholdReport,
    bounded_deviation_search,
    check_case,
    contagious_threshold,
    verify_theorem,
)
from .game import (
    Action,
    GameError,
    GameParams,
    History,
    Match,
    Met,
    Opening,
    OwnOpening,
    ParseError,
    PayoffMatrix,
    Played,
    PlayerId,
    PrivateHistory,
    all_histories,
    expand_pattern,
    format_history,
    format_observation,
    parse_history,
    parse_observation,
    private_projection,
    stage_payoffs,
)
from .numerics import as_fraction, decimal_str, parse_rational, rational_json
from .payoff import (
    CLOSED_FORMS,
    SimulationReport,
    TruncationBracket,
    closed_form,
    decision_value,
    exact_value,
    simulate,
    states_for,
    truncated_value,
)
from .strategies import (
    DeviationPlan,
    GrimState,
    MeasurabilityViolation,
    Profile,
    STRATEGIES,
    StrategyAutomaton,
    action_map,
    all_defect,
    apply_deviation,
    check_measurability,
    constant_split,
    contagious,
    contagious_profile,
    enforcement,
    on_path_histories,
    persistent_cooperation,
    plan_from_mapping,
    plan_to_mapping,
    sigma_profile,
    state_after,
    trigger_reachable,
    trigger_records,
)

__all__ = [name for name in dir() if not name.startswith("_")]
