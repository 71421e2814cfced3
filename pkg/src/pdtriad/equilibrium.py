"""Equilibrium verification: case checks, deviation search, threshold.

The six case checks mirror the hand analysis of the enforcement profile;
each value is produced by at least two independent routes (a geometric
closed form and the exact chain solver) and the routes must agree to the
last digit, or the check raises.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from .game import (
    Action,
    GameError,
    GameParams,
    History,
    PayoffMatrix,
    PlayerId,
    parse_history,
    private_projection,
)
from .numerics import decimal_str
from .payoff import (
    PLAYER_ORDER,
    closed_form,
    decision_value,
    exact_value,
    states_for,
)
from .strategies import (
    DeviationPlan,
    Profile,
    all_defect,
    apply_deviation,
    constant_split,
    contagious,
    on_path_histories,
    persistent_cooperation,
    sigma_profile,
)

C = Action.C
D = Action.D

_EMPTY = History(None, ())


class ConsistencyError(GameError):
    """Two supposedly independent routes to the same value disagreed."""


def _player_index(player: PlayerId) -> int:
    return PLAYER_ORDER.index(player)


# ---------------------------------------------------------------------------
# threshold


@dataclass(frozen=True)
class ThresholdReport:
    status: str  # "ok" | "no-interior-threshold"
    tolerance: Fraction
    lower: Optional[Fraction] = None
    upper: Optional[Fraction] = None
    rendered: Optional[str] = None
    gain_at_lower: Optional[Fraction] = None
    gain_at_upper: Optional[Fraction] = None
    quadratic: Optional[Tuple[Fraction, Fraction, Fraction]] = None
    quadratic_sign_change: Optional[bool] = None
    gain_signs: Optional[Tuple[int, int]] = None


def _bisect_gain(
    gain: Callable[[Fraction], Fraction], tolerance: Fraction, grid: int = 32
) -> Optional[Tuple[Fraction, Fraction]]:
    """Bracket the sign change of ``gain`` on (0, 1) to within ``tolerance``.

    Returns None when the scan grid finds no sign change.  The scan assumes
    at most one crossing, which holds for any gain that is negative near 0
    and increasing once positive.
    """
    points = [Fraction(k, grid) for k in range(1, grid)]
    values = [gain(x) for x in points]
    lo = hi = None
    for x, v in zip(points, values):
        if v < 0:
            lo = x
        elif lo is not None:
            hi = x
            break
    if lo is None or hi is None:
        return None
    while hi - lo > tolerance:
        mid = (lo + hi) / 2
        if gain(mid) < 0:
            lo = mid
        else:
            hi = mid
    return lo, hi


def contagious_threshold(
    payoffs: PayoffMatrix,
    match_prob: Fraction = Fraction(1, 2),
    tolerance: Fraction = Fraction(1, 10**9),
) -> ThresholdReport:
    """Discount factor above which full defection stops paying against
    contagious opponents.

    The gain (smooth path minus full defection) is evaluated exactly; the
    bracket is cross-checked against the quadratic the gain reduces to after
    clearing the geometric denominator.
    """
    match_prob = Fraction(match_prob)

    def gain(delta: Fraction) -> Fraction:
        params = GameParams(delta=delta, match_prob=match_prob, payoffs=payoffs)
        return closed_form("onpath-x", params) - closed_form("alld-deviation", params)

    bracket = _bisect_gain(gain, tolerance)
    if bracket is None:
        probe_lo, probe_hi = Fraction(1, 32), Fraction(31, 32)
        g_lo, g_hi = gain(probe_lo), gain(probe_hi)
        return ThresholdReport(
            status="no-interior-threshold",
            tolerance=tolerance,
            gain_at_lower=g_lo,
            gain_at_upper=g_hi,
            gain_signs=(_sign(g_lo), _sign(g_hi)),
        )
    lo, hi = bracket
    q, T, R, P = match_prob, payoffs.T, payoffs.R, payoffs.P
    quad = (q * (T - P), (1 - q) * (T - R), R - T)

    def quad_at(x: Fraction) -> Fraction:
        a, b, c = quad
        return a * x * x + b * x + c

    return ThresholdReport(
        status="ok",
        tolerance=tolerance,
        lower=lo,
        upper=hi,
        rendered=decimal_str((lo + hi) / 2, places=6, fixed=True),
        gain_at_lower=gain(lo),
        gain_at_upper=gain(hi),
        quadratic=quad,
        quadratic_sign_change=_sign(quad_at(lo)) != _sign(quad_at(hi)),
    )


def _sign(x: Fraction) -> int:
    return (x > 0) - (x < 0)


# ---------------------------------------------------------------------------
# case checks


@dataclass(frozen=True)
class CaseValue:
    label: str
    value: Fraction
    routes: Mapping[str, Fraction]


@dataclass(frozen=True)
class CaseReport:
    case_id: int
    title: str
    player: PlayerId
    conform: CaseValue
    deviations: Tuple[CaseValue, ...]
    holds: bool
    notes: Tuple[str, ...] = ()


def _case_value(label: str, routes: Dict[str, Fraction]) -> CaseValue:
    vals = set(routes.values())
    if len(vals) != 1:
        detail = ", ".join(f"{k}={v}" for k, v in routes.items())
        raise ConsistencyError(f"routes disagree for {label}: {detail}")
    return CaseValue(label, next(iter(vals)), dict(routes))


def _check_case1(params: GameParams) -> CaseReport:
    """A punished X player gains nothing from cooperating with a punisher."""
    profile = sigma_profile()
    history = parse_history("(DD;X1DC)")
    states = states_for(profile, history)
    idx = _player_index(PlayerId.X1)
    d, q, pays = params.delta, params.match_prob, params.payoffs
    tail = 1 / (1 - d)
    _, conform_total = decision_value(profile, params, states, PlayerId.X1)
    _, deviate_total = decision_value(profile, params, states, PlayerId.X1, x_action=C)
    conform = _case_value(
        "defect against the punisher",
        {"chain": conform_total[idx], "geometric": pays.P + d * q * pays.P * tail},
    )
    deviate = _case_value(
        "cooperate with the punisher",
        {"chain": deviate_total[idx], "geometric": pays.S + d * q * pays.P * tail},
    )
    cont_conform = (conform.value - pays.P) / d
    cont_deviate = (deviate.value - pays.S) / d
    if cont_conform != cont_deviate:
        raise ConsistencyError("punishment continuation depends on the current action")
    return CaseReport(
        case_id=1,
        title="defection inside a punishment match",
        player=PlayerId.X1,
        conform=conform,
        deviations=(deviate,),
        holds=conform.value >= deviate.value,
        notes=("continuation value is action-independent; the stage payoff decides",),
    )


def _check_case2(params: GameParams) -> CaseReport:
    """Cooperation in a smooth match beats the one-shot defection."""
    profile = sigma_profile()
    states = states_for(profile, parse_history("(CC)"))
    idx = _player_index(PlayerId.X1)
    _, conform_total = decision_value(profile, params, states, PlayerId.X1)
    _, deviate_total = decision_value(profile, params, states, PlayerId.X1, x_action=D)
    conform = _case_value(
        "cooperate",
        {"chain": conform_total[idx], "closed-form": closed_form("case2-c", params)},
    )
    deviate = _case_value(
        "defect once",
        {"chain": deviate_total[idx], "closed-form": closed_form("case2-d", params)},
    )
    return CaseReport(
        case_id=2,
        title="smooth-path match for an X player",
        player=PlayerId.X1,
        conform=conform,
        deviations=(deviate,),
        holds=conform.value >= deviate.value,
    )


def _check_case3(params: GameParams) -> CaseReport:
    """The moderator should absorb the comeback defection."""
    profile = sigma_profile()
    states = states_for(profile, parse_history("(CC;X1CC)"))
    idx = _player_index(PlayerId.M)
    _, conform_total = decision_value(profile, params, states, PlayerId.X2)
    _, oneshot_total = decision_value(profile, params, states, PlayerId.X2, m_action=D)
    split = constant_split({PlayerId.X1: C, PlayerId.X2: D})
    split_profile = profile.with_player(PlayerId.M, split)
    split_states = states_for(split_profile, parse_history("(CC;X1CC)"))
    _, split_total = decision_value(split_profile, params, split_states, PlayerId.X2)
    conform = _case_value(
        "absorb the comeback defection",
        {"chain": conform_total[idx], "closed-form": closed_form("case3-c", params)},
    )
    deviate = _case_value(
        "block it and punish that opponent",
        {
            "chain": oneshot_total[idx],
            "split-chain": split_total[idx],
            "closed-form": closed_form("case3-d", params),
        },
    )
    return CaseReport(
        case_id=3,
        title="moderator facing the expected comeback defection",
        player=PlayerId.M,
        conform=conform,
        deviations=(deviate,),
        holds=conform.value >= deviate.value,
    )


def _check_case4(params: GameParams) -> CaseReport:
    """The moderator should cooperate at its first match."""
    profile = sigma_profile()
    states = states_for(profile, parse_history("(CC)"))
    idx = _player_index(PlayerId.M)
    _, conform_total = decision_value(profile, params, states, PlayerId.X1)
    split = constant_split({PlayerId.X1: D, PlayerId.X2: C})
    split_profile = profile.with_player(PlayerId.M, split)
    split_states = states_for(split_profile, parse_history("(CC)"))
    _, split_total = decision_value(split_profile, params, split_states, PlayerId.X1)
    _, oneshot_total = decision_value(profile, params, states, PlayerId.X1, m_action=D)
    conform = _case_value(
        "cooperate at the first match",
        {"chain": conform_total[idx], "closed-form": closed_form("case4-c", params)},
    )
    best = _case_value(
        "defect, then keep punishing only that opponent",
        {"chain": split_total[idx], "closed-form": closed_form("case4-d", params)},
    )
    oneshot = CaseValue(
        "defect once, then back to the record rules",
        oneshot_total[idx],
        {"chain": oneshot_total[idx]},
    )
    holds = conform.value >= best.value and conform.value >= oneshot.value
    return CaseReport(
        case_id=4,
        title="moderator's first-match temptation",
        player=PlayerId.M,
        conform=conform,
        deviations=(best, oneshot),
        holds=holds,
        notes=("the split continuation is the best reply after defecting",),
    )


def _case5_profile() -> Profile:
    # Valuation world for the betrayed player's alternatives: the punishment
    # continuation is the contagious automaton (the moderator spreads the
    # defection it sees the stage after meeting the original defector), and
    # the original defector keeps defecting.  The record-based stage rules
    # cannot separate that defector's defection from an innocent comeback,
    # so they are not the environment these values are defined against.
    return Profile(
        x1=contagious(PlayerId.X1),
        x2=all_defect(PlayerId.X2),
        m=contagious(PlayerId.M),
    )


def _check_case5(params: GameParams) -> CaseReport:
    """A betrayed X player should keep defecting."""
    history = parse_history("(CD)")
    idx = _player_index(PlayerId.X1)
    profile = _case5_profile()
    states = states_for(profile, history)
    _, conform_total = decision_value(profile, params, states, PlayerId.X1)
    _, oneshot_total = decision_value(profile, params, states, PlayerId.X1, x_action=C)
    persistent_profile = profile.with_player(PlayerId.X1, persistent_cooperation(PlayerId.X1))
    p_states = states_for(persistent_profile, history)
    _, persistent_total = decision_value(persistent_profile, params, p_states, PlayerId.X1)
    conform = _case_value(
        "defect as prescribed",
        {"chain": conform_total[idx], "closed-form": closed_form("case5-d", params)},
    )
    oneshot = _case_value(
        "cooperate once",
        {"chain": oneshot_total[idx], "closed-form": closed_form("case5-one-shot-c", params)},
    )
    persistent = _case_value(
        "cooperate until sitting out a stage",
        {"chain": persistent_total[idx], "closed-form": closed_form("case5-persistent-c", params)},
    )
    return CaseReport(
        case_id=5,
        title="betrayed X player's first match",
        player=PlayerId.X1,
        conform=conform,
        deviations=(oneshot, persistent),
        holds=conform.value >= oneshot.value and conform.value >= persistent.value,
        notes=("alternatives are valued in the contagious continuation",),
    )


def _check_case6(params: GameParams) -> CaseReport:
    """Opening cooperation beats defecting from the start."""
    profile = sigma_profile()
    idx = _player_index(PlayerId.X1)
    conform = _case_value(
        "cooperate at the opening",
        {
            "chain": exact_value(profile, params)[idx],
            "closed-form": closed_form("case6-c", params),
        },
    )
    alld_profile = profile.with_player(PlayerId.X1, all_defect(PlayerId.X1))
    opening_plan = DeviationPlan(PlayerId.X1, _EMPTY, (D,), "conform")
    opening_profile = profile.with_player(
        PlayerId.X1, apply_deviation(profile.x1, opening_plan)
    )
    alld = _case_value(
        "defect everywhere",
        {
            "chain": exact_value(alld_profile, params)[idx],
            "closed-form": closed_form("case6-d", params),
        },
    )
    opening = CaseValue(
        "defect at the opening, then back to the rules",
        exact_value(opening_profile, params)[idx],
        {"chain": exact_value(opening_profile, params)[idx]},
    )
    holds = conform.value >= alld.value and conform.value >= opening.value
    return CaseReport(
        case_id=6,
        title="the opening stage",
        player=PlayerId.X1,
        conform=conform,
        deviations=(alld, opening),
        holds=holds,
    )


_CASES: Mapping[int, Callable[[GameParams], CaseReport]] = {
    1: _check_case1,
    2: _check_case2,
    3: _check_case3,
    4: _check_case4,
    5: _check_case5,
    6: _check_case6,
}


def check_case(case_id: int, params: GameParams) -> CaseReport:
    fn = _CASES.get(case_id)
    if fn is None:
        raise GameError(f"unknown case: {case_id}")
    return fn(params)


# ---------------------------------------------------------------------------
# bounded deviation search


@dataclass(frozen=True)
class SearchFinding:
    history: History
    selected: PlayerId
    plan: DeviationPlan
    conform: Fraction
    deviation: Fraction

    @property
    def gain(self) -> Fraction:
        return self.deviation - self.conform


@dataclass(frozen=True)
class SearchReport:
    deviator: PlayerId
    depth: int
    info_sets: int
    plans_evaluated: int
    best: Optional[SearchFinding]
    profitable: Tuple[SearchFinding, ...]

    @property
    def best_gain(self) -> Fraction:
        return self.best.gain if self.best is not None else Fraction(0)

    @property
    def clean(self) -> bool:
        return not self.profitable


def _plan_space(deviator: PlayerId, trigger: History, depth: int):
    for length in range(depth + 1):
        for bits in range(2**length):
            overrides = tuple(
                D if (bits >> pos) & 1 else C for pos in range(length)
            )
            for continuation in ("conform", "all-d"):
                yield DeviationPlan(deviator, trigger, overrides, continuation)


def bounded_deviation_search(
    base: Profile, deviator: PlayerId, params: GameParams, depth: int = 3
) -> SearchReport:
    """Exhaust single-player deviation plans of bounded depth.

    Information sets are the deviator's decision points reachable under the
    base profile within ``depth`` stages; under a deterministic base each
    private record there pins down a unique public history.  Every plan is
    valued exactly from its trigger point, conditional on the deviator being
    the one matched there.
    """
    if depth < 1:
        raise GameError("search depth must be at least 1")
    dev_idx = _player_index(deviator)
    base_auto = base.automaton(deviator)
    points: List[Tuple[History, PlayerId]] = []
    for stage in range(1, depth + 1):
        if deviator is PlayerId.M and stage == 1:
            continue
        seen_records = {}
        for history in on_path_histories(base, stage - 1):
            record = private_projection(history, deviator).entries
            if record in seen_records and seen_records[record] != history:
                raise GameError("base profile is not deterministic enough to pin info sets")
            seen_records[record] = history
        for history in seen_records.values():
            if deviator is PlayerId.M:
                points.append((history, PlayerId.X1))
                points.append((history, PlayerId.X2))
            else:
                points.append((history, deviator))

    best: Optional[SearchFinding] = None
    profitable: List[SearchFinding] = []
    plans_evaluated = 0
    for history, selected in points:
        # The opening decision is unconditional (both X players move); later
        # decisions are valued conditional on the deviator being matched.
        at_opening = history.opening is None
        if at_opening:
            conform = exact_value(base, params)[dev_idx]
        else:
            states = states_for(base, history)
            _, conform_total = decision_value(base, params, states, selected)
            conform = conform_total[dev_idx]
        for plan in _plan_space(deviator, history, depth):
            composite = apply_deviation(base_auto, plan)
            profile = base.with_player(deviator, composite)
            if at_opening:
                dev_total = exact_value(profile, params)
            else:
                dev_states = states_for(profile, history)
                _, dev_total = decision_value(profile, params, dev_states, selected)
            finding = SearchFinding(history, selected, plan, conform, dev_total[dev_idx])
            plans_evaluated += 1
            if best is None or finding.gain > best.gain:
                best = finding
            if finding.gain > 0:
                profitable.append(finding)
    profitable.sort(key=lambda f: f.gain, reverse=True)
    return SearchReport(
        deviator=deviator,
        depth=depth,
        info_sets=len(points),
        plans_evaluated=plans_evaluated,
        best=best,
        profitable=tuple(profitable),
    )


# ---------------------------------------------------------------------------
# full verification


@dataclass(frozen=True)
class EquilibriumReport:
    params: GameParams
    cases: Tuple[CaseReport, ...]
    searches: Tuple[SearchReport, ...]

    @property
    def holds(self) -> bool:
        return all(c.holds for c in self.cases) and all(s.clean for s in self.searches)


def verify_theorem(params: GameParams, search_depth: int = 3) -> EquilibriumReport:
    """Run every case check and the bounded search for each deviator."""
    cases = tuple(check_case(i, params) for i in sorted(_CASES))
    base = sigma_profile()
    searches = tuple(
        bounded_deviation_search(base, deviator, params, search_depth)
        for deviator in PLAYER_ORDER
    )
    return EquilibriumReport(params=params, cases=cases, searches=searches)
