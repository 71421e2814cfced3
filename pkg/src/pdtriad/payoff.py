"""Discounted payoff evaluation for strategy profiles.

Three independent routes to the same quantities:

* ``exact_value`` builds the joint automaton chain and solves the linear
  system over rationals;
* ``truncated_value`` sums a finite horizon exactly and brackets the tail;
* ``simulate`` plays the chain forward under Monte Carlo matching draws.

Keeping the routes separate is the point: they cross-check each other and a
closed-form registry of hand-derived values.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .game import (
    IDLE,
    Action,
    GameError,
    GameParams,
    History,
    Match,
    Met,
    Opening,
    OwnOpening,
    Played,
    PlayerId,
    private_projection,
    stage_payoffs,
)
from .strategies import Profile, StrategyAutomaton, state_after

PLAYER_ORDER = (PlayerId.X1, PlayerId.X2, PlayerId.M)

Vector = Tuple[Fraction, Fraction, Fraction]

_ZERO = Fraction(0)


@dataclass(frozen=True)
class Branch:
    prob: Fraction
    payoffs: Vector
    next_index: int
    selected: Optional[PlayerId]  # None for the opening stage


@dataclass
class JointChain:
    """Joint automaton of a profile, collapsed to stage boundaries.

    Node 0 is the root.  Every branch advances exactly one stage, pays the
    branch payoffs at that stage, and lands on the next node.
    """

    profile: Profile
    params: GameParams
    keys: List[tuple]
    branches: List[List[Branch]]
    _values: Optional[List[Vector]] = None


def _payoff_vector(params: GameParams, selected: PlayerId, x_action: Action, m_action: Action) -> Vector:
    x_pay, m_pay = stage_payoffs(params.payoffs, x_action, m_action)
    if selected is PlayerId.X1:
        return (x_pay, _ZERO, m_pay)
    return (_ZERO, x_pay, m_pay)


def _opening_vector(params: GameParams, a1: Action, a2: Action) -> Vector:
    u1, u2 = stage_payoffs(params.payoffs, a1, a2)
    return (u1, u2, _ZERO)


def states_for(profile: Profile, history: History) -> tuple:
    """Automaton states of all three players after a concrete history."""
    states = []
    for player in (PlayerId.M, PlayerId.X1, PlayerId.X2):
        automaton = profile.automaton(player)
        entries = private_projection(history, player).entries
        states.append(state_after(automaton, entries))
    return tuple(states)


def _step_states(profile: Profile, states: tuple, selected: PlayerId, x_action: Action, m_action: Action) -> tuple:
    m_state, x1_state, x2_state = states
    m_next = profile.m.step(m_state, Met(selected, x_action, m_action))
    if selected is PlayerId.X1:
        x1_next = profile.x1.step(x1_state, Played(x_action, m_action))
        x2_next = profile.x2.step(x2_state, IDLE)
    else:
        x1_next = profile.x1.step(x1_state, IDLE)
        x2_next = profile.x2.step(x2_state, Played(x_action, m_action))
    return (m_next, x1_next, x2_next)


def build_chain(profile: Profile, params: GameParams, root_states: Optional[tuple] = None) -> JointChain:
    """Build the joint chain.

    Without ``root_states`` the chain starts at the opening stage; with them
    it starts at a matched stage with the given (moderator, X1, X2) states.
    """
    keys: List[tuple] = []
    index: Dict[tuple, int] = {}
    branches: List[List[Branch]] = []

    def intern(key: tuple) -> int:
        if key in index:
            return index[key]
        index[key] = len(keys)
        keys.append(key)
        branches.append([])
        return index[key]

    q = params.match_prob
    selection = ((PlayerId.X1, q), (PlayerId.X2, 1 - q))

    if root_states is None:
        root = intern(("opening",))
    else:
        root = intern(("pre",) + root_states)

    pending = [root]
    seen = {root}
    while pending:
        node = pending.pop()
        key = keys[node]
        if key[0] == "opening":
            a1 = profile.x1.act(profile.x1.initial)
            a2 = profile.x2.act(profile.x2.initial)
            x1_state = profile.x1.step(profile.x1.initial, OwnOpening(a1, a2))
            x2_state = profile.x2.step(profile.x2.initial, OwnOpening(a2, a1))
            nxt = intern(("pre", profile.m.initial, x1_state, x2_state))
            branches[node].append(Branch(Fraction(1), _opening_vector(params, a1, a2), nxt, None))
            if nxt not in seen:
                seen.add(nxt)
                pending.append(nxt)
            continue
        states = key[1:]
        m_state = states[0]
        for selected, prob in selection:
            if prob == 0:
                continue
            x_auto = profile.automaton(selected)
            x_state = states[1] if selected is PlayerId.X1 else states[2]
            x_action = x_auto.act(x_state)
            m_action = profile.m.act(m_state, selected)
            nxt_states = _step_states(profile, states, selected, x_action, m_action)
            nxt = intern(("pre",) + nxt_states)
            branches[node].append(
                Branch(prob, _payoff_vector(params, selected, x_action, m_action), nxt, selected)
            )
            if nxt not in seen:
                seen.add(nxt)
                pending.append(nxt)
        if len(keys) > 100000:
            raise GameError("joint chain failed to close; automaton state space is not finite")
    return JointChain(profile, params, keys, branches)


def _solve(chain: JointChain) -> List[Vector]:
    """Exact stationary values: V(i) = sum_b p_b (u_b + delta V(next_b))."""
    if chain._values is not None:
        return chain._values
    delta = chain.params.delta
    n = len(chain.keys)
    const: List[List[Fraction]] = [[_ZERO] * 3 for _ in range(n)]
    coeff: List[Dict[int, Fraction]] = [{} for _ in range(n)]
    for i in range(n):
        for br in chain.branches[i]:
            for p in range(3):
                const[i][p] += br.prob * br.payoffs[p]
            coeff[i][br.next_index] = coeff[i].get(br.next_index, _ZERO) + delta * br.prob

    values: List[Optional[List[Fraction]]] = [None] * n

    # peel nodes whose successors are already solved (the record phase is a DAG)
    remaining = set(range(n))
    progress = True
    while progress:
        progress = False
        for i in list(remaining):
            if all(j not in remaining for j in coeff[i]):
                row = list(const[i])
                for j, a in coeff[i].items():
                    for p in range(3):
                        row[p] += a * values[j][p]
                values[i] = row
                remaining.discard(i)
                progress = True

    if remaining:
        order = sorted(remaining)
        pos = {node: k for k, node in enumerate(order)}
        m = len(order)
        # rows: V_i - sum_{j in core} a_ij V_j = const_i + sum_{j solved} a_ij V_j
        mat = [[_ZERO] * m for _ in range(m)]
        rhs = [[_ZERO] * 3 for _ in range(m)]
        for i in order:
            r = pos[i]
            mat[r][r] = Fraction(1)
            rhs[r] = list(const[i])
            for j, a in coeff[i].items():
                if j in pos:
                    mat[r][pos[j]] -= a
                else:
                    for p in range(3):
                        rhs[r][p] += a * values[j][p]
        for col in range(m):
            pivot = next(r for r in range(col, m) if mat[r][col] != 0)
            mat[col], mat[pivot] = mat[pivot], mat[col]
            rhs[col], rhs[pivot] = rhs[pivot], rhs[col]
            inv = 1 / mat[col][col]
            mat[col] = [x * inv for x in mat[col]]
            rhs[col] = [x * inv for x in rhs[col]]
            for r in range(m):
                if r != col and mat[r][col] != 0:
                    f = mat[r][col]
                    mat[r] = [x - f * y for x, y in zip(mat[r], mat[col])]
                    rhs[r] = [x - f * y for x, y in zip(rhs[r], rhs[col])]
        for node in order:
            values[node] = rhs[pos[node]]

    chain._values = [tuple(v) for v in values]
    return chain._values


def exact_value(profile: Profile, params: GameParams, root_states: Optional[tuple] = None) -> Vector:
    """Exact discounted value vector (X1, X2, M), stage weights from 1."""
    chain = build_chain(profile, params, root_states)
    return _solve(chain)[0]


def chain_values(chain: JointChain) -> List[Vector]:
    return _solve(chain)


def decision_value(
    profile: Profile,
    params: GameParams,
    states: tuple,
    selected: PlayerId,
    x_action: Optional[Action] = None,
    m_action: Optional[Action] = None,
) -> Tuple[Vector, Vector]:
    """Value conditional on a given match happening now.

    Plays the current stage under the profile (individual actions may be
    forced), then continues under the profile.  Returns the current stage
    payoff vector and the total value vector with the current stage at
    weight one.
    """
    m_state = states[0]
    x_auto = profile.automaton(selected)
    x_state = states[1] if selected is PlayerId.X1 else states[2]
    if x_action is None:
        x_action = x_auto.act(x_state)
    if m_action is None:
        m_action = profile.m.act(m_state, selected)
    stage_vec = _payoff_vector(params, selected, x_action, m_action)
    nxt_states = _step_states(profile, states, selected, x_action, m_action)
    continuation = exact_value(profile, params, root_states=nxt_states)
    total = tuple(stage_vec[p] + params.delta * continuation[p] for p in range(3))
    return stage_vec, total


# ---------------------------------------------------------------------------
# truncation with tail brackets


@dataclass(frozen=True)
class TruncationBracket:
    horizon: int
    core: Fraction
    lower: Fraction
    upper: Fraction

    @property
    def width(self) -> Fraction:
        return self.upper - self.lower


def _match_rate(params: GameParams, player: PlayerId) -> Fraction:
    if player is PlayerId.M:
        return Fraction(1)
    return params.selection_prob(player)


def truncated_value(profile: Profile, params: GameParams, horizon: int) -> Dict[PlayerId, TruncationBracket]:
    """Exact value of the first ``horizon`` stages plus rigorous tail bounds.

    The tail of every stage from ``horizon + 1`` on is bracketed per player by
    the worst and best stage payoff times that player's matching rate.
    """
    if horizon < 1:
        raise GameError("horizon must be at least 1")
    chain = build_chain(profile, params)
    delta = chain.params.delta
    n = len(chain.keys)
    current: List[List[Fraction]] = [[_ZERO] * 3 for _ in range(n)]
    for _ in range(horizon):
        nxt: List[List[Fraction]] = []
        for i in range(n):
            row = [_ZERO] * 3
            for br in chain.branches[i]:
                for p in range(3):
                    row[p] += br.prob * (br.payoffs[p] + delta * current[br.next_index][p])
            nxt.append(row)
        current = nxt
    core = current[0]
    scale = delta**horizon / (1 - delta)
    result = {}
    pays = params.payoffs
    for p, player in enumerate(PLAYER_ORDER):
        rate = _match_rate(params, player)
        result[player] = TruncationBracket(
            horizon=horizon,
            core=core[p],
            lower=core[p] + scale * rate * pays.S,
            upper=core[p] + scale * rate * pays.T,
        )
    return result


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class PlayerSimulation:
    mean: float
    std_error: float
    tail_lower: float
    tail_upper: float
    exact: Fraction

    @property
    def abs_error(self) -> float:
        return abs(self.mean - float(self.exact))


@dataclass(frozen=True)
class SimulationReport:
    seed: int
    runs: int
    horizon: int
    players: Dict[PlayerId, PlayerSimulation]


def simulate(profile: Profile, params: GameParams, seed: int, horizon: int, runs: int) -> SimulationReport:
    """Monte Carlo playout of the joint chain.

    Run ``r`` draws from the Philox stream ``jumped(r)`` of ``seed``; one
    uniform draw is consumed per stage.  Payoffs are truncated at the
    horizon; the reported tail bracket bounds what the truncation can hide.
    """
    if horizon < 1:
        raise GameError("horizon must be at least 1")
    if runs < 2:
        raise GameError("need at least two runs for a standard error")
    chain = build_chain(profile, params)
    n = len(chain.keys)
    next_idx = np.zeros((n, 2), dtype=np.int64)
    pay = np.zeros((n, 2, 3), dtype=np.float64)
    p_first = np.zeros(n, dtype=np.float64)
    for i in range(n):
        brs = chain.branches[i]
        if len(brs) == 1:
            pair = (brs[0], brs[0])
            p_first[i] = 1.0
        else:
            first = next(b for b in brs if b.selected is PlayerId.X1)
            second = next(b for b in brs if b.selected is PlayerId.X2)
            pair = (first, second)
            p_first[i] = float(first.prob)
        for slot, br in enumerate(pair):
            next_idx[i, slot] = br.next_index
            for p in range(3):
                pay[i, slot, p] = float(br.payoffs[p])

    base = np.random.Philox(key=seed)
    draws = np.empty((runs, horizon), dtype=np.float64)
    for r in range(runs):
        draws[r] = np.random.Generator(base.jumped(r)).random(horizon)

    state = np.zeros(runs, dtype=np.int64)
    totals = np.zeros((runs, 3), dtype=np.float64)
    disc = 1.0
    dfloat = float(params.delta)
    for t in range(horizon):
        slot = (draws[:, t] >= p_first[state]).astype(np.int64)
        totals += disc * pay[state, slot, :]
        state = next_idx[state, slot]
        disc *= dfloat

    exact = _solve(chain)[0]
    scale = float(params.delta**horizon / (1 - params.delta))
    players = {}
    for p, player in enumerate(PLAYER_ORDER):
        rate = float(_match_rate(params, player))
        sample = totals[:, p]
        mean = float(sample.mean())
        se = float(sample.std(ddof=1) / np.sqrt(runs))
        players[player] = PlayerSimulation(
            mean=mean,
            std_error=se,
            tail_lower=scale * rate * float(params.payoffs.S),
            tail_upper=scale * rate * float(params.payoffs.T),
            exact=exact[p],
        )
    return SimulationReport(seed=seed, runs=runs, horizon=horizon, players=players)


# ---------------------------------------------------------------------------
# closed forms


def _tail(params: GameParams) -> Fraction:
    return 1 / (1 - params.delta)


def _cf_onpath_x(params: GameParams) -> Fraction:
    """Smooth path for an X player: cooperate at the opening, then earn the
    cooperative payoff whenever matched."""
    d, q, pays = params.delta, params.match_prob, params.payoffs
    return pays.R + d * q * pays.R * _tail(params)


def _cf_alld_deviation(params: GameParams) -> Fraction:
    """Defect everywhere against contagious opponents, seen from the start:
    one full temptation, a second one while the moderator is still clean,
    punishment whenever matched afterwards."""
    d, q, pays = params.delta, params.match_prob, params.payoffs
    return pays.T + d * q * pays.T + d * d * q * pays.P * _tail(params)


def _cf_case2_c(params: GameParams) -> Fraction:
    """Cooperate in an on-path match; the future stays smooth."""
    return _cf_onpath_x(params)


def _cf_case2_d(params: GameParams) -> Fraction:
    """Defect in an on-path match: temptation now, punishment whenever
    matched afterwards."""
    d, q, pays = params.delta, params.match_prob, params.payoffs
    return pays.T + d * q * pays.P * _tail(params)


def _cf_case3_c(params: GameParams) -> Fraction:
    """Moderator lets the comeback defection happen, then cooperation resumes
    with both opponents."""
    d, pays = params.delta, params.payoffs
    return pays.S + d * pays.R * _tail(params)


def _cf_case3_d(params: GameParams) -> Fraction:
    """Moderator blocks the comeback defection and punishes that opponent
    forever while staying smooth with the other (stage-2) opponent."""
    d, q, pays = params.delta, params.match_prob, params.payoffs
    return pays.P + d * (q * pays.R + (1 - q) * pays.P) * _tail(params)


def _cf_case4_c(params: GameParams) -> Fraction:
    """Moderator cooperates at its first match (with X1): smooth now, one
    expected comeback defection next stage, smooth forever after."""
    d, q, pays = params.delta, params.match_prob, params.payoffs
    return pays.R + d * (q * pays.R + (1 - q) * pays.S) + d * d * pays.R * _tail(params)


def _cf_case4_d(params: GameParams) -> Fraction:
    """Moderator defects at its first match (with X1): temptation now, then a
    split future, punishing X1 forever while cooperating with X2."""
    d, q, pays = params.delta, params.match_prob, params.payoffs
    later = q * pays.P * _tail(params) + (1 - q) * pays.R * _tail(params)
    return pays.T + d * ((1 - q) * pays.S + q * pays.P) + d * d * later


def _cf_case5_d(params: GameParams) -> Fraction:
    """Betrayed X player (X1) keeps defecting: temptation at its first
    match, punishment at every later one."""
    d, q, pays = params.delta, params.match_prob, params.payoffs
    return pays.T + d * q * pays.P * _tail(params)


def _cf_case5_one_shot_c(params: GameParams) -> Fraction:
    """Betrayed X player cooperates once more, then returns to defection
    while the moderator is still clean for one stage."""
    d, q, pays = params.delta, params.match_prob, params.payoffs
    return pays.R + d * q * pays.T + d * d * q * pays.P * _tail(params)


def _cf_case5_persistent_c(params: GameParams) -> Fraction:
    """Betrayed X player (X1) cooperates until it sits out a stage, then
    defects forever.  While it is matched every stage the moderator stays
    clean; the first idle stage lets the other deviator poison the match."""
    d, q, pays = params.delta, params.match_prob, params.payoffs
    poisoned = (pays.R - pays.P) * d * d * q / (1 - d * q) + pays.P * d * d * _tail(params)
    return pays.R + d * q * pays.R + q * poisoned


def _cf_case6_c(params: GameParams) -> Fraction:
    """Cooperative opening for an X player (X1), counting the expected
    comeback defection against it at stage 3."""
    d, q, pays = params.delta, params.match_prob, params.payoffs
    stage3 = q * (q * pays.R + (1 - q) * pays.T)
    return pays.R + d * q * pays.R + d * d * stage3 + d * d * d * q * pays.R * _tail(params)


def _cf_case6_d(params: GameParams) -> Fraction:
    """Defecting from the start against enforcement opponents costs the same
    as full defection against contagious ones."""
    return _cf_alld_deviation(params)


CLOSED_FORMS: Mapping[str, Callable[[GameParams], Fraction]] = {
    "onpath-x": _cf_onpath_x,
    "alld-deviation": _cf_alld_deviation,
    "case2-c": _cf_case2_c,
    "case2-d": _cf_case2_d,
    "case3-c": _cf_case3_c,
    "case3-d": _cf_case3_d,
    "case4-c": _cf_case4_c,
    "case4-d": _cf_case4_d,
    "case5-d": _cf_case5_d,
    "case5-one-shot-c": _cf_case5_one_shot_c,
    "case5-persistent-c": _cf_case5_persistent_c,
    "case6-c": _cf_case6_c,
    "case6-d": _cf_case6_d,
}


def closed_form(name: str, params: GameParams) -> Fraction:
    """Hand-derived geometric-series value, by registry name.

    X-player forms are for X1; moderator forms take X1 as the stage-2
    partner.  At an even matching rate the labels are interchangeable.
    """
    fn = CLOSED_FORMS.get(name)
    if fn is None:
        raise GameError(f"unknown closed form: {name!r}")
    return fn(params)
