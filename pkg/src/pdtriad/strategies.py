"""Strategy automata over private records.

Every strategy is a deterministic automaton driven by one player's private
observations.  X players observe the opening and, in stages where they are
matched, their own match outcome; the moderator observes one match per stage
from stage 2 on.  Automaton states must be hashable because the payoff
engine merges repeated states when it builds the joint chain.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

from .game import (
    IDLE,
    Action,
    GameError,
    GameParams,
    History,
    HistoryPattern,
    Match,
    MatchPattern,
    Met,
    Opening,
    OpeningPattern,
    OwnOpening,
    Played,
    PlayerId,
    PrivateHistory,
    all_histories,
    expand_pattern,
    parse_history,
    private_projection,
)

Observation = Union[OwnOpening, Played, Met, str]
StateKey = object

C = Action.C
D = Action.D


@dataclass(frozen=True)
class GrimState:
    """Absorbing punishment ledger: whom the owner now defects against.

    The set only ever grows.  An empty set means the owner still cooperates
    with everyone.
    """

    defect_against: frozenset = frozenset()

    def flag(self, *players: PlayerId) -> "GrimState":
        extra = frozenset(players)
        if extra <= self.defect_against:
            return self
        return GrimState(self.defect_against | extra)


def _grim_step_m(state: GrimState, obs: Met) -> GrimState:
    # An opponent's defection spreads punishment to everyone only when it is
    # news; a flagged opponent defecting back is the expected retaliation.
    if obs.opponent_action is D and obs.opponent not in state.defect_against:
        state = state.flag(PlayerId.X1, PlayerId.X2)
    if obs.own is D:
        state = state.flag(obs.opponent)
    return state


def _grim_step_x(state: GrimState, obs: Observation, other: PlayerId) -> GrimState:
    if obs is IDLE:
        return state
    if not isinstance(obs, Played):
        raise GameError("matched observation expected after the opening")
    if obs.reply is D and PlayerId.M not in state.defect_against:
        state = state.flag(PlayerId.M, other)
    if obs.own is D:
        state = state.flag(PlayerId.M)
    return state


@dataclass
class StrategyAutomaton:
    """Deterministic single-player strategy.

    ``act(state, opponent)`` returns the action at a decision point; X players
    ignore ``opponent`` (their target is fixed by the stage), the moderator
    requires it.  ``step(state, observation)`` consumes exactly one stage of
    private information, including idle stages for X players.
    """

    owner: PlayerId
    name: str
    initial: StateKey
    _act: Callable[[StateKey, Optional[PlayerId]], Action]
    _step: Callable[[StateKey, Observation], StateKey]

    def act(self, state: StateKey, opponent: Optional[PlayerId] = None) -> Action:
        return self._act(state, opponent)

    def step(self, state: StateKey, observation: Observation) -> StateKey:
        return self._step(state, observation)


def state_after(automaton: StrategyAutomaton, entries: Sequence[Observation]) -> StateKey:
    state = automaton.initial
    for entry in entries:
        state = automaton.step(state, entry)
    return state


# ---------------------------------------------------------------------------
# contagious strategy


_START = ("start",)


def contagious(owner: PlayerId) -> StrategyAutomaton:
    """Cooperate until a defection is seen or committed, then punish.

    A defection by the current opponent triggers defection against everyone;
    the owner's own defection only marks the opponent it was played against.
    """

    if owner is PlayerId.M:

        def act(state: StateKey, opponent: Optional[PlayerId]) -> Action:
            if opponent is None:
                raise GameError("moderator decisions need an opponent")
            return D if opponent in state.defect_against else C

        def step(state: StateKey, obs: Observation) -> StateKey:
            if not isinstance(obs, Met):
                raise GameError("moderator observes match entries only")
            return _grim_step_m(state, obs)

        return StrategyAutomaton(owner, "contagious", GrimState(), act, step)

    other = owner.other_x

    def act(state: StateKey, opponent: Optional[PlayerId]) -> Action:
        if state == _START:
            return C
        return D if PlayerId.M in state.defect_against else C

    def step(state: StateKey, obs: Observation) -> StateKey:
        if state == _START:
            if not isinstance(obs, OwnOpening):
                raise GameError("first observation must be the opening")
            flags = GrimState()
            if obs.other is D:
                flags = flags.flag(PlayerId.M, other)
            if obs.own is D:
                flags = flags.flag(other)
            return flags
        return _grim_step_x(state, obs, other)

    return StrategyAutomaton(owner, "contagious", _START, act, step)


# ---------------------------------------------------------------------------
# enforcement strategy ("sigma" in the registry)


_CLEAN = OwnOpening(C, C)

# 3-entry records (after the opening) that still prescribe cooperation at the
# owner's fourth stage: fully smooth play, one idle gap, or a completed
# comeback defection after sitting out the second stage.
_X_STAGE4_COOPERATIVE = (
    (Played(C, C), Played(C, C)),
    (Played(C, C), IDLE),
    (IDLE, Played(D, C)),
    (IDLE, IDLE),
)


def _x_record_act(entries: tuple) -> Action:
    n = len(entries)
    if n == 0:
        return C
    if entries[0] != _CLEAN:
        return D
    if n == 1:
        return C
    if n == 2:
        return C if entries[1] == Played(C, C) else D
    return C if (entries[1], entries[2]) in _X_STAGE4_COOPERATIVE else D


def _x_seed(owner: PlayerId, entries: tuple) -> GrimState:
    """Collapse an X player's four-stage record into a punishment ledger."""
    other = owner.other_x
    opening = entries[0]
    flags = set()
    contagion = opening.other is D
    if opening.own is D:
        # A first-stage defection never returns to a cooperative row, so the
        # punishment regime against the moderator is permanent as well.
        flags.update((other, PlayerId.M))
    for stage, entry in zip((2, 3, 4), entries[1:]):
        if entry is IDLE:
            continue
        if entry.reply is D:
            contagion = True
        if entry.own is D:
            comeback = stage == 3 and entries[1] is IDLE and opening == _CLEAN
            if not comeback:
                flags.add(PlayerId.M)
    if contagion:
        flags.update((PlayerId.M, other))
    return GrimState(frozenset(flags))


def _m_stage3_act(entry: Met, opponent: PlayerId) -> Action:
    if entry.opponent_action is not C:
        return D
    if entry.own is C or opponent is not entry.opponent:
        return C
    return D


def _m_stage4_act(e2: Met, e3: Met, opponent: PlayerId) -> Action:
    met2 = e2.opponent is opponent
    met3 = e3.opponent is opponent
    if met2 and met3:
        ok = (e2.opponent_action, e2.own) == (C, C) and (e3.opponent_action, e3.own) == (C, C)
    elif met2:
        ok = (e2.opponent_action, e2.own) == (C, C)
    elif met3:
        ok = e2.opponent_action is C and (e3.opponent_action, e3.own) == (D, C)
    else:
        ok = e2.opponent_action is C and e3.opponent_action is C
    return C if ok else D


def _m_stage4_reference(e2: Met, e3: Met, opponent: PlayerId) -> Action:
    """Fourth-stage action the opponent's own record prescribes, reconstructed
    from what the moderator saw, assuming play before the deviation in
    question was conforming."""
    met2 = e2.opponent is opponent
    met3 = e3.opponent is opponent
    if met2 and met3:
        ok = (e2.opponent_action, e2.own) == (C, C) and (e3.opponent_action, e3.own) == (C, C)
    elif met2:
        ok = (e2.opponent_action, e2.own) == (C, C)
    elif met3:
        ok = (e3.opponent_action, e3.own) == (D, C)
    else:
        ok = True
    return C if ok else D


def _m_seed(entries: tuple) -> GrimState:
    """Collapse the moderator's three-match record into a punishment ledger.

    Own defections mark the opponent they were played against.  An opponent
    action that the reconstruction cannot explain as conforming play triggers
    defection against both X players.  The comeback defection of a newcomer
    after a clean second stage is the one expected defection.
    """
    e2, e3, e4 = entries
    flags = {entry.opponent for entry in entries if entry.own is D}
    contagion = e2.opponent_action is D
    if e3.opponent is e2.opponent:
        ref3 = C if (e2.opponent_action is C and e2.own is C) else D
        if e3.opponent_action is not ref3:
            contagion = True
    elif e2.opponent_action is C and e3.opponent_action is C:
        # the newcomer declined the expected comeback defection
        contagion = True
    if e4.opponent_action is not _m_stage4_reference(e2, e3, e4.opponent):
        contagion = True
    if contagion:
        flags = {PlayerId.X1, PlayerId.X2}
    return GrimState(frozenset(flags))


def enforcement(owner: PlayerId) -> StrategyAutomaton:
    """Record-keeping strategy that tolerates one comeback defection.

    The first four stages are driven by explicit record tables; afterwards the
    record collapses into a punishment ledger and play continues as under the
    contagious strategy.
    """

    if owner is PlayerId.M:

        def act(state: StateKey, opponent: Optional[PlayerId]) -> Action:
            if opponent is None:
                raise GameError("moderator decisions need an opponent")
            if isinstance(state, GrimState):
                return D if opponent in state.defect_against else C
            entries = state[1]
            n = len(entries)
            if n == 0:
                return C
            if n == 1:
                return _m_stage3_act(entries[0], opponent)
            return _m_stage4_act(entries[0], entries[1], opponent)

        def step(state: StateKey, obs: Observation) -> StateKey:
            if not isinstance(obs, Met):
                raise GameError("moderator observes match entries only")
            if isinstance(state, GrimState):
                return _grim_step_m(state, obs)
            entries = state[1] + (obs,)
            if len(entries) == 3:
                return _m_seed(entries)
            return ("rec", entries)

        return StrategyAutomaton(owner, "sigma", ("rec", ()), act, step)

    other = owner.other_x

    def act(state: StateKey, opponent: Optional[PlayerId]) -> Action:
        if isinstance(state, GrimState):
            return D if PlayerId.M in state.defect_against else C
        return _x_record_act(state[1])

    def step(state: StateKey, obs: Observation) -> StateKey:
        if isinstance(state, GrimState):
            return _grim_step_x(state, obs, other)
        entries = state[1] + (obs,)
        if len(entries) == 1 and not isinstance(obs, OwnOpening):
            raise GameError("first observation must be the opening")
        if len(entries) == 4:
            return _x_seed(owner, entries)
        return ("rec", entries)

    return StrategyAutomaton(owner, "sigma", ("rec", ()), act, step)


# ---------------------------------------------------------------------------
# auxiliary strategies used by the case analysis


def all_defect(owner: PlayerId) -> StrategyAutomaton:
    state = ("all-d",)

    def act(_state: StateKey, _opponent: Optional[PlayerId]) -> Action:
        return D

    def step(_state: StateKey, _obs: Observation) -> StateKey:
        return state

    return StrategyAutomaton(owner, "all-d", state, act, step)


def persistent_cooperation(owner: PlayerId) -> StrategyAutomaton:
    """X strategy that keeps cooperating after a bad opening.

    After any opening other than mutual cooperation it plays C in every match
    until it has sat out a stage or the moderator has defected against it,
    and D from then on.  After a mutually cooperative opening it behaves like
    the contagious strategy.  States: start, ("coop",), ("sour",), GrimState.
    """

    if owner is PlayerId.M:
        raise GameError("persistent cooperation is an X-player strategy")
    other = owner.other_x

    def act(state: StateKey, opponent: Optional[PlayerId]) -> Action:
        if state == _START or state == ("coop",):
            return C
        if state == ("sour",):
            return D
        return D if PlayerId.M in state.defect_against else C

    def step(state: StateKey, obs: Observation) -> StateKey:
        if state == _START:
            if not isinstance(obs, OwnOpening):
                raise GameError("first observation must be the opening")
            if obs != _CLEAN:
                return ("coop",)
            return GrimState()
        if state == ("coop",):
            if obs is IDLE or (isinstance(obs, Played) and obs.reply is D):
                return ("sour",)
            return state
        if state == ("sour",):
            return state
        return _grim_step_x(state, obs, other)

    return StrategyAutomaton(owner, "persistent-c-case5", _START, act, step)


def constant_split(actions: Mapping[PlayerId, Action]) -> StrategyAutomaton:
    """Moderator strategy with a fixed action per opponent, forever."""
    fixed = dict(actions)
    if set(fixed) != {PlayerId.X1, PlayerId.X2}:
        raise GameError("constant split needs an action for each X player")
    state = ("split", fixed[PlayerId.X1], fixed[PlayerId.X2])

    def act(_state: StateKey, opponent: Optional[PlayerId]) -> Action:
        if opponent is None:
            raise GameError("moderator decisions need an opponent")
        return fixed[opponent]

    def step(_state: StateKey, _obs: Observation) -> StateKey:
        return state

    return StrategyAutomaton(PlayerId.M, "constant-split", state, act, step)


STRATEGIES: Mapping[str, Callable[[PlayerId], StrategyAutomaton]] = {
    "contagious": contagious,
    "sigma": enforcement,
    "all-d": all_defect,
    "persistent-c-case5": persistent_cooperation,
}


@dataclass(frozen=True)
class Profile:
    """One automaton per seat."""

    x1: StrategyAutomaton
    x2: StrategyAutomaton
    m: StrategyAutomaton

    def __post_init__(self):
        for seat, automaton in (
            (PlayerId.X1, self.x1),
            (PlayerId.X2, self.x2),
            (PlayerId.M, self.m),
        ):
            if automaton.owner is not seat:
                raise GameError(f"automaton for seat {seat.value} is owned by {automaton.owner.value}")

    def automaton(self, player: PlayerId) -> StrategyAutomaton:
        if player is PlayerId.X1:
            return self.x1
        if player is PlayerId.X2:
            return self.x2
        return self.m

    def with_player(self, player: PlayerId, automaton: StrategyAutomaton) -> "Profile":
        if player is PlayerId.X1:
            return Profile(automaton, self.x2, self.m)
        if player is PlayerId.X2:
            return Profile(self.x1, automaton, self.m)
        return Profile(self.x1, self.x2, automaton)

    @classmethod
    def from_names(cls, x1: str = "sigma", x2: str = "sigma", m: str = "sigma") -> "Profile":
        autos = []
        for seat, name in ((PlayerId.X1, x1), (PlayerId.X2, x2), (PlayerId.M, m)):
            factory = STRATEGIES.get(name)
            if factory is None:
                raise GameError(f"unknown strategy name: {name!r}")
            autos.append(factory(seat))
        return cls(*autos)


def sigma_profile() -> Profile:
    return Profile.from_names("sigma", "sigma", "sigma")


def contagious_profile() -> Profile:
    return Profile.from_names("contagious", "contagious", "contagious")


# ---------------------------------------------------------------------------
# deviation plans


@dataclass(frozen=True)
class DeviationPlan:
    """One-player deviation: where it starts and what it does.

    ``trigger`` is a pattern over full histories; the plan fires the first
    time the deviator is at a decision point whose private record matches the
    projection of some expansion of the pattern.  ``overrides`` assigns
    explicit actions to stage offsets 0, 1, ... from the trigger stage;
    offsets where an X deviator sits idle are skipped.  Once the overrides
    are exhausted the ``continuation`` takes over: ``conform`` returns to the
    base strategy (fed the true private record throughout), ``all-d`` defects
    forever.
    """

    player: PlayerId
    trigger: Union[History, HistoryPattern]
    overrides: tuple = ()
    continuation: str = "conform"

    def __post_init__(self):
        if self.continuation not in ("conform", "all-d"):
            raise GameError(f"unknown continuation: {self.continuation!r}")
        for action in self.overrides:
            if not isinstance(action, Action):
                raise GameError("overrides must be actions")


def plan_from_mapping(data: Mapping) -> DeviationPlan:
    try:
        player = PlayerId(data["player"])
        trigger = data["trigger"]
        overrides = tuple(Action(a) for a in data.get("overrides", ()))
        continuation = data.get("continuation", "conform")
    except (KeyError, ValueError) as exc:
        raise GameError(f"bad deviation plan: {exc}") from None
    if isinstance(trigger, str):
        trigger = parse_history(trigger)
    return DeviationPlan(player, trigger, overrides, continuation)


def plan_to_mapping(plan: DeviationPlan) -> dict:
    from .game import format_history

    return {
        "player": plan.player.value,
        "trigger": format_history(plan.trigger),
        "overrides": [a.value for a in plan.overrides],
        "continuation": plan.continuation,
    }


def _trigger_expansions(trigger: Union[History, HistoryPattern]) -> tuple:
    if isinstance(trigger, History):
        return (trigger,)
    return tuple(expand_pattern(trigger))


def trigger_records(plan: DeviationPlan) -> frozenset:
    """Private records (entry tuples) at which the plan fires."""
    records = set()
    for history in _trigger_expansions(plan.trigger):
        records.add(private_projection(history, plan.player).entries)
    return frozenset(records)


def trigger_reachable(plan: DeviationPlan, base: StrategyAutomaton) -> bool:
    """Whether some trigger record is consistent with the deviator having
    followed the base strategy up to the trigger.  Other players' actions are
    unconstrained."""
    if base.owner is not plan.player:
        raise GameError("reachability is judged against the deviator's base strategy")
    for history in _trigger_expansions(plan.trigger):
        projection = private_projection(history, plan.player)
        state = base.initial
        consistent = True
        for entry in projection.entries:
            if entry is IDLE:
                state = base.step(state, entry)
                continue
            if isinstance(entry, Met):
                prescribed = base.act(state, entry.opponent)
            else:
                prescribed = base.act(state)
            if prescribed is not entry.own:
                consistent = False
                break
            state = base.step(state, entry)
        if consistent:
            return True
    return False


def _is_decision(owner: PlayerId, obs: Observation) -> bool:
    if owner is PlayerId.M:
        return isinstance(obs, Met)
    return isinstance(obs, (OwnOpening, Played))


def apply_deviation(base: StrategyAutomaton, plan: DeviationPlan) -> StrategyAutomaton:
    """Compose a base strategy with a deviation plan.

    The composite follows the base strategy, fires the plan at the first
    matching decision point, plays out the overrides, then hands control to
    the continuation.  States collapse back onto the base automaton as soon
    as the trigger can no longer fire, so the composite stays finite.
    """
    if base.owner is not plan.player:
        raise GameError("deviation plan and base strategy must share an owner")
    owner = plan.player
    records = trigger_records(plan)
    max_len = max((len(r) for r in records), default=0)
    overrides = plan.overrides
    conform = plan.continuation == "conform"

    def plan_action(offset: int, base_state: StateKey, opponent: Optional[PlayerId]) -> Action:
        if offset < len(overrides):
            return overrides[offset]
        if conform:
            return base.act(base_state, opponent)
        return D

    def act(state: StateKey, opponent: Optional[PlayerId]) -> Action:
        tag = state[0]
        if tag == "armed":
            _, base_state, record = state
            if record in records:
                return plan_action(0, base_state, opponent)
            return base.act(base_state, opponent)
        if tag == "fired":
            return plan_action(state[2], state[1], opponent)
        if tag == "base":
            return base.act(state[1], opponent)
        return D  # absorbed into all-d

    def _collapse(offset: int, base_state: StateKey) -> StateKey:
        if offset < len(overrides):
            return ("fired", base_state, offset)
        if conform:
            return ("base", base_state)
        return ("all-d",)

    def step(state: StateKey, obs: Observation) -> StateKey:
        tag = state[0]
        if tag == "all-d":
            return state
        base_next = base.step(state[1], obs)
        if tag == "armed":
            _, _base_state, record = state
            if record in records and _is_decision(owner, obs):
                return _collapse(1, base_next)
            new_record = record + (obs,)
            if len(new_record) <= max_len and any(
                r[: len(new_record)] == new_record for r in records
            ):
                return ("armed", base_next, new_record)
            return ("base", base_next)
        if tag == "fired":
            return _collapse(state[2] + 1, base_next)
        return ("base", base_next)

    initial: StateKey = ("armed", base.initial, ()) if records else ("base", base.initial)

    name = f"{base.name}+dev[{','.join(a.value for a in overrides)}|{plan.continuation}]"
    return StrategyAutomaton(owner, name, initial, act, step)


# ---------------------------------------------------------------------------
# conforming play and measurability


def play_stage(profile: Profile, states: tuple, history: History, selected: PlayerId) -> tuple:
    """Advance one matched stage; returns (history, states)."""
    m_state, x1_state, x2_state = states
    x_auto = profile.automaton(selected)
    x_state = x1_state if selected is PlayerId.X1 else x2_state
    x_action = x_auto.act(x_state)
    m_action = profile.m.act(m_state, selected)
    match = Match(selected, x_action, m_action)
    new_history = history.extended(match)
    m_next = profile.m.step(m_state, Met(selected, x_action, m_action))
    if selected is PlayerId.X1:
        x1_next = profile.x1.step(x1_state, Played(x_action, m_action))
        x2_next = profile.x2.step(x2_state, IDLE)
    else:
        x1_next = profile.x1.step(x1_state, IDLE)
        x2_next = profile.x2.step(x2_state, Played(x_action, m_action))
    return new_history, (m_next, x1_next, x2_next)


def play_opening(profile: Profile) -> tuple:
    """Play stage 1; returns (history, states)."""
    a1 = profile.x1.act(profile.x1.initial)
    a2 = profile.x2.act(profile.x2.initial)
    opening = Opening(a1, a2)
    x1_state = profile.x1.step(profile.x1.initial, OwnOpening(a1, a2))
    x2_state = profile.x2.step(profile.x2.initial, OwnOpening(a2, a1))
    return History(opening, ()), (profile.m.initial, x1_state, x2_state)


def on_path_histories(profile: Profile, stages: int) -> list:
    """All histories of exactly ``stages`` stages reachable under the profile
    (every matching sequence, conforming actions)."""
    if stages < 1:
        return [History(None, ())]
    history, states = play_opening(profile)
    frontier = [(history, states)]
    for _stage in range(2, stages + 1):
        nxt = []
        for hist, sts in frontier:
            for selected in (PlayerId.X1, PlayerId.X2):
                nxt.append(play_stage(profile, sts, hist, selected))
        frontier = nxt
    return [hist for hist, _ in frontier]


def action_map(automaton: StrategyAutomaton):
    """Lift an automaton to a function of full histories.

    The result maps (history, opponent) to the action the automaton takes at
    the next stage after ``history``; histories with the same private
    projection always map to the same action by construction.
    """

    def mapped(history: History, opponent: Optional[PlayerId] = None) -> Action:
        projection = private_projection(history, automaton.owner)
        return automaton.act(state_after(automaton, projection.entries), opponent)

    return mapped


@dataclass(frozen=True)
class MeasurabilityViolation:
    stage: int
    opponent: Optional[PlayerId]
    history_a: History
    history_b: History
    action_a: Action
    action_b: Action


def check_measurability(
    mapped: Callable[[History, Optional[PlayerId]], Action],
    owner: PlayerId,
    horizon: int = 5,
) -> list:
    """Exhaustively verify that a full-history action map only depends on the
    owner's private record.  Returns all violating history pairs up to the
    horizon (empty list = measurable)."""
    violations = []
    for stage in range(1, horizon + 1):
        if owner is PlayerId.M and stage == 1:
            continue
        opponents = (PlayerId.X1, PlayerId.X2) if owner is PlayerId.M else (None,)
        for opponent in opponents:
            seen = {}
            for history in all_histories(stage - 1):
                key = private_projection(history, owner).entries
                action = mapped(history, opponent)
                if key in seen:
                    first_history, first_action = seen[key]
                    if first_action is not action:
                        violations.append(
                            MeasurabilityViolation(
                                stage, opponent, first_history, history, first_action, action
                            )
                        )
                else:
                    seen[key] = (history, action)
    return violations
