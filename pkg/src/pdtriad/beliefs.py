"""Bayesian explanations of the moderator's observations under trembles.

Every strategy is perturbed towards the uniform mixture: with tremble scale
``e`` the prescribed action is played with probability ``1 - e/2`` and the
other action with ``e/2``.  The scale is either the base rate ``eps`` (a
fast tremble) or ``eps ** (1/eps)`` (a slow one), chosen per decision by a
scheme that looks only at the acting player's private record.

All masses are exact rationals.  ``eps ** (1/eps)`` is rational exactly when
``1/eps`` is an integer, so the exact routes insist on that; the logarithmic
route in ``separation_check`` handles the rest.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from math import log10
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

from .game import (
    IDLE,
    Action,
    GameError,
    History,
    Match,
    Met,
    Opening,
    OwnOpening,
    Played,
    PlayerId,
    PrivateHistory,
    format_history,
    private_projection,
)
from .numerics import as_fraction, compare_with_ln, power_self
from .strategies import Profile, state_after

C = Action.C
D = Action.D

FAST = "fast"
SLOW = "slow"

_CLEAN = OwnOpening(C, C)


class BeliefPrecisionError(GameError):
    """Exact masses were requested where the slow scale is irrational."""


@dataclass(frozen=True)
class TrembleScheme:
    """Which tremble scale applies at which private record.

    ``base_names`` names the strategy each seat is perturbed around;
    ``classify(owner, record)`` returns ``"fast"`` or ``"slow"``.
    """

    name: str
    base_names: Tuple[str, str, str]
    classify: Callable[[PlayerId, tuple], str]

    def base_profile(self) -> Profile:
        return Profile.from_names(*self.base_names)


def _classify_section3(owner: PlayerId, record: tuple) -> str:
    if owner is PlayerId.M or not record:
        return FAST
    return SLOW if record[0] == _CLEAN else FAST


_SLOW_RECORDS_SECTION4 = (
    (_CLEAN,),
    (_CLEAN, Played(C, C)),
)


def _classify_section4(owner: PlayerId, record: tuple) -> str:
    if owner is PlayerId.M:
        return FAST
    return SLOW if record in _SLOW_RECORDS_SECTION4 else FAST


def section3_scheme() -> TrembleScheme:
    """Contagious base; X players tremble slowly after a clean opening."""
    return TrembleScheme("section3", ("contagious",) * 3, _classify_section3)


def section4_scheme() -> TrembleScheme:
    """Enforcement base; X players tremble slowly only while their record is
    spotless (clean opening, then a smooth own match if any)."""
    return TrembleScheme("section4", ("sigma",) * 3, _classify_section4)


SCHEMES: Mapping[str, Callable[[], TrembleScheme]] = {
    "section3": section3_scheme,
    "section4": section4_scheme,
}


def tremble_scale(scheme_class: str, eps: Fraction) -> Fraction:
    if scheme_class == FAST:
        return eps
    scale = power_self(eps)
    if scale is None:
        raise BeliefPrecisionError(
            "slow scale eps**(1/eps) is irrational here; use a base rate whose "
            "reciprocal is an integer or the logarithmic comparison"
        )
    return scale


@dataclass(frozen=True)
class PerturbedProfile:
    """Base profile plus tremble scheme at a fixed base rate."""

    profile: Profile
    scheme: TrembleScheme
    eps: Fraction

    def __post_init__(self):
        if not (0 < self.eps < 1):
            raise GameError("tremble rate must lie strictly between 0 and 1")

    def prescribed(self, player: PlayerId, record: tuple, opponent: Optional[PlayerId] = None) -> Action:
        automaton = self.profile.automaton(player)
        return automaton.act(state_after(automaton, record), opponent)

    def action_prob(
        self,
        player: PlayerId,
        record: tuple,
        action: Action,
        opponent: Optional[PlayerId] = None,
    ) -> Fraction:
        scale = tremble_scale(self.scheme.classify(player, record), self.eps)
        if action is self.prescribed(player, record, opponent):
            return 1 - scale / 2
        return scale / 2


@dataclass(frozen=True)
class Explanation:
    """One full history consistent with the observation."""

    history: History
    mass: Fraction
    first_deviation_stage: Optional[int]
    fast_trembles: int
    slow_trembles: int

    @property
    def order(self) -> Union[int, str]:
        if self.slow_trembles:
            return "1/eps-class"
        return self.fast_trembles


@dataclass(frozen=True)
class PosteriorReport:
    observation: PrivateHistory
    eps: Fraction
    scheme_name: str
    explanations: Tuple[Explanation, ...]
    stage_masses: Mapping[Optional[int], Fraction]

    @property
    def dominant_stage(self) -> Optional[int]:
        return max(self.stage_masses, key=lambda k: (self.stage_masses[k], k is None))

    @property
    def dominant_mass(self) -> Fraction:
        return self.stage_masses[self.dominant_stage]


def _candidate_histories(observation: PrivateHistory) -> List[History]:
    matches = tuple(
        Match(entry.opponent, entry.opponent_action, entry.own)
        for entry in observation.entries
    )
    return [History(Opening(a1, a2), matches) for a1, a2 in product((C, D), (C, D))]


def _weigh_history(
    perturbed: PerturbedProfile, history: History, match_prob: Fraction
) -> Explanation:
    mass = Fraction(1)
    fast = slow = 0
    first_dev: Optional[int] = None

    def account(player: PlayerId, record: tuple, action: Action, stage: int, opponent=None):
        nonlocal mass, fast, slow, first_dev
        mass *= perturbed.action_prob(player, record, action, opponent)
        if action is not perturbed.prescribed(player, record, opponent):
            if perturbed.scheme.classify(player, record) == FAST:
                fast += 1
            else:
                slow += 1
            if first_dev is None or stage < first_dev:
                first_dev = stage

    opening = history.opening
    account(PlayerId.X1, (), opening.a1, 1)
    account(PlayerId.X2, (), opening.a2, 1)
    x_records = {
        PlayerId.X1: (OwnOpening(opening.a1, opening.a2),),
        PlayerId.X2: (OwnOpening(opening.a2, opening.a1),),
    }
    m_record: tuple = ()
    for stage, match in enumerate(history.matches, start=2):
        selected = match.selected
        mass *= match_prob if selected is PlayerId.X1 else 1 - match_prob
        account(selected, x_records[selected], match.x_action, stage)
        account(PlayerId.M, m_record, match.m_action, stage, opponent=selected)
        x_records[selected] = x_records[selected] + (Played(match.x_action, match.m_action),)
        other = selected.other_x
        x_records[other] = x_records[other] + (IDLE,)
        m_record = m_record + (Met(selected, match.x_action, match.m_action),)
    return Explanation(history, mass, first_dev, fast, slow)


def posterior(
    observation: PrivateHistory,
    eps,
    scheme: TrembleScheme,
    match_prob: Fraction = Fraction(1, 2),
) -> PosteriorReport:
    """Exact posterior over the openings consistent with a moderator record.

    The observation fixes every match; only the opening is hidden, so there
    are exactly four candidate histories.  Masses are normalized to sum to
    one exactly.
    """
    if observation.owner is not PlayerId.M:
        raise GameError("posteriors are computed for moderator observations")
    eps = as_fraction(eps)
    perturbed = PerturbedProfile(scheme.base_profile(), scheme, eps)
    raw = [_weigh_history(perturbed, h, Fraction(match_prob)) for h in _candidate_histories(observation)]
    total = sum(e.mass for e in raw)
    if total == 0:
        raise GameError("observation has probability zero, which trembles should prevent")
    explanations = tuple(
        sorted(
            (
                Explanation(e.history, e.mass / total, e.first_deviation_stage, e.fast_trembles, e.slow_trembles)
                for e in raw
            ),
            key=lambda e: (-e.mass, format_history(e.history)),
        )
    )
    stage_masses: Dict[Optional[int], Fraction] = {}
    for e in explanations:
        stage_masses[e.first_deviation_stage] = (
            stage_masses.get(e.first_deviation_stage, Fraction(0)) + e.mass
        )
    return PosteriorReport(observation, eps, scheme.name, explanations, stage_masses)


# ---------------------------------------------------------------------------
# limit behaviour along a sequence of tremble rates


@dataclass(frozen=True)
class LimitRow:
    eps: Fraction
    dominant_stage: Optional[int]
    dominant_mass: Fraction


@dataclass(frozen=True)
class LimitReport:
    rows: Tuple[LimitRow, ...]
    stable: bool
    increasing: bool

    @property
    def status(self) -> str:
        return "stable" if self.stable and self.increasing else "unstable"


def _classify_rows(rows: Sequence[LimitRow]) -> Tuple[bool, bool]:
    stages = {row.dominant_stage for row in rows}
    stable = len(stages) <= 1
    masses = [row.dominant_mass for row in rows]
    increasing = all(a <= b for a, b in zip(masses, masses[1:]))
    return stable, increasing


def limit_check(
    observation: PrivateHistory,
    scheme: TrembleScheme,
    eps_sequence: Sequence,
    match_prob: Fraction = Fraction(1, 2),
) -> LimitReport:
    """Track the dominant explanation class as the tremble rate shrinks.

    The rates should be listed from largest to smallest; a healthy limit
    keeps the same dominant class with mass approaching one.
    """
    if not eps_sequence:
        raise GameError("need at least one tremble rate")
    rows = []
    for eps in eps_sequence:
        report = posterior(observation, eps, scheme, match_prob)
        rows.append(LimitRow(as_fraction(eps), report.dominant_stage, report.dominant_mass))
    stable, increasing = _classify_rows(rows)
    return LimitReport(tuple(rows), stable, increasing)


# ---------------------------------------------------------------------------
# scale separation


@dataclass(frozen=True)
class SeparationReport:
    k: int
    eps: Fraction
    tolerance: Fraction
    ok: bool
    route: str  # "exact" | "logarithmic"
    log10_ratio: float


def separation_check(k: int, eps, tolerance: Fraction = Fraction(1, 10**9)) -> SeparationReport:
    """Confirm one slow tremble stays below ``k`` fast ones put together.

    Checks ``eps**(1/eps) / eps**k < tolerance``.  With an integer ``1/eps``
    the ratio is an exact rational; otherwise the comparison runs through
    validated logarithm intervals.
    """
    if k < 0:
        raise GameError("k must be nonnegative")
    eps = as_fraction(eps)
    if not (0 < eps < 1):
        raise GameError("tremble rate must lie strictly between 0 and 1")
    tolerance = as_fraction(tolerance)
    exponent = 1 / eps - k  # ratio = eps ** exponent
    log_ratio = float(exponent) * log10(float(eps))
    slow = power_self(eps)
    if slow is not None:
        ratio = slow / eps**k
        return SeparationReport(k, eps, tolerance, ratio < tolerance, "exact", log_ratio)
    ok = compare_with_ln(exponent, eps, tolerance)
    return SeparationReport(k, eps, tolerance, ok, "logarithmic", log_ratio)
