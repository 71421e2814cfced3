"""Stage game, histories, private projections, and the history grammar.

The model: two long-run players X1 and X2 meet once in an opening stage and
play a prisoner's dilemma; from stage 2 on, a third player M is matched with
X1 (probability ``match_prob``) or X2 (otherwise) and plays the same stage
game with whoever was selected. Monitoring is private: each player observes
only the stages it takes part in, plus (for an X player) whether it was
selected at all.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from itertools import product
from typing import Iterator, Union

from .numerics import as_fraction

ACTION_WILDCARD = "Z"
SELECTOR_WILDCARD = "Xz"


class Action(str, Enum):
    C = "C"
    D = "D"

    def __str__(self) -> str:
        return self.value


class PlayerId(str, Enum):
    X1 = "X1"
    X2 = "X2"
    M = "M"

    def __str__(self) -> str:
        return self.value

    @property
    def other_x(self) -> "PlayerId":
        if self is PlayerId.X1:
            return PlayerId.X2
        if self is PlayerId.X2:
            return PlayerId.X1
        raise ValueError("M has no counterpart X player")


X_PLAYERS = (PlayerId.X1, PlayerId.X2)


class GameError(ValueError):
    """Invalid game primitive (payoff ordering, parameters, malformed history)."""


class ParseError(GameError):
    """Malformed history text; carries the offending position."""

    def __init__(self, message: str, position: int) -> None:
        super().__init__(f"{message} (at position {position})")
        self.position = position


@dataclass(frozen=True)
class PayoffMatrix:
    """Symmetric prisoner's dilemma payoffs: temptation, reward, punishment, sucker."""

    T: Fraction
    R: Fraction
    P: Fraction
    S: Fraction

    def __post_init__(self) -> None:
        for name in ("T", "R", "P", "S"):
            object.__setattr__(self, name, as_fraction(getattr(self, name)))
        if not (self.T > self.R > self.P > self.S):
            raise GameError("payoff ordering T > R > P > S violated")
        if not (2 * self.R > self.T + self.S):
            raise GameError("payoff condition 2R > T + S violated")

    def payoff(self, own: Action, other: Action) -> Fraction:
        if own is Action.C:
            return self.R if other is Action.C else self.S
        return self.T if other is Action.C else self.P


#: Baseline payoffs used throughout the original analysis.
DEFAULT_PAYOFFS = PayoffMatrix(
    T=Fraction(100), R=Fraction(75), P=Fraction(45), S=Fraction(10)
)


@dataclass(frozen=True)
class GameParams:
    """Discount factor, matching probability for X1, and the stage payoffs."""

    delta: Fraction = Fraction(3, 4)
    match_prob: Fraction = Fraction(1, 2)
    payoffs: PayoffMatrix = DEFAULT_PAYOFFS

    def __post_init__(self) -> None:
        object.__setattr__(self, "delta", as_fraction(self.delta))
        object.__setattr__(self, "match_prob", as_fraction(self.match_prob))
        if not (0 < self.delta < 1):
            raise GameError("delta must satisfy 0 < delta < 1")
        if not (0 <= self.match_prob <= 1):
            raise GameError("match_prob must lie in [0, 1]")

    def selection_prob(self, player: PlayerId) -> Fraction:
        """Per-stage probability that this player is in the match from stage 2 on."""
        if player is PlayerId.M:
            return Fraction(1)
        return self.match_prob if player is PlayerId.X1 else 1 - self.match_prob


def stage_payoffs(matrix: PayoffMatrix, a1: Action, a2: Action) -> tuple[Fraction, Fraction]:
    """Payoff pair for one stage-game interaction (first mover's payoff first)."""
    return matrix.payoff(a1, a2), matrix.payoff(a2, a1)


# --------------------------------------------------------------------------
# Global histories


@dataclass(frozen=True)
class Opening:
    """Stage-1 outcome: X1's action, then X2's action."""

    a1: Action
    a2: Action


@dataclass(frozen=True)
class Match:
    """Stage-t (t >= 2) outcome: selected X player, its action, then M's action."""

    selected: PlayerId
    x_action: Action
    m_action: Action

    def __post_init__(self) -> None:
        if self.selected not in X_PLAYERS:
            raise GameError("match selection must be X1 or X2")


@dataclass(frozen=True)
class History:
    """Global play record: empty, or one Opening followed by matches in stage order."""

    opening: Union[Opening, None] = None
    matches: tuple[Match, ...] = ()

    def __post_init__(self) -> None:
        if self.opening is None and self.matches:
            raise GameError("matches require an opening")

    def __len__(self) -> int:
        """Number of completed stages."""
        return (1 if self.opening is not None else 0) + len(self.matches)

    def extended(self, match: Match) -> "History":
        if self.opening is None:
            raise GameError("cannot append a match before the opening")
        return History(self.opening, self.matches + (match,))


EMPTY_HISTORY = History()


# --------------------------------------------------------------------------
# Private histories

IDLE = "Idle"


@dataclass(frozen=True)
class OwnOpening:
    """Stage 1 as one X player saw it: own action first."""

    own: Action
    other: Action


@dataclass(frozen=True)
class Played:
    """A stage an X player was selected in: own action and M's reply."""

    own: Action
    reply: Action


@dataclass(frozen=True)
class Met:
    """A stage from M's side: opponent identity, opponent action, own action."""

    opponent: PlayerId
    opponent_action: Action
    own: Action

    def __post_init__(self) -> None:
        if self.opponent not in X_PLAYERS:
            raise GameError("M only meets X1 or X2")


XEntry = Union[OwnOpening, Played, str]  # str is the IDLE marker
PrivateEntries = tuple


@dataclass(frozen=True)
class PrivateHistory:
    """One player's own view of play so far.

    For an X owner: an OwnOpening followed by Played/IDLE entries (one per
    stage, so calendar time is observable). For M: Met entries for stages
    2 onward; M sees nothing of stage 1.
    """

    owner: PlayerId
    entries: PrivateEntries

    def __len__(self) -> int:
        return len(self.entries)


def private_projection(history: History, owner: PlayerId) -> PrivateHistory:
    """Project a global history onto what ``owner`` actually observed."""
    entries: list = []
    if owner is PlayerId.M:
        for m in history.matches:
            entries.append(Met(m.selected, m.x_action, m.m_action))
        return PrivateHistory(owner, tuple(entries))
    if history.opening is not None:
        if owner is PlayerId.X1:
            entries.append(OwnOpening(history.opening.a1, history.opening.a2))
        else:
            entries.append(OwnOpening(history.opening.a2, history.opening.a1))
    for m in history.matches:
        if m.selected is owner:
            entries.append(Played(m.x_action, m.m_action))
        else:
            entries.append(IDLE)
    return PrivateHistory(owner, tuple(entries))


# --------------------------------------------------------------------------
# Patterns (wildcards: Z over actions, Xz over the selected player)

ActPattern = Union[Action, str]  # Action or ACTION_WILDCARD
SelPattern = Union[PlayerId, str]  # X1/X2 or SELECTOR_WILDCARD


@dataclass(frozen=True)
class OpeningPattern:
    a1: ActPattern
    a2: ActPattern


@dataclass(frozen=True)
class MatchPattern:
    selected: SelPattern
    x_action: ActPattern
    m_action: ActPattern


@dataclass(frozen=True)
class HistoryPattern:
    """A history with Z/Xz wildcards; expands to the set of matching histories."""

    opening: Union[OpeningPattern, None] = None
    matches: tuple[MatchPattern, ...] = ()

    def wildcard_count(self) -> tuple[int, int]:
        """(selector wildcards, action wildcards) in the pattern."""
        sel = sum(1 for m in self.matches if m.selected == SELECTOR_WILDCARD)
        acts = 0
        if self.opening is not None:
            acts += [self.opening.a1, self.opening.a2].count(ACTION_WILDCARD)
        for m in self.matches:
            acts += [m.x_action, m.m_action].count(ACTION_WILDCARD)
        return sel, acts


def _act_options(p: ActPattern) -> tuple[Action, ...]:
    return (Action.C, Action.D) if p == ACTION_WILDCARD else (p,)


def _sel_options(p: SelPattern) -> tuple[PlayerId, ...]:
    return X_PLAYERS if p == SELECTOR_WILDCARD else (p,)


def expand_pattern(pattern: HistoryPattern) -> list[History]:
    """All concrete histories matching the pattern, in a stable deterministic order."""
    openings: list[Union[Opening, None]]
    if pattern.opening is None:
        openings = [None]
        if pattern.matches:
            raise GameError("pattern with matches requires an opening")
    else:
        openings = [
            Opening(a, b)
            for a in _act_options(pattern.opening.a1)
            for b in _act_options(pattern.opening.a2)
        ]
    per_match = [
        [
            Match(s, x, m)
            for s in _sel_options(mp.selected)
            for x in _act_options(mp.x_action)
            for m in _act_options(mp.m_action)
        ]
        for mp in pattern.matches
    ]
    out: list[History] = []
    for op in openings:
        for combo in product(*per_match):
            out.append(History(op, tuple(combo)))
    return out


def pattern_matches(pattern: HistoryPattern, history: History) -> bool:
    """True if ``history`` is one of the pattern's expansions."""
    if (pattern.opening is None) != (history.opening is None):
        return False
    if len(pattern.matches) != len(history.matches):
        return False
    if pattern.opening is not None:
        assert history.opening is not None
        if history.opening.a1 not in _act_options(pattern.opening.a1):
            return False
        if history.opening.a2 not in _act_options(pattern.opening.a2):
            return False
    for mp, m in zip(pattern.matches, history.matches):
        if m.selected not in _sel_options(mp.selected):
            return False
        if m.x_action not in _act_options(mp.x_action):
            return False
        if m.m_action not in _act_options(mp.m_action):
            return False
    return True


# --------------------------------------------------------------------------
# Grammar
#
#   history = "(" opening { ";" match } ")"
#   opening = act act
#   match   = sel act act
#   sel     = "X1" | "X2" | "Xz"
#   act     = "C" | "D" | "Z"
#
# Whitespace is ignored everywhere. Extensions beyond the base grammar:
# "()" is the empty history, and parse_observation accepts an opening-less
# body of matches as a mediator observation.


class _Scanner:
    def __init__(self, text: str) -> None:
        self.text = text
        self.pos = 0

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str) -> None:
        self.skip_ws()
        if self.peek() != ch:
            raise ParseError(f"expected '{ch}'", self.pos)
        self.pos += 1

    def read_act(self) -> ActPattern:
        self.skip_ws()
        ch = self.peek()
        if ch == "C":
            self.pos += 1
            return Action.C
        if ch == "D":
            self.pos += 1
            return Action.D
        if ch == "Z":
            self.pos += 1
            return ACTION_WILDCARD
        raise ParseError("expected action C, D, or Z", self.pos)

    def read_selector(self) -> Union[SelPattern, None]:
        """A selector, or None if the next token is not one."""
        self.skip_ws()
        if self.peek() != "X":
            return None
        if self.pos + 1 >= len(self.text):
            raise ParseError("truncated selector", self.pos)
        tag = self.text[self.pos + 1]
        self.pos += 2
        if tag == "1":
            return PlayerId.X1
        if tag == "2":
            return PlayerId.X2
        if tag == "z":
            return SELECTOR_WILDCARD
        raise ParseError("selector must be X1, X2, or Xz", self.pos - 1)

    def at_end(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)


def _read_match(sc: _Scanner) -> MatchPattern:
    sel = sc.read_selector()
    if sel is None:
        raise ParseError("expected selector X1, X2, or Xz", sc.pos)
    return MatchPattern(sel, sc.read_act(), sc.read_act())


def _parse_body(sc: _Scanner) -> HistoryPattern:
    sc.expect("(")
    if sc.peek() == ")":
        sc.pos += 1
        return HistoryPattern()
    if sc.read_selector() is not None:
        raise ParseError("history must start with an opening, not a match", sc.pos)
    opening = OpeningPattern(sc.read_act(), sc.read_act())
    matches: list[MatchPattern] = []
    while sc.peek() == ";":
        sc.pos += 1
        matches.append(_read_match(sc))
    sc.expect(")")
    if not sc.at_end():
        raise ParseError("trailing characters after history", sc.pos)
    return HistoryPattern(opening, tuple(matches))


def _is_concrete(pattern: HistoryPattern) -> bool:
    return pattern.wildcard_count() == (0, 0)


def _to_history(pattern: HistoryPattern) -> History:
    (h,) = expand_pattern(pattern)
    return h


def parse_history(text: str) -> Union[History, HistoryPattern]:
    """Parse canonical history text; a History when concrete, else a HistoryPattern."""
    pattern = _parse_body(_Scanner(text))
    return _to_history(pattern) if _is_concrete(pattern) else pattern


def parse_observation(text: str) -> PrivateHistory:
    """Parse a mediator observation: concrete matches with or without an opening.

    ``(X1CC;X2DC)`` and ``(ZZ;X1CC;X2DC)`` both denote M's record for stages
    2..3; stage 1 is unobservable to M, so a concrete opening is rejected.
    """
    sc = _Scanner(text)
    sc.expect("(")
    matches: list[MatchPattern] = []
    first = True
    while sc.peek() != ")":
        if not first:
            sc.expect(";")
        sel = sc.read_selector()
        if sel is None:
            a1, a2 = sc.read_act(), sc.read_act()
            if not first or (a1, a2) != (ACTION_WILDCARD, ACTION_WILDCARD):
                raise ParseError("observation opening must be ZZ or absent", sc.pos)
        else:
            matches.append(MatchPattern(sel, sc.read_act(), sc.read_act()))
        first = False
    sc.expect(")")
    if not sc.at_end():
        raise ParseError("trailing characters after observation", sc.pos)
    entries = []
    for mp in matches:
        if mp.selected == SELECTOR_WILDCARD:
            raise ParseError("observation requires concrete opponents", 0)
        if ACTION_WILDCARD in (mp.x_action, mp.m_action):
            raise ParseError("observation requires concrete actions", 0)
        entries.append(Met(mp.selected, mp.x_action, mp.m_action))
    return PrivateHistory(PlayerId.M, tuple(entries))


def format_history(value: Union[History, HistoryPattern]) -> str:
    """Canonical ASCII rendering; round-trips through parse_history."""
    if isinstance(value, History):
        if value.opening is None:
            return "()"
        parts = [f"{value.opening.a1}{value.opening.a2}"]
        parts.extend(
            f"{m.selected.value}{m.x_action}{m.m_action}" for m in value.matches
        )
        return "(" + ";".join(parts) + ")"
    if value.opening is None:
        return "()"
    parts = [f"{_fmt_act(value.opening.a1)}{_fmt_act(value.opening.a2)}"]
    for m in value.matches:
        sel = m.selected.value if isinstance(m.selected, PlayerId) else SELECTOR_WILDCARD
        parts.append(f"{sel}{_fmt_act(m.x_action)}{_fmt_act(m.m_action)}")
    return "(" + ";".join(parts) + ")"


def _fmt_act(a: ActPattern) -> str:
    return a.value if isinstance(a, Action) else ACTION_WILDCARD


def format_observation(obs: PrivateHistory) -> str:
    """Canonical rendering of a mediator observation, opening omitted."""
    if obs.owner is not PlayerId.M:
        raise GameError("only M observations have this rendering")
    parts = [f"{e.opponent.value}{e.opponent_action}{e.own}" for e in obs.entries]
    return "(" + ";".join(parts) + ")"


def all_histories(stages: int) -> Iterator[History]:
    """Every well-formed global history with exactly ``stages`` completed stages."""
    if stages == 0:
        yield EMPTY_HISTORY
        return
    acts = (Action.C, Action.D)
    match_space = [
        Match(s, x, m) for s in X_PLAYERS for x in acts for m in acts
    ]
    for a1 in acts:
        for a2 in acts:
            for combo in product(match_space, repeat=stages - 1):
                yield History(Opening(a1, a2), tuple(combo))
