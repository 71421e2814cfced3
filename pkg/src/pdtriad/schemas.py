"""Request models and JSON serialization for the service layer.

Requests carry rationals as strings ("3/4") or integers; decimal floats are
rejected on purpose, the whole pipeline is exact.  Responses render every
rational as {"num", "den", "decimal"} and carry a top-level schema_version.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Dict, List, Literal, Optional, Sequence, Union

from pydantic import BaseModel, Field, field_validator

from .beliefs import (
    LimitReport,
    PosteriorReport,
    SeparationReport,
)
from .equilibrium import (
    CaseReport,
    EquilibriumReport,
    SearchFinding,
    SearchReport,
    ThresholdReport,
)
from .game import (
    GameError,
    GameParams,
    PayoffMatrix,
    PlayerId,
    format_history,
    format_observation,
)
from .numerics import parse_rational, rational_json
from .payoff import (
    PLAYER_ORDER,
    SimulationReport,
    TruncationBracket,
)
from .strategies import DeviationPlan, Profile, plan_from_mapping, plan_to_mapping

SCHEMA_VERSION = "1"

RationalIn = Union[int, str]


def _to_fraction(value: RationalIn, field: str) -> Fraction:
    try:
        if isinstance(value, bool):
            raise GameError("booleans are not numbers")
        if isinstance(value, int):
            return Fraction(value)
        return parse_rational(value)
    except GameError as exc:
        raise ValueError(f"{field}: {exc}") from None


class ParamsModel(BaseModel):
    delta: RationalIn = "3/4"
    match_prob: RationalIn = "1/2"
    T: RationalIn = 100
    R: RationalIn = 75
    P: RationalIn = 45
    S: RationalIn = 10

    def to_params(self) -> GameParams:
        payoffs = self.to_payoffs()
        return GameParams(
            delta=_to_fraction(self.delta, "delta"),
            match_prob=_to_fraction(self.match_prob, "match_prob"),
            payoffs=payoffs,
        )

    def to_payoffs(self) -> PayoffMatrix:
        return PayoffMatrix(
            T=_to_fraction(self.T, "T"),
            R=_to_fraction(self.R, "R"),
            P=_to_fraction(self.P, "P"),
            S=_to_fraction(self.S, "S"),
        )


class ProfileModel(BaseModel):
    x1: str = "sigma"
    x2: str = "sigma"
    m: str = "sigma"

    def to_profile(self) -> Profile:
        return Profile.from_names(self.x1, self.x2, self.m)


class DeviationModel(BaseModel):
    player: str
    trigger: str
    overrides: List[str] = Field(default_factory=list)
    continuation: str = "conform"

    def to_plan(self) -> DeviationPlan:
        return plan_from_mapping(self.model_dump())


class PayoffRequest(BaseModel):
    params: ParamsModel = Field(default_factory=ParamsModel)
    profile: ProfileModel = Field(default_factory=ProfileModel)
    deviation: Optional[DeviationModel] = None
    horizon: Optional[int] = Field(default=None, ge=1, le=10000)
    closed_form: Optional[str] = None


class CheckRequest(BaseModel):
    params: ParamsModel = Field(default_factory=ParamsModel)
    case: Union[Literal["all"], int] = "all"
    search_depth: int = Field(default=3, ge=1, le=6)


class ThresholdRequest(BaseModel):
    params: ParamsModel = Field(default_factory=ParamsModel)
    tolerance: RationalIn = "1/1000000000"


class BeliefsRequest(BaseModel):
    mode: Literal["posterior", "limit", "separation"] = "posterior"
    observe: Optional[str] = None
    scheme: Literal["section3", "section4"] = "section4"
    eps: Optional[RationalIn] = None
    eps_sequence: Optional[List[RationalIn]] = None
    k: Optional[int] = Field(default=None, ge=0)
    tolerance: RationalIn = "1/1000000000"
    match_prob: RationalIn = "1/2"


class SimulateRequest(BaseModel):
    params: ParamsModel = Field(default_factory=ParamsModel)
    profile: ProfileModel = Field(default_factory=ProfileModel)
    deviation: Optional[DeviationModel] = None
    seed: int = 0
    horizon: int = Field(default=60, ge=1, le=100000)
    runs: int = Field(default=10000, ge=2, le=10**7)

    @field_validator("seed")
    @classmethod
    def _seed_nonnegative(cls, v: int) -> int:
        if v < 0:
            raise ValueError("seed must be nonnegative")
        return v


# ---------------------------------------------------------------------------
# serialization


def _rat(value: Fraction) -> dict:
    return rational_json(value)


def params_json(params: GameParams) -> dict:
    return {
        "delta": _rat(params.delta),
        "match_prob": _rat(params.match_prob),
        "payoffs": {
            "T": _rat(params.payoffs.T),
            "R": _rat(params.payoffs.R),
            "P": _rat(params.payoffs.P),
            "S": _rat(params.payoffs.S),
        },
    }


def values_json(values: Sequence[Fraction]) -> dict:
    return {player.value: _rat(values[i]) for i, player in enumerate(PLAYER_ORDER)}


def truncation_json(brackets: Dict[PlayerId, TruncationBracket]) -> dict:
    out = {}
    for player, br in brackets.items():
        out[player.value] = {
            "core": _rat(br.core),
            "lower": _rat(br.lower),
            "upper": _rat(br.upper),
            "width": _rat(br.width),
        }
    return {"horizon": next(iter(brackets.values())).horizon, "players": out}


def threshold_json(report: ThresholdReport) -> dict:
    out = {
        "schema_version": SCHEMA_VERSION,
        "status": report.status,
        "tolerance": _rat(report.tolerance),
    }
    if report.status == "ok":
        a, b, c = report.quadratic
        out.update(
            {
                "lower": _rat(report.lower),
                "upper": _rat(report.upper),
                "width": _rat(report.upper - report.lower),
                "rendered": report.rendered,
                "gain_at_lower": _rat(report.gain_at_lower),
                "gain_at_upper": _rat(report.gain_at_upper),
                "quadratic": {"a": _rat(a), "b": _rat(b), "c": _rat(c)},
                "quadratic_sign_change": report.quadratic_sign_change,
            }
        )
    else:
        out.update(
            {
                "gain_at_lower": _rat(report.gain_at_lower),
                "gain_at_upper": _rat(report.gain_at_upper),
                "gain_signs": list(report.gain_signs),
            }
        )
    return out


def case_json(report: CaseReport) -> dict:
    def value_json(cv) -> dict:
        return {
            "label": cv.label,
            "value": _rat(cv.value),
            "routes": {name: _rat(v) for name, v in sorted(cv.routes.items())},
        }

    return {
        "case": report.case_id,
        "title": report.title,
        "player": report.player.value,
        "conform": value_json(report.conform),
        "deviations": [value_json(cv) for cv in report.deviations],
        "holds": report.holds,
        "notes": list(report.notes),
    }


def finding_json(finding: SearchFinding) -> dict:
    return {
        "trigger_history": format_history(finding.history),
        "selected": finding.selected.value,
        "plan": plan_to_mapping(finding.plan),
        "conform": _rat(finding.conform),
        "deviation": _rat(finding.deviation),
        "gain": _rat(finding.gain),
    }


def search_json(report: SearchReport) -> dict:
    return {
        "deviator": report.deviator.value,
        "depth": report.depth,
        "info_sets": report.info_sets,
        "plans_evaluated": report.plans_evaluated,
        "best": finding_json(report.best) if report.best is not None else None,
        "best_gain": _rat(report.best_gain),
        "profitable": [finding_json(f) for f in report.profitable],
        "clean": report.clean,
    }


def equilibrium_json(report: EquilibriumReport) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "params": params_json(report.params),
        "cases": [case_json(c) for c in report.cases],
        "searches": [search_json(s) for s in report.searches],
        "holds": report.holds,
    }


def _stage_key(stage: Optional[int]) -> str:
    return "conforming" if stage is None else str(stage)


def posterior_json(report: PosteriorReport) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "observation": format_observation(report.observation),
        "scheme": report.scheme_name,
        "eps": _rat(report.eps),
        "explanations": [
            {
                "history": format_history(e.history),
                "mass": _rat(e.mass),
                "first_deviation_stage": e.first_deviation_stage,
                "fast_trembles": e.fast_trembles,
                "slow_trembles": e.slow_trembles,
                "order": e.order if isinstance(e.order, str) else str(e.order),
            }
            for e in report.explanations
        ],
        "stage_masses": {
            _stage_key(stage): _rat(mass) for stage, mass in sorted(
                report.stage_masses.items(), key=lambda kv: (kv[0] is None, kv[0] or 0)
            )
        },
        "dominant_stage": _stage_key(report.dominant_stage),
        "dominant_mass": _rat(report.dominant_mass),
    }


def limit_json(observation: str, scheme: str, report: LimitReport) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "observation": observation,
        "scheme": scheme,
        "rows": [
            {
                "eps": _rat(row.eps),
                "dominant_stage": _stage_key(row.dominant_stage),
                "dominant_mass": _rat(row.dominant_mass),
            }
            for row in report.rows
        ],
        "stable": report.stable,
        "increasing": report.increasing,
        "status": report.status,
    }


def separation_json(report: SeparationReport) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "k": report.k,
        "eps": _rat(report.eps),
        "tolerance": _rat(report.tolerance),
        "ok": report.ok,
        "route": report.route,
        "log10_ratio": report.log10_ratio,
    }


def simulation_json(report: SimulationReport) -> dict:
    players = {}
    for player, sim in report.players.items():
        players[player.value] = {
            "mean": sim.mean,
            "std_error": sim.std_error,
            "tail_lower": sim.tail_lower,
            "tail_upper": sim.tail_upper,
            "exact": _rat(sim.exact),
            "abs_error": sim.abs_error,
        }
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": report.seed,
        "runs": report.runs,
        "horizon": report.horizon,
        "players": players,
    }
