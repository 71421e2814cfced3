"""HTTP facade over the verification core.

Stateless: every request carries the full problem description, every
response is a plain JSON document.  The CLI talks to this app in process by
default, so anything the CLI can do is also available over the wire.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import __version__
from .beliefs import SCHEMES, limit_check, posterior, separation_check
from .equilibrium import (
    check_case,
    contagious_threshold,
    verify_theorem,
)
from .game import GameError, parse_observation
from .numerics import parse_rational
from .payoff import closed_form, exact_value, simulate, truncated_value
from .schemas import (
    SCHEMA_VERSION,
    BeliefsRequest,
    CheckRequest,
    PayoffRequest,
    SimulateRequest,
    ThresholdRequest,
    _to_fraction,
    case_json,
    equilibrium_json,
    limit_json,
    params_json,
    posterior_json,
    rational_json,
    separation_json,
    simulation_json,
    threshold_json,
    truncation_json,
    values_json,
)
from .strategies import apply_deviation, trigger_reachable


def _apply_deviation(profile, deviation):
    if deviation is None:
        return profile, None
    plan = deviation.to_plan()
    base = profile.automaton(plan.player)
    composite = apply_deviation(base, plan)
    warning = None
    if not trigger_reachable(plan, base):
        warning = "deviation trigger is unreachable under the deviator's base strategy"
    return profile.with_player(plan.player, composite), warning


def create_app() -> FastAPI:
    app = FastAPI(title="pdtriad", version=__version__)

    @app.exception_handler(GameError)
    async def _game_error(_request: Request, exc: GameError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(ValueError)
    async def _value_error(_request: Request, exc: ValueError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.get("/healthz")
    def healthz() -> dict:
        return {"schema_version": SCHEMA_VERSION, "status": "ok", "version": __version__}

    @app.post("/payoff")
    def payoff(request: PayoffRequest) -> dict:
        params = request.params.to_params()
        profile, warning = _apply_deviation(request.profile.to_profile(), request.deviation)
        values = exact_value(profile, params)
        out = {
            "schema_version": SCHEMA_VERSION,
            "params": params_json(params),
            "values": values_json(values),
        }
        if request.horizon is not None:
            out["truncation"] = truncation_json(truncated_value(profile, params, request.horizon))
        if request.closed_form is not None:
            out["closed_form"] = {
                "name": request.closed_form,
                "value": rational_json(closed_form(request.closed_form, params)),
            }
        if warning is not None:
            out["warning"] = warning
        return out

    @app.post("/check")
    def check(request: CheckRequest) -> dict:
        params = request.params.to_params()
        if request.case == "all":
            report = verify_theorem(params, search_depth=request.search_depth)
            return equilibrium_json(report)
        report = check_case(request.case, params)
        return {
            "schema_version": SCHEMA_VERSION,
            "params": params_json(params),
            "cases": [case_json(report)],
            "holds": report.holds,
        }

    @app.post("/threshold")
    def threshold(request: ThresholdRequest) -> dict:
        payoffs = request.params.to_payoffs()
        match_prob = _to_fraction(request.params.match_prob, "match_prob")
        tolerance = _to_fraction(request.tolerance, "tolerance")
        report = contagious_threshold(payoffs, match_prob, tolerance)
        return threshold_json(report)

    @app.post("/beliefs")
    def beliefs(request: BeliefsRequest) -> dict:
        scheme = SCHEMES[request.scheme]()
        match_prob = _to_fraction(request.match_prob, "match_prob")
        if request.mode == "separation":
            if request.k is None or request.eps is None:
                raise GameError("separation mode needs both k and eps")
            tolerance = _to_fraction(request.tolerance, "tolerance")
            return separation_json(separation_check(request.k, _to_fraction(request.eps, "eps"), tolerance))
        if request.observe is None:
            raise GameError("posterior and limit modes need an observation")
        observation = parse_observation(request.observe)
        if request.mode == "limit":
            if not request.eps_sequence:
                raise GameError("limit mode needs eps_sequence")
            rates = [_to_fraction(e, "eps_sequence") for e in request.eps_sequence]
            report = limit_check(observation, scheme, rates, match_prob)
            return limit_json(request.observe, request.scheme, report)
        if request.eps is None:
            raise GameError("posterior mode needs eps")
        report = posterior(observation, _to_fraction(request.eps, "eps"), scheme, match_prob)
        return posterior_json(report)

    @app.post("/simulate")
    def run_simulation(request: SimulateRequest) -> dict:
        params = request.params.to_params()
        profile, warning = _apply_deviation(request.profile.to_profile(), request.deviation)
        report = simulate(profile, params, request.seed, request.horizon, request.runs)
        out = simulation_json(report)
        if warning is not None:
            out["warning"] = warning
        return out

    return app


app = create_app()
