"""Command line client for the verification service.

By default every command talks to an in-process instance of the HTTP app, so
no server needs to run; ``--server URL`` points the same commands at a live
instance instead.  Output is canonical JSON (sorted keys, two-space indent)
or a terse table via ``--format table``.

Exit codes: 0 success, 1 a requested check did not hold, 2 configuration or
request errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Dict, Optional, Tuple

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2

_PARAM_DEFAULTS = {
    "delta": "3/4",
    "match_prob": "1/2",
    "T": "100",
    "R": "75",
    "P": "45",
    "S": "10",
}


class CliError(Exception):
    pass


class Client:
    """Minimal POST/GET wrapper over either transport."""

    def __init__(self, server: Optional[str]):
        if server:
            import httpx

            self._client = httpx.Client(base_url=server.rstrip("/"), timeout=600.0)
        else:
            from fastapi.testclient import TestClient

            from .service import create_app

            self._client = TestClient(create_app())

    def post(self, path: str, body: dict) -> Tuple[int, dict]:
        response = self._client.post(path, json=body)
        return response.status_code, response.json()


def _add_param_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--delta", help="discount factor, a rational like 3/4")
    parser.add_argument("--match-prob", dest="match_prob", help="probability the first partner is matched, rational")
    parser.add_argument("--T", help="temptation payoff, rational")
    parser.add_argument("--R", help="mutual cooperation payoff, rational")
    parser.add_argument("--P", help="mutual defection payoff, rational")
    parser.add_argument("--S", help="sucker payoff, rational")


def _add_client_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--server", help="base URL of a running service; default is in-process")
    parser.add_argument("--format", choices=("json", "table"), default=None, help="output format (default json)")
    parser.add_argument("--config", help="JSON file with default option values")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdtriad", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("payoff", help="exact profile values, optional truncation bracket")
    _add_param_options(p)
    _add_client_options(p)
    p.add_argument("--profile", help="strategy names x1,x2,m (one name applies to all seats)")
    p.add_argument("--deviation", help="deviation plan as JSON: player, trigger, overrides, continuation")
    p.add_argument("--horizon", type=int, help="also report the exact truncation bracket at this horizon")
    p.add_argument("--closed-form", dest="closed_form", help="also evaluate a registered closed form by name")

    p = sub.add_parser("check", help="equilibrium case checks and bounded deviation search")
    _add_param_options(p)
    _add_client_options(p)
    p.add_argument("--case", default=None, help="case number 1-6, or 'all' (default)")
    p.add_argument("--search-depth", dest="search_depth", type=int, help="deviation search depth for --case all")

    p = sub.add_parser("threshold", help="critical discount factor against contagious play")
    _add_param_options(p)
    _add_client_options(p)
    p.add_argument("--tolerance", help="bracket width to bisect down to, rational (default 1/10^9)")

    p = sub.add_parser("beliefs", help="posterior explanations of a moderator observation")
    _add_client_options(p)
    p.add_argument("--observe", help="moderator observation, e.g. (X1CC;X2DC)")
    p.add_argument("--scheme", choices=("section3", "section4"), default=None, help="tremble scheme (default section4)")
    p.add_argument("--eps", help="tremble rate, rational")
    p.add_argument("--eps-seq", dest="eps_seq", help="comma-separated rates, largest first; switches to limit mode")
    p.add_argument("--separation-k", dest="separation_k", type=int, help="check one slow tremble against k fast ones")
    p.add_argument("--tolerance", help="separation tolerance, rational")
    p.add_argument("--match-prob", dest="match_prob", help="matching probability, rational")

    p = sub.add_parser("simulate", help="Monte Carlo playout with exact cross-check")
    _add_param_options(p)
    _add_client_options(p)
    p.add_argument("--profile", help="strategy names x1,x2,m")
    p.add_argument("--deviation", help="deviation plan as JSON")
    p.add_argument("--seed", type=int, help="stream seed (default 0)")
    p.add_argument("--horizon", type=int, help="stages per run (default 60)")
    p.add_argument("--runs", type=int, help="number of runs (default 10000)")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def _load_config(args: argparse.Namespace) -> None:
    if not getattr(args, "config", None):
        return
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config file: {exc}")
    if not isinstance(data, dict):
        raise CliError("config file must hold a JSON object")
    for key, value in data.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise CliError(f"config key not recognized for this command: {key}")
        if getattr(args, dest) is None:
            setattr(args, dest, value)


def _params_body(args: argparse.Namespace) -> Dict[str, str]:
    body = {}
    for key, default in _PARAM_DEFAULTS.items():
        value = getattr(args, key, None)
        body[key] = str(value) if value is not None else default
    return body


def _profile_body(args: argparse.Namespace) -> Dict[str, str]:
    raw = getattr(args, "profile", None) or "sigma"
    names = [part.strip() for part in str(raw).split(",")]
    if len(names) == 1:
        names = names * 3
    if len(names) != 3:
        raise CliError("--profile takes one name or three: x1,x2,m")
    return {"x1": names[0], "x2": names[1], "m": names[2]}


def _deviation_body(args: argparse.Namespace) -> Optional[dict]:
    raw = getattr(args, "deviation", None)
    if raw is None:
        return None
    if isinstance(raw, dict):
        return raw
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CliError(f"--deviation is not valid JSON: {exc}")
    if not isinstance(data, dict):
        raise CliError("--deviation must be a JSON object")
    return data


def canonical_json(data: dict) -> str:
    return json.dumps(data, sort_keys=True, indent=2, separators=(",", ": "))


def _dec(rat: dict) -> str:
    return rat["decimal"]


def _table(command: str, data: dict) -> str:
    lines = []
    if command == "payoff":
        for player in ("X1", "X2", "M"):
            rat = data["values"][player]
            lines.append(f"{player}  {_dec(rat)}  ({rat['num']}/{rat['den']})")
        if "truncation" in data:
            trunc = data["truncation"]
            lines.append(f"truncation horizon {trunc['horizon']}:")
            for player in ("X1", "X2", "M"):
                row = trunc["players"][player]
                lines.append(f"  {player}  [{_dec(row['lower'])}, {_dec(row['upper'])}]")
        if "closed_form" in data:
            cf = data["closed_form"]
            lines.append(f"closed form {cf['name']} = {_dec(cf['value'])}")
    elif command == "check":
        for case in data.get("cases", []):
            verdict = "holds" if case["holds"] else "FAILS"
            lines.append(f"case {case['case']} ({case['title']}): {verdict}")
            lines.append(f"  conform   {_dec(case['conform']['value'])}  {case['conform']['label']}")
            for dev in case["deviations"]:
                lines.append(f"  deviation {_dec(dev['value'])}  {dev['label']}")
        for search in data.get("searches", []):
            state = "clean" if search["clean"] else "PROFITABLE DEVIATION"
            lines.append(
                f"search {search['deviator']} depth {search['depth']}: best gain "
                f"{_dec(search['best_gain'])} ({state})"
            )
        lines.append(f"holds: {str(data['holds']).lower()}")
    elif command == "threshold":
        if data["status"] == "ok":
            lines.append(f"threshold in [{_dec(data['lower'])}, {_dec(data['upper'])}]")
            lines.append(f"rendered: {data['rendered']}")
            lines.append(f"quadratic sign change: {str(data['quadratic_sign_change']).lower()}")
        else:
            lines.append("no interior threshold")
            lines.append(f"gain near 0: {_dec(data['gain_at_lower'])}")
            lines.append(f"gain near 1: {_dec(data['gain_at_upper'])}")
    elif command == "beliefs":
        if "explanations" in data:
            for e in data["explanations"]:
                stage = e["first_deviation_stage"]
                label = "conforming" if stage is None else f"first deviation at stage {stage}"
                lines.append(f"{e['history']}  mass {_dec(e['mass'])}  order {e['order']}  ({label})")
            lines.append(f"dominant: {data['dominant_stage']}  mass {_dec(data['dominant_mass'])}")
        elif "rows" in data:
            for row in data["rows"]:
                lines.append(
                    f"eps {_dec(row['eps'])}: stage {row['dominant_stage']} mass {_dec(row['dominant_mass'])}"
                )
            lines.append(f"status: {data['status']}")
        else:
            lines.append(f"separation ok: {str(data['ok']).lower()} ({data['route']})")
            lines.append(f"log10 ratio: {data['log10_ratio']}")
    elif command == "simulate":
        for player in ("X1", "X2", "M"):
            row = data["players"][player]
            lines.append(
                f"{player}  mean {row['mean']:.6f}  se {row['std_error']:.6f}  "
                f"exact {_dec(row['exact'])}  |err| {row['abs_error']:.6f}"
            )
        lines.append(f"seed {data['seed']}  runs {data['runs']}  horizon {data['horizon']}")
    if "warning" in data:
        lines.append(f"warning: {data['warning']}")
    return "\n".join(lines)


def _build_request(args: argparse.Namespace) -> Tuple[str, dict]:
    command = args.command
    if command == "payoff":
        body: dict = {"params": _params_body(args), "profile": _profile_body(args)}
        deviation = _deviation_body(args)
        if deviation is not None:
            body["deviation"] = deviation
        if args.horizon is not None:
            body["horizon"] = args.horizon
        if args.closed_form is not None:
            body["closed_form"] = args.closed_form
        return "/payoff", body
    if command == "check":
        case = args.case if args.case is not None else "all"
        if case != "all":
            try:
                case = int(case)
            except ValueError:
                raise CliError("--case takes a number 1-6 or 'all'")
        body = {"params": _params_body(args), "case": case}
        if args.search_depth is not None:
            body["search_depth"] = args.search_depth
        return "/check", body
    if command == "threshold":
        body = {"params": _params_body(args)}
        if args.tolerance is not None:
            body["tolerance"] = args.tolerance
        return "/threshold", body
    if command == "beliefs":
        body = {"scheme": args.scheme or "section4"}
        if args.match_prob is not None:
            body["match_prob"] = args.match_prob
        if args.separation_k is not None:
            body["mode"] = "separation"
            body["k"] = args.separation_k
            if args.eps is None:
                raise CliError("separation mode needs --eps")
            body["eps"] = args.eps
            if args.tolerance is not None:
                body["tolerance"] = args.tolerance
            return "/beliefs", body
        if args.observe is None:
            raise CliError("beliefs needs --observe (or --separation-k with --eps)")
        body["observe"] = args.observe
        if args.eps_seq is not None:
            body["mode"] = "limit"
            body["eps_sequence"] = [part.strip() for part in args.eps_seq.split(",") if part.strip()]
        else:
            if args.eps is None:
                raise CliError("posterior mode needs --eps")
            body["mode"] = "posterior"
            body["eps"] = args.eps
        return "/beliefs", body
    if command == "simulate":
        body = {"params": _params_body(args), "profile": _profile_body(args)}
        deviation = _deviation_body(args)
        if deviation is not None:
            body["deviation"] = deviation
        if args.seed is not None:
            body["seed"] = args.seed
        if args.horizon is not None:
            body["horizon"] = args.horizon
        if args.runs is not None:
            body["runs"] = args.runs
        return "/simulate", body
    raise CliError(f"unknown command: {command}")


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "serve":
        import uvicorn

        uvicorn.run("pdtriad.service:app", host=args.host, port=args.port)
        return EXIT_OK

    try:
        _load_config(args)
        path, body = _build_request(args)
        client = Client(getattr(args, "server", None))
        status, data = client.post(path, body)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # connection problems, malformed responses
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if status >= 400:
        print(canonical_json(data) if isinstance(data, dict) else str(data), file=sys.stderr)
        return EXIT_CONFIG

    fmt = getattr(args, "format", None) or "json"
    if fmt == "table":
        print(_table(args.command, data))
    else:
        print(canonical_json(data))

    if args.command == "check" and not data.get("holds", False):
        return EXIT_CHECK_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
