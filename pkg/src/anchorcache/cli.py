"""Command-line client for the anchorcache service.

Subcommands build the same request models the HTTP API accepts and send them
to the service — in-process by default, or to a remote instance via
``--server URL`` / ``ANCHORCACHE_SERVER``. Every flag can also be supplied as
an environment variable with the ``ANCHORCACHE_`` prefix (dashes become
underscores, e.g. ``ANCHORCACHE_ROPE_MODE=bounded``).

Exit codes: 0 success, 2 input error (bad schedule/flags/trace parse),
3 invariant breach or failed check.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any, Optional

from anchorcache.trace import canonical_dumps, trace_lines

ENV_PREFIX = "ANCHORCACHE_"

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_BREACH = 3


def _env(flag: str, default: Any = None) -> Any:
    return os.environ.get(ENV_PREFIX + flag.replace("-", "_").upper(), default)


def _env_int(flag: str, default: int) -> int:
    raw = _env(flag)
    return default if raw is None else int(raw)


def _env_flag(flag: str) -> bool:
    raw = _env(flag)
    return raw is not None and raw.lower() not in ("", "0", "false", "no")


class ServiceClient:
    """Thin transport: in-process ASGI by default, HTTP when a server is given."""

    def __init__(self, server: Optional[str]):
        if server:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=300.0)
        else:
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient

            from anchorcache.service.app import create_app

            self._client = TestClient(create_app())

    def post(self, path: str, payload: dict):
        return self._client.post(path, json=payload)


def _add_engine_flags(parser: argparse.ArgumentParser, with_strategy: bool = True) -> None:
    parser.add_argument(
        "--schedule", required=_env("schedule") is None, default=_env("schedule"),
        help="path to the schedule JSON file",
    )
    if with_strategy:
        parser.add_argument(
            "--strategy", choices=["baseline", "flush", "anchor"],
            default=_env("strategy", "anchor"),
            help="cache maintenance strategy applied at prompt switches",
        )
    parser.add_argument(
        "--rope-mode", choices=["tri", "bounded", "unbounded"],
        default=_env("rope-mode", "tri"),
        help="position assignment: tri-region, plain cap, or raw indices",
    )
    parser.add_argument("--sink", type=int, default=_env_int("sink", 3),
                        help="sink region size (earliest frames, frozen)")
    parser.add_argument("--junction", type=int, default=_env_int("junction", 3),
                        help="junction region size (post-switch frames)")
    parser.add_argument("--window", type=int, default=_env_int("window", 9),
                        help="rolling local window length")
    parser.add_argument("--pmax", type=int, default=_env_int("pmax", 21),
                        help="rotary position bound")
    parser.add_argument("--seed", type=int, default=_env_int("seed", 0),
                        help="noise seed for frame generation")
    parser.add_argument("--weight-seed", type=int, default=_env_int("weight-seed", 0),
                        help="seed for the toy model weights")
    parser.add_argument("--checked", action="store_true", default=_env_flag("checked"),
                        help="abort with exit 3 on the first invariant breach")
    parser.add_argument("--server", default=_env("server"),
                        help="URL of a running service; default runs in-process")


def _settings(args: argparse.Namespace, strategy: Optional[str] = None) -> dict:
    return {
        "strategy": strategy if strategy is not None else args.strategy,
        "rope_mode": args.rope_mode,
        "sink": args.sink,
        "junction": args.junction,
        "window": args.window,
        "p_max": args.pmax,
        "noise_seed": args.seed,
        "weight_seed": args.weight_seed,
        "checked": args.checked,
    }


def _read_schedule(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        _fail_input(f"cannot read schedule file: {exc}")
    except json.JSONDecodeError as exc:
        _fail_input(f"schedule file is not valid JSON: {exc}")


def _fail_input(message: str) -> None:
    print(f"error: {message}", file=sys.stderr)
    raise SystemExit(EXIT_INPUT)


def _print_validation_detail(detail: Any) -> None:
    if isinstance(detail, list):
        for item in detail:
            loc = ".".join(str(p) for p in item.get("loc", []) if p not in ("body",))
            print(f"error: {loc}: {item.get('msg', '')}", file=sys.stderr)
    else:
        print(f"error: {detail}", file=sys.stderr)


def _post_or_die(client: ServiceClient, path: str, payload: dict):
    resp = client.post(path, payload)
    if resp.status_code == 422:
        _print_validation_detail(resp.json().get("detail"))
        raise SystemExit(EXIT_INPUT)
    if resp.status_code != 200:
        print(
            f"error: service returned {resp.status_code} for {path}: {resp.text}",
            file=sys.stderr,
        )
        raise SystemExit(1)
    return resp


def _write_lines(lines: list[str], out: Optional[str]) -> None:
    text = "\n".join(lines) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_run(args: argparse.Namespace) -> int:
    doc = _read_schedule(args.schedule)
    client = ServiceClient(args.server)
    resp = _post_or_die(client, "/run", {"schedule": doc, "settings": _settings(args)})
    body = resp.json()
    if not body["ok"]:
        breach = body["breach"]
        print(
            f"invariant breach: {breach['invariant']} at t={breach['frame']}"
            + (f" ({breach['detail']})" if breach.get("detail") else ""),
            file=sys.stderr,
        )
        return EXIT_BREACH
    _write_lines(trace_lines(body["header"], body["frames"]), args.out)
    return EXIT_OK


def cmd_check(args: argparse.Namespace) -> int:
    try:
        text = Path(args.trace).read_text(encoding="utf-8")
    except OSError as exc:
        _fail_input(f"cannot read trace file: {exc}")
    client = ServiceClient(args.server)
    resp = client.post("/check", {"jsonl": text})
    if resp.status_code == 400:
        detail = resp.json().get("detail", {})
        print(
            f"error: trace parse failed at line {detail.get('line')}: {detail.get('message')}",
            file=sys.stderr,
        )
        return EXIT_INPUT
    if resp.status_code == 422:
        _print_validation_detail(resp.json().get("detail"))
        return EXIT_INPUT
    body = resp.json()
    for item in body["checks"]:
        if item["passed"]:
            print(f"PASS {item['name']}")
        else:
            print(
                f"FAIL {item['name']} ({item['violations']} violation(s), "
                f"first at t={item['first_frame']} line {item['first_line']}): {item['detail']}"
            )
    return EXIT_OK if body["passed"] else EXIT_BREACH


def cmd_compare(args: argparse.Namespace) -> int:
    if len(args.strategies) < 2:
        _fail_input("compare needs at least two strategies")
    doc = _read_schedule(args.schedule)
    client = ServiceClient(args.server)
    payload = {
        "schedule": doc,
        "settings": _settings(args, strategy=args.strategies[0]),
        "strategies": args.strategies,
        "probe_offsets": args.probe_offset,
    }
    resp = _post_or_die(client, "/compare", payload)
    report = resp.json()["report"]
    for name in report["strategies"]:
        per = report["per_strategy"][name]
        retention = ", ".join(
            f"f={p['boundary']} t={p['probe']} kept={p['count']}" for p in per["retention"]
        ) or "n/a"
        print(f"{name:>8}: max_position={per['max_position']} retention[{retention}]")
    for pair in report["divergence"]:
        frame = pair["frame"] if pair["frame"] is not None else "none"
        print(f"diverge {pair['a']} vs {pair['b']}: first differing frame = {frame}")
    if args.out:
        Path(args.out).write_text(canonical_dumps(report) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from anchorcache.service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anchorcache",
        description="Streaming anchor-memory KV cache: run schedules, audit traces, compare strategies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a schedule and write a JSONL trace")
    _add_engine_flags(run)
    run.add_argument("--out", default=_env("out"), help="trace output path (default: stdout)")
    run.set_defaults(handler=cmd_run)

    check = sub.add_parser("check", help="audit a trace file against its header config")
    check.add_argument("trace", help="path to a JSONL trace file")
    check.add_argument("--server", default=_env("server"))
    check.set_defaults(handler=cmd_check)

    compare = sub.add_parser("compare", help="run strategies side by side with identical seeds")
    _add_engine_flags(compare, with_strategy=False)
    compare.add_argument(
        "--strategies", nargs="+", choices=["baseline", "flush", "anchor"],
        default=["baseline", "flush", "anchor"],
    )
    compare.add_argument(
        "--probe-offset", type=int, action="append",
        help="retention probe offset past boundary+window+junction (repeatable, default 5)",
    )
    compare.add_argument("--out", default=None, help="write the JSON report here")
    compare.set_defaults(handler=cmd_compare)

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default=_env("host", "127.0.0.1"))
    serve.add_argument("--port", type=int, default=_env_int("port", 8000))
    serve.set_defaults(handler=cmd_serve)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "probe_offset", None) is None and args.command == "compare":
        args.probe_offset = [5]
    try:
        return args.handler(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
