"""Command-line front end.

Commands run in-process by default; ``--server URL`` sends the same request
models to a running ``vui-modeler serve`` instead.

Exit codes: 0 success, 2 configuration error, 3 target failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from pydantic import ValidationError

from vui_modeler.schemas import (
    CompareRequest,
    ExportRequest,
    GatewayOptions,
    GenCorpusRequest,
    TestRequest,
)
from vui_modeler.service import (
    ConfigError,
    TargetFailure,
    handle_compare,
    handle_export,
    handle_gen_corpus,
    handle_test,
)

EXIT_OK, EXIT_CONFIG, EXIT_TARGET = 0, 2, 3


def _range(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition("..")
    try:
        a = int(lo)
        b = int(hi) if sep else a
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N..M, got {text!r}") from None
    if a > b:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return a, b


def _gateway_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("language-model gateway")
    g.add_argument("--backend", choices=["perfect", "noisy", "remote"], default="perfect")
    g.add_argument("--backend-seed", type=int, default=None,
                   help="seed for the noisy backend (defaults to --seed)")
    g.add_argument("--error-rate", type=float, default=0.3, help="noisy backend fault rate")
    g.add_argument("--endpoint", help="chat-completion URL for the remote backend")
    g.add_argument("--model", dest="model_name", default="gpt-4")
    g.add_argument("--temperature", type=float, default=0.0)
    g.add_argument("--max-feedback", dest="max_feedback_rounds", type=int, default=3)
    g.add_argument("--context-limit", type=int, default=None)
    g.add_argument("--rpm", dest="requests_per_minute", type=float, default=None)


def _gateway_options(ns: argparse.Namespace) -> GatewayOptions:
    return GatewayOptions(
        backend=ns.backend,
        seed=ns.seed if ns.backend_seed is None else ns.backend_seed,
        error_rate=ns.error_rate,
        endpoint=ns.endpoint,
        model_name=ns.model_name,
        temperature=ns.temperature,
        max_feedback_rounds=ns.max_feedback_rounds,
        context_limit=ns.context_limit,
        requests_per_minute=ns.requests_per_minute,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vui-modeler",
                                     description="Explore conversational apps and build behavior models.")
    parser.add_argument("--server", help="run commands on a vui-modeler service at this URL")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="explore one target and write a report")
    t.add_argument("--target", required=True, help="skill spec JSON, target_config JSON, or URL")
    t.add_argument("--mode", choices=["elevate", "chatbot", "random", "weighted"], default="elevate")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--max-rounds", type=int, default=None)
    t.add_argument("--time-limit", type=float, default=None, help="wall-clock budget in seconds")
    t.add_argument("--target-timeout", type=float, default=15.0, help="per-send timeout in seconds")
    t.add_argument("--relaunch-cap", type=int, default=10)
    t.add_argument("--out", required=True, help="report JSON path")
    _gateway_args(t)

    c = sub.add_parser("compare", help="coverage of several testers over a corpus")
    c.add_argument("--corpus", required=True, help="directory of skill spec JSON files")
    c.add_argument("--modes", default="elevate,chatbot,random,weighted")
    c.add_argument("--rounds-match", action="store_true",
                   help="give baselines exactly the rounds the tester used")
    c.add_argument("--max-rounds", type=int, default=20)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--union", action="store_true",
                   help="ignore ground truth; total = union of canonical states")
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--out", required=True, help="CSV path")
    _gateway_args(c)

    g = sub.add_parser("gen-corpus", help="write a seeded corpus of synthetic skills")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--count", type=int, default=10)
    g.add_argument("--sizes", type=_range, default=(5, 15))
    g.add_argument("--variants", type=_range, default=(2, 4))
    g.add_argument("--branching", type=_range, default=(2, 4))
    g.add_argument("--out", required=True, help="output directory")

    e = sub.add_parser("export", help="convert a report's model to DOT or JSON")
    e.add_argument("--report", required=True)
    e.add_argument("--dot", help="DOT output path")
    e.add_argument("--json", dest="json_out", help="model JSON output path")

    s = sub.add_parser("serve", help="run the HTTP service")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8000)
    return parser


def _client(ns: argparse.Namespace):
    if not ns.server:
        return None
    from vui_modeler.client import ServiceClient

    return ServiceClient(ns.server)


def _write(path: str, text: str) -> None:
    p = Path(path)
    if p.parent and not p.parent.exists():
        p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text, encoding="utf-8")


def _cmd_test(ns: argparse.Namespace) -> None:
    target = ns.target
    if not target.startswith(("http://", "https://", "tcp://")):
        target = str(Path(target).resolve())
    req = TestRequest(target=target, mode=ns.mode, gateway=_gateway_options(ns), seed=ns.seed,
                      max_rounds=ns.max_rounds, time_limit=ns.time_limit,
                      target_timeout_s=ns.target_timeout, relaunch_cap=ns.relaunch_cap)
    client = _client(ns)
    resp = client.test(req) if client else handle_test(req)
    _write(ns.out, json.dumps(resp.report, indent=2, ensure_ascii=False) + "\n")
    s = resp.summary
    cov = f", coverage {s.coverage:.2f}" if s.coverage is not None else ""
    print(f"{s.tester}: {s.rounds} rounds, {s.states} states, {s.transitions} transitions, "
          f"{s.relaunches} relaunches{cov} -> {ns.out}")


def _cmd_compare(ns: argparse.Namespace) -> None:
    modes = [m.strip() for m in ns.modes.split(",") if m.strip()]
    req = CompareRequest(corpus=str(Path(ns.corpus).resolve()), modes=modes,
                         gateway=_gateway_options(ns), seed=ns.seed, max_rounds=ns.max_rounds,
                         rounds_match=ns.rounds_match, union=ns.union, workers=ns.workers)
    client = _client(ns)
    resp = client.compare(req) if client else handle_compare(req)
    _write(ns.out, resp.csv)
    finals = ", ".join(f"{m} {v:.3f}" for m, v in resp.final.items())
    print(f"{resp.skills} skills, coverage at round {resp.rounds}: {finals} -> {ns.out}")


def _cmd_gen(ns: argparse.Namespace) -> None:
    req = GenCorpusRequest(seed=ns.seed, count=ns.count, sizes=ns.sizes, variants=ns.variants,
                           branching=ns.branching)
    client = _client(ns)
    resp = client.gen_corpus(req) if client else handle_gen_corpus(req)
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, spec in enumerate(resp.specs):
        (out / f"skill_{i:03d}.json").write_text(
            json.dumps(spec, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    print(f"wrote {len(resp.specs)} skills to {out}")


def _cmd_export(ns: argparse.Namespace) -> None:
    if not ns.dot and not ns.json_out:
        raise ConfigError("give --dot and/or --json")
    try:
        doc = json.loads(Path(ns.report).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read report: {exc}") from exc
    client = _client(ns)
    for fmt, path in (("dot", ns.dot), ("json", ns.json_out)):
        if path:
            req = ExportRequest(report=doc, format=fmt)
            resp = client.export(req) if client else handle_export(req)
            _write(path, resp.text)
            print(f"wrote {path}")


def _cmd_serve(ns: argparse.Namespace) -> None:
    import uvicorn

    uvicorn.run("vui_modeler.service:app", host=ns.host, port=ns.port)


COMMANDS = {"test": _cmd_test, "compare": _cmd_compare, "gen-corpus": _cmd_gen,
            "export": _cmd_export, "serve": _cmd_serve}


def main(argv: Sequence[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        COMMANDS[ns.command](ns)
    except (ConfigError, ValidationError, ValueError) as exc:
        print(f"vui-modeler: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TargetFailure as exc:
        print(f"vui-modeler: target failure: {exc}", file=sys.stderr)
        return EXIT_TARGET
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
