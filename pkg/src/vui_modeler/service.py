"""HTTP service around the tester.

The handler functions are plain callables taking and returning the pydantic
models in :mod:`vui_modeler.schemas`; the CLI calls them in-process and the
FastAPI app exposes them over HTTP.  The app can also host simulated skills
under ``/skills/{id}/converse`` so they can be tested as remote targets.
"""

from __future__ import annotations

import threading
import uuid
import zlib
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse

from vui_modeler import __version__
from vui_modeler.corpus import gen_corpus
from vui_modeler.coverage import compare, coverage_timeline, rate_at, union_timelines
from vui_modeler.gateway import BackendUnavailable, Gateway, GatewayConfig
from vui_modeler.model import BehaviorModel
from vui_modeler.runner import Budget, TestReport, run_tester
from vui_modeler.schemas import (
    CompareRequest,
    CompareResponse,
    Converse,
    ErrorBody,
    ExportRequest,
    ExportResponse,
    GatewayOptions,
    GenCorpusRequest,
    GenCorpusResponse,
    ReportSummary,
    SkillHandle,
    SkillUpload,
    TestRequest,
    TestResponse,
    Utterance,
)
from vui_modeler.simulator import SchemaError, Session, SessionEnded, SkillSpec, launch, load_spec, respond
from vui_modeler.targets import TargetConfig, TargetError


class ConfigError(ValueError):
    """Bad user input: maps to HTTP 400 and CLI exit code 2."""


class TargetFailure(RuntimeError):
    """The target (or remote model endpoint) failed: HTTP 502, exit code 3."""


def gateway_from(opts: GatewayOptions) -> Gateway:
    try:
        cfg = GatewayConfig(
            backend=opts.backend, endpoint=opts.endpoint, model_name=opts.model_name,
            temperature=opts.temperature, seed=opts.seed,
            error_rate=opts.error_rate if opts.backend == "noisy" else 0.0,
            max_feedback_rounds=opts.max_feedback_rounds, context_limit=opts.context_limit,
            history_window=opts.history_window, requests_per_minute=opts.requests_per_minute,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return Gateway(cfg)


def _target(req: TestRequest) -> TargetConfig:
    try:
        if req.spec is not None:
            spec = load_spec(req.spec)
            return TargetConfig("local", spec.name, req.target_timeout_s, spec=spec)
        assert req.target is not None
        return TargetConfig.parse(req.target, req.target_timeout_s)
    except (SchemaError, OSError, ValueError) as exc:
        raise ConfigError(f"bad target: {exc}") from exc


def summarize(report: TestReport) -> ReportSummary:
    m = report.model
    return ReportSummary(
        tester=report.tester,
        rounds=len(report.transcript),
        states=len(m.states),
        transitions=len(m.transitions),
        relaunches=int(report.stats.get("relaunches", 0)),
        coverage=report.coverage[-1].rate if report.coverage else None,
    )


def _run(mode: str, target: TargetConfig, opts: GatewayOptions, budget: Budget, seed: int,
         relaunch_cap: int = 10) -> TestReport:
    gateway = gateway_from(opts)
    try:
        return run_tester(mode, target, gateway, budget, seed, relaunch_cap=relaunch_cap)
    except (TargetError, BackendUnavailable) as exc:
        raise TargetFailure(str(exc)) from exc


def handle_test(req: TestRequest) -> TestResponse:
    target = _target(req)
    budget = Budget(req.max_rounds, req.time_limit)
    report = _run(req.mode, target, req.gateway, budget, req.seed, req.relaunch_cap)
    return TestResponse(summary=summarize(report), report=report.to_dict())


def _load_corpus(req: CompareRequest) -> list[SkillSpec]:
    try:
        if req.specs is not None:
            return [load_spec(s) for s in req.specs]
        assert req.corpus is not None
        root = Path(req.corpus)
        files = sorted(root.glob("*.json"))
        if not files:
            raise ConfigError(f"no skill specs (*.json) in {root}")
        return [load_spec(f.read_text(encoding="utf-8")) for f in files]
    except (SchemaError, OSError) as exc:
        raise ConfigError(f"bad corpus: {exc}") from exc


def _compare_one(spec: SkillSpec, req: CompareRequest) -> dict[str, TestReport]:
    target = TargetConfig.from_spec(spec)
    reports: dict[str, TestReport] = {}
    rounds = req.max_rounds
    modes = list(req.modes)
    if req.rounds_match:
        # Baselines get exactly the rounds the tester used.
        reports["elevate"] = _run("elevate", target, req.gateway, Budget(rounds), req.seed)
        rounds = max(1, len(reports["elevate"].transcript))
    for mode in modes:
        if mode not in reports:
            reports[mode] = _run(mode, target, req.gateway, Budget(rounds), req.seed)
    return {m: reports[m] for m in modes}


def handle_compare(req: CompareRequest) -> CompareResponse:
    specs = _load_corpus(req)
    with ThreadPoolExecutor(max_workers=req.workers) as pool:
        per_skill = list(pool.map(lambda s: _compare_one(s, req), specs))
    runs: dict[str, list] = {m: [] for m in req.modes}
    for spec, reports in zip(specs, per_skill):
        if req.union:
            timelines = union_timelines(reports)
        else:
            timelines = {m: r.coverage for m, r in reports.items()}
        for m in req.modes:
            runs[m].append(timelines[m])
    csv_text = compare(runs, req.max_rounds)
    final = {m: sum(rate_at(t, req.max_rounds) for t in runs[m]) / max(1, len(runs[m]))
             for m in req.modes}
    return CompareResponse(csv=csv_text, final=final, rounds=req.max_rounds, skills=len(specs))


def handle_gen_corpus(req: GenCorpusRequest) -> GenCorpusResponse:
    try:
        specs = gen_corpus(req.seed, req.count, req.sizes, req.variants, req.branching)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return GenCorpusResponse(specs=[s.to_dict() for s in specs])


def handle_export(req: ExportRequest) -> ExportResponse:
    try:
        report = TestReport.from_dict(req.report)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"not a test report: {exc}") from exc
    return ExportResponse(text=report.model.export(req.format))


def report_coverage(report: TestReport, truth: BehaviorModel) -> float:
    points = coverage_timeline(report, truth)
    return points[-1].rate if points else 0.0


class SkillHost:
    """Simulated skills served over the remote target protocol."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._skills: dict[str, tuple[SkillSpec, int]] = {}
        self._sessions: dict[tuple[str, str], Session] = {}

    def add(self, spec: SkillSpec, seed: int = 0) -> str:
        skill_id = uuid.uuid4().hex[:12]
        with self._lock:
            self._skills[skill_id] = (spec, seed)
        return skill_id

    def converse(self, skill_id: str, msg: Converse) -> Utterance:
        with self._lock:
            if skill_id not in self._skills:
                raise KeyError(skill_id)
            spec, seed = self._skills[skill_id]
            key = (skill_id, msg.session)
            if msg.input is None:
                session, out = launch(spec, seed ^ zlib.crc32(msg.session.encode()))
                self._sessions[key] = session
            else:
                session = self._sessions.get(key)
                if session is None:
                    raise SessionEnded(f"unknown session {msg.session!r}; open it with input null")
                out = respond(session, msg.input)
            if out.ended:
                self._sessions.pop(key, None)
        return Utterance(output=out.text, ended=out.ended, eval=out.eval_meta)


def create_app() -> FastAPI:
    app = FastAPI(title="vui-modeler", version=__version__)
    host = SkillHost()
    app.state.skills = host

    @app.exception_handler(ConfigError)
    async def _config(_: Request, exc: ConfigError):
        return JSONResponse(ErrorBody(error=str(exc), kind="config").model_dump(), status_code=400)

    @app.exception_handler(TargetFailure)
    async def _target_failure(_: Request, exc: TargetFailure):
        return JSONResponse(ErrorBody(error=str(exc), kind="target").model_dump(), status_code=502)

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/test", response_model=TestResponse)
    def test(req: TestRequest) -> TestResponse:
        return handle_test(req)

    @app.post("/compare", response_model=CompareResponse)
    def compare_(req: CompareRequest) -> CompareResponse:
        return handle_compare(req)

    @app.post("/gen-corpus", response_model=GenCorpusResponse)
    def gen(req: GenCorpusRequest) -> GenCorpusResponse:
        return handle_gen_corpus(req)

    @app.post("/export", response_model=ExportResponse)
    def export(req: ExportRequest) -> ExportResponse:
        return handle_export(req)

    @app.post("/skills", response_model=SkillHandle)
    def add_skill(req: SkillUpload) -> SkillHandle:
        try:
            spec = load_spec(req.spec)
        except SchemaError as exc:
            raise ConfigError(str(exc)) from exc
        return SkillHandle(skill_id=host.add(spec, req.seed))

    @app.post("/skills/{skill_id}/converse", response_model=Utterance)
    def converse(skill_id: str, msg: Converse) -> Utterance:
        try:
            return host.converse(skill_id, msg)
        except KeyError:
            raise HTTPException(404, f"no skill {skill_id!r}") from None
        except SessionEnded as exc:
            raise HTTPException(409, str(exc)) from None

    return app


app = create_app()
