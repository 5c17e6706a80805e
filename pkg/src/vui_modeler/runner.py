"""Driving a target with the three-phase tester or one of the baselines.

Every loop iteration is one interaction round: either a (re)launch of the
target, recorded as the ``<LAUNCH>`` input at ``<START>``, or one input sent
at the current state.  The reply is then folded into the behavior model and
the next input is picked.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field
from typing import Any, Callable

from vui_modeler import targets
from vui_modeler.exploration import ThoughtTrace, select_input
from vui_modeler.extraction import DEFAULT_THRESHOLD, MergedInto, NewState, extract_state
from vui_modeler.gateway import ChatMessage, Gateway, GatewaySession, OracleRequest
from vui_modeler.generation import check_input_outcome, generate_inputs
from vui_modeler.model import CONFUSED, LAUNCH, BehaviorModel, Origin, normalize
from vui_modeler.questions import is_confusion, jaccard, normalize_phrase, rule_based_inputs
from vui_modeler.simulator import variant_truth
from vui_modeler.targets import TargetConfig, TargetError, TargetTimeout, TargetUnavailable
from vui_modeler.verdicts import Verdict

PHASES = ("extraction", "generation", "exploration")
DEFAULT_RELAUNCH_CAP = 10
REPORT_VERSION = 1


@dataclass
class Budget:
    max_rounds: int | None = None
    wall_clock_s: float | None = None

    def __post_init__(self) -> None:
        if self.max_rounds is None and self.wall_clock_s is None:
            raise ValueError("a budget needs max_rounds or wall_clock_s")
        if self.max_rounds is not None and self.max_rounds < 0:
            raise ValueError("max_rounds must be >= 0")
        if self.wall_clock_s is not None and self.wall_clock_s <= 0:
            raise ValueError("wall_clock_s must be positive")


@dataclass(frozen=True)
class CoveragePoint:
    round: int
    covered_semantic_states: int
    total: int

    @property
    def rate(self) -> float:
        return self.covered_semantic_states / self.total if self.total else 0.0

    def to_dict(self) -> dict:
        return {"round": self.round, "covered_semantic_states": self.covered_semantic_states,
                "total": self.total}


@dataclass
class RoundRecord:
    round: int
    state_before: str
    input: str
    raw_output: str | None
    decision: dict
    checker_verdicts: list[str]
    thought_trace: dict | None = None
    rejected_traces: list[dict] = field(default_factory=list)
    ended: bool = False

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "state_before": self.state_before,
            "input": self.input,
            "raw_output": self.raw_output,
            "decision": self.decision,
            "checker_verdicts": list(self.checker_verdicts),
            "thought_trace": self.thought_trace,
            "rejected_traces": list(self.rejected_traces),
            "ended": self.ended,
        }


@dataclass
class TestReport:
    tester: str
    target: str
    seed: int
    transcript: list[RoundRecord]
    model: BehaviorModel
    coverage: list[CoveragePoint] = field(default_factory=list)
    stats: dict[str, Any] = field(default_factory=dict)
    eval: list[dict] = field(default_factory=list)
    config: dict[str, Any] = field(default_factory=dict)

    __test__ = False  # not a pytest class

    def raw_outputs(self) -> list[str | None]:
        return [r.raw_output for r in self.transcript]

    def to_dict(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "tester": self.tester,
            "target": self.target,
            "seed": self.seed,
            "config": self.config,
            "transcript": [r.to_dict() for r in self.transcript],
            "model": self.model.to_dict(),
            "journal": [list(op) for op in self.model.journal],
            "coverage": [p.to_dict() for p in self.coverage],
            "stats": self.stats,
            "eval": self.eval,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False, sort_keys=False) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "TestReport":
        model = BehaviorModel.from_dict(doc["model"])
        model.journal = [list(op) for op in doc.get("journal", [])]
        transcript = [RoundRecord(**r) for r in doc.get("transcript", [])]
        return cls(doc.get("tester", "elevate"), doc.get("target", ""), doc.get("seed", 0),
                   transcript, model,
                   [CoveragePoint(**p) for p in doc.get("coverage", [])],
                   doc.get("stats", {}), doc.get("eval", []), doc.get("config", {}))

    @classmethod
    def from_json(cls, text: str) -> "TestReport":
        return cls.from_dict(json.loads(text))


def oracle_gateway(gateway: Gateway, config: TargetConfig) -> Gateway:
    """Give oracle backends the ground-truth text map of a local skill."""
    if gateway.config.backend == "remote" or gateway.truth or config.spec is None:
        return gateway
    return gateway.with_truth(variant_truth(config.spec))


class _Driver:
    """Shared launch/send/budget plumbing for every tester."""

    def __init__(self, config: TargetConfig, budget: Budget, seed: int, relaunch_cap: int,
                 keep_eval: bool) -> None:
        self.config = config
        self.budget = budget
        self.seed = seed
        self.relaunch_cap = relaunch_cap
        self.keep_eval = keep_eval
        self.handle: targets.TargetHandle | None = None
        self.launches = 0
        self.rounds = 0
        self.timeouts = 0
        self.eval: list[dict] = []
        self.started = time.monotonic()
        self.stop_reason = ""

    def has_budget(self) -> bool:
        b = self.budget
        if b.max_rounds is not None and self.rounds >= b.max_rounds:
            self.stop_reason = "max_rounds"
            return False
        if b.wall_clock_s is not None and time.monotonic() - self.started >= b.wall_clock_s:
            self.stop_reason = "wall_clock"
            return False
        return True

    def can_relaunch(self) -> bool:
        if self.launches > self.relaunch_cap:
            self.stop_reason = "relaunch_cap"
            return False
        return True

    def _harvest(self) -> None:
        h = self.handle
        if h is not None and h.eval_log:
            for meta in h.eval_log:
                self.eval.append({"round": self.rounds, **meta})
            h.eval_log.clear()

    def launch(self) -> tuple[str, bool]:
        try:
            handle, text = targets.open(self.config, seed=self.seed * 1009 + self.launches,
                                        session_id=f"run{self.seed}-launch{self.launches}",
                                        keep_eval=self.keep_eval)
        except TargetTimeout as exc:
            raise TargetUnavailable(f"target timed out on open: {exc}") from exc
        except TargetError as exc:
            if isinstance(exc, TargetUnavailable):
                raise
            raise TargetUnavailable(str(exc)) from exc
        self.handle = handle
        self.launches += 1
        self.rounds += 1
        self._harvest()
        return text, handle.ended

    def send(self, phrase: str) -> tuple[str | None, bool]:
        """Returns (reply, ended); reply is None when the target timed out."""
        assert self.handle is not None
        self.rounds += 1
        try:
            text, ended = targets.send(self.handle, phrase, keep_eval=self.keep_eval)
        except TargetTimeout:
            self.timeouts += 1
            return None, True
        self._harvest()
        return text, ended

    def close(self) -> None:
        if self.handle is not None:
            targets.close(self.handle)
            self.handle = None

    def base_stats(self) -> dict:
        return {
            "rounds": self.rounds,
            "launches": self.launches,
            "relaunches": max(0, self.launches - 1),
            "timeouts": self.timeouts,
            "stop_reason": self.stop_reason or "budget",
        }


def confusion_state(model: BehaviorModel, raw: str, threshold: float = DEFAULT_THRESHOLD) -> int:
    """Umbrella state for a confusion reply.

    Replies whose rule-based input sets match share one ``<CONFUSED>`` state;
    a reply re-asking a different question gets its own numbered one.
    """
    known = model.lookup(raw)
    if known is not None and model.state(known).is_confusion:
        return known
    inputs = rule_based_inputs(raw)
    umbrellas = [s.id for s in model.states if s.is_confusion]
    for sid in umbrellas:
        if jaccard(model.phrases(sid), inputs) >= threshold:
            model.merge_output(raw, sid)
            return sid
    label = CONFUSED if not umbrellas else f"{CONFUSED[:-1]} {len(umbrellas) + 1}>"
    sid = model.ensure_state(label, is_confusion=True)
    model.merge_output(raw, sid)
    model.add_inputs(sid, inputs, Origin.FALLBACK)
    return sid


def _verdicts(items: list[Verdict]) -> list[str]:
    return [str(v) for v in items]


def _session_calls(sessions: list[GatewaySession]) -> int:
    return sum(s.calls for s in sessions)


def _faults(sessions: list[GatewaySession]) -> dict[str, int]:
    out: dict[str, int] = {}
    seen = set()
    for s in sessions:
        backend = s.backend
        if id(backend) in seen:
            continue
        seen.add(id(backend))
        for f in getattr(backend, "faults", []):
            out[f] = out.get(f, 0) + 1
    return dict(sorted(out.items()))


def run_elevate(target: TargetConfig, gateway: Gateway, budget: Budget, seed: int = 0,
                relaunch_cap: int = DEFAULT_RELAUNCH_CAP, keep_eval: bool = True,
                truth: BehaviorModel | None = None) -> TestReport:
    gateway = oracle_gateway(gateway, target)
    model = BehaviorModel()
    drv = _Driver(target, budget, seed, relaunch_cap, keep_eval)
    transcript: list[RoundRecord] = []
    sessions: list[GatewaySession] = []
    phase_sessions: dict[str, GatewaySession] = {}
    gen_cache: dict[str, list[str]] = {}
    pending_invalid: dict[int, list[str]] = {}
    counts = {p: 0 for p in PHASES}
    feedback = {p: 0 for p in PHASES}
    fallbacks = {p: 0 for p in PHASES}
    current: int | None = None

    def open_sessions() -> None:
        key = str(drv.launches)
        for phase in PHASES:
            phase_sessions[phase] = gateway.open_session(phase, key)
            sessions.append(phase_sessions[phase])

    def tally(phase: str, result) -> None:
        counts[phase] += 1
        feedback[phase] += result.feedback_rounds
        fallbacks[phase] += int(result.fallback)

    def candidate_inputs(raw: str, verdicts: list[Verdict]) -> tuple[list[str], bool]:
        key = normalize(raw)
        if key in gen_cache:
            return gen_cache[key], False
        gen = generate_inputs(raw, gateway, phase_sessions["generation"])
        tally("generation", gen)
        verdicts.extend(gen.verdicts)
        gen_cache[key] = gen.inputs
        return gen.inputs, gen.fallback

    def regenerate(sid: int, verdicts: list[Verdict]) -> None:
        bad = pending_invalid.pop(sid, [])
        if not bad:
            return
        gen = generate_inputs(model.label(sid), gateway, phase_sessions["generation"],
                              state_label=model.label(sid), invalid=bad)
        tally("generation", gen)
        verdicts.extend(gen.verdicts)
        model.add_inputs(sid, gen.inputs, Origin.FALLBACK if gen.fallback else Origin.GATEWAY)

    while drv.has_budget():
        verdicts: list[Verdict] = []
        trace: ThoughtTrace | None = None
        rejected: list[dict] = []
        if drv.handle is None:
            if not drv.can_relaunch():
                break
            raw, ended = drv.launch()
            open_sessions()
            src, phrase = model.initial, LAUNCH
            model.add_inputs(src, [LAUNCH], Origin.FALLBACK)
        else:
            assert current is not None
            src = current
            regenerate(src, verdicts)
            sel = select_input(src, model, gateway, phase_sessions["exploration"])
            tally("exploration", sel)
            verdicts.extend(sel.verdicts)
            trace = sel.trace
            rejected = [t.to_dict() for t in sel.rejected]
            phrase = sel.phrase
            raw, ended = drv.send(phrase)
        record = RoundRecord(drv.rounds, model.label(src), phrase, raw, {},
                             [], trace.to_dict() if trace else None, rejected, ended)
        transcript.append(record)

        if raw is None:
            # Timed out: the app is treated as having quit; nothing to learn from.
            record.decision = {"kind": "Timeout"}
            record.checker_verdicts = _verdicts(verdicts)
            drv.close()
            current = None
            continue

        if not ended and src != model.initial and is_confusion(raw):
            confused_sid = confusion_state(model, raw)
            model.record_interaction(src, phrase, raw, confused_sid)
            verdict = check_input_outcome(src, phrase, confused_sid, raw, model)
            verdicts.append(verdict)
            pending_invalid.setdefault(src, []).append(phrase)
            record.decision = {"kind": "Confusion", "state": confused_sid, "label": CONFUSED}
            record.checker_verdicts = _verdicts(verdicts)
            current = src
            continue

        inputs, gen_fallback = candidate_inputs(raw, verdicts)
        ext = extract_state(raw, model, gateway, phase_sessions["extraction"], src, phrase, inputs)
        tally("extraction", ext)
        verdicts.extend(ext.verdicts)
        origin = Origin.FALLBACK if gen_fallback else Origin.GATEWAY
        if isinstance(ext.decision, MergedInto):
            sid = ext.decision.state
            model.merge_output(raw, sid)
        else:
            sid = model.ensure_state(ext.decision.label)
            model.merge_output(raw, sid)
        model.add_inputs(sid, inputs, origin)
        model.record_interaction(src, phrase, raw, sid)
        if phrase != LAUNCH:
            verdict = check_input_outcome(src, phrase, sid, raw, model)
            verdicts.append(verdict)
            if not verdict.accepted:
                pending_invalid.setdefault(src, []).append(phrase)
        record.decision = ext.decision.to_dict()
        record.checker_verdicts = _verdicts(verdicts)
        if ended:
            model.mark_final(sid)
            drv.close()
            current = None
        else:
            current = sid
    drv.close()

    stats = drv.base_stats()
    stats.update({
        "llm_calls": _session_calls(sessions),
        "phase_invocations": counts,
        "feedback_rounds": feedback,
        "fallbacks": fallbacks,
        "faults": _faults(sessions),
    })
    report = TestReport("elevate", target.location or target.kind, seed, transcript, model,
                        stats=stats, eval=drv.eval,
                        config={"budget": _budget_dict(budget), "gateway": gateway.config.to_dict(),
                                "relaunch_cap": relaunch_cap})
    _attach_coverage(report, target, truth)
    return report


def _budget_dict(budget: Budget) -> dict:
    return {"max_rounds": budget.max_rounds, "wall_clock_s": budget.wall_clock_s}


def _attach_coverage(report: TestReport, target: TargetConfig, truth: BehaviorModel | None) -> None:
    from vui_modeler.coverage import coverage_timeline
    from vui_modeler.simulator import ground_truth

    if truth is None and target.spec is not None:
        truth = ground_truth(target.spec)
    if truth is not None:
        report.coverage = coverage_timeline(report, truth)


BASELINES = ("chatbot", "random", "weighted")


def _weighted_pick(records) -> str:
    # weight = 1 / (1 + count); max weight is min count, earliest on ties.
    best = max(enumerate(records), key=lambda p: (1.0 / (1 + p[1].invocation_count), -p[0]))
    return best[1].phrase


def run_baseline(kind: str, target: TargetConfig, gateway: Gateway | None, budget: Budget,
                 seed: int = 0, relaunch_cap: int = DEFAULT_RELAUNCH_CAP, keep_eval: bool = True,
                 truth: BehaviorModel | None = None) -> TestReport:
    """Sentence-level testers: every distinct output text is its own state."""
    if kind not in BASELINES:
        raise ValueError(f"unknown baseline {kind!r}; expected one of {BASELINES}")
    if kind == "chatbot":
        if gateway is None:
            raise ValueError("the chatbot baseline needs a gateway")
        gateway = oracle_gateway(gateway, target)
    rng = random.Random(seed)
    model = BehaviorModel()
    drv = _Driver(target, budget, seed, relaunch_cap, keep_eval)
    transcript: list[RoundRecord] = []
    sessions: list[GatewaySession] = []
    chat: GatewaySession | None = None
    current: int | None = None
    current_raw = ""

    def choose(sid: int, raw: str) -> str:
        if kind == "chatbot":
            assert chat is not None and gateway is not None
            reply = gateway.complete(chat, [ChatMessage("user", raw)], OracleRequest("chatbot", raw))
            return reply.strip()
        records = model.sigma(sid)
        if kind == "random":
            return rng.choice(records).phrase
        return _weighted_pick(records)

    while drv.has_budget():
        if drv.handle is None:
            if not drv.can_relaunch():
                break
            raw, ended = drv.launch()
            if kind == "chatbot":
                assert gateway is not None
                chat = gateway.open_session("chatbot", str(drv.launches))
                sessions.append(chat)
            src, phrase = model.initial, LAUNCH
            model.add_inputs(src, [LAUNCH], Origin.FALLBACK)
        else:
            assert current is not None
            src = current
            sent = choose(src, current_raw)
            phrase = normalize_phrase(sent, max_words=10_000) or sent
            model.add_inputs(src, [phrase], Origin.GATEWAY if kind == "chatbot" else Origin.FALLBACK)
            raw, ended = drv.send(sent)
        record = RoundRecord(drv.rounds, model.label(src), phrase, raw, {}, [], None, [], ended)
        transcript.append(record)
        if raw is None:
            record.decision = {"kind": "Timeout"}
            drv.close()
            current = None
            continue
        known = model.lookup(raw)
        sid = model.ensure_state(raw)
        record.decision = (MergedInto(sid, model.label(sid)) if known is not None
                           else NewState(raw)).to_dict()
        if kind != "chatbot":
            model.add_inputs(sid, rule_based_inputs(raw), Origin.FALLBACK)
        model.record_interaction(src, phrase, raw, sid)
        if ended:
            model.mark_final(sid)
            drv.close()
            current = None
        else:
            current, current_raw = sid, raw
    drv.close()

    stats = drv.base_stats()
    stats.update({"llm_calls": _session_calls(sessions)})
    report = TestReport(kind, target.location or target.kind, seed, transcript, model,
                        stats=stats, eval=drv.eval,
                        config={"budget": _budget_dict(budget), "relaunch_cap": relaunch_cap,
                                "gateway": gateway.config.to_dict() if gateway else None})
    _attach_coverage(report, target, truth)
    return report


TESTERS: dict[str, Callable[..., TestReport]] = {"elevate": run_elevate}


def run_tester(mode: str, target: TargetConfig, gateway: Gateway | None, budget: Budget,
               seed: int = 0, **kw) -> TestReport:
    if mode == "elevate":
        if gateway is None:
            raise ValueError("elevate needs a gateway")
        return run_elevate(target, gateway, budget, seed, **kw)
    return run_baseline(mode, target, gateway, budget, seed, **kw)
