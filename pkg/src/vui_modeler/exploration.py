"""Choosing the next input at the current state.

The gateway reasons step by step over the state's transitions and input
records; its pick is then checked against invocation counts and validity.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

from vui_modeler.gateway import ChatMessage, Gateway, GatewaySession, OracleRequest
from vui_modeler.model import BehaviorModel, InputEventRecord, Validity
from vui_modeler.questions import normalize_phrase
from vui_modeler.verdicts import ACCEPT, Verdict

_USABLE = (Validity.VALID, Validity.UNKNOWN)


@dataclass
class ThoughtTrace:
    step1: str
    step2: str
    step3: str
    chosen: str

    def to_dict(self) -> dict:
        return {"step1": self.step1, "step2": self.step2, "step3": self.step3, "chosen": self.chosen}


@dataclass
class Selection:
    phrase: str
    trace: ThoughtTrace
    verdicts: list[Verdict] = field(default_factory=list)
    rejected: list[ThoughtTrace] = field(default_factory=list)
    fallback: bool = False
    feedback_rounds: int = 0


def _better_candidates(chosen: InputEventRecord, records: Sequence[InputEventRecord]) -> list[InputEventRecord]:
    out = []
    for x in records:
        if x.phrase == chosen.phrase or x.validity not in _USABLE:
            continue
        if x.invocation_count < chosen.invocation_count or chosen.validity is Validity.INVALID:
            out.append(x)
    return out


def dominated(phrase: str, records: Sequence[InputEventRecord]) -> bool:
    """True if some other input is strictly preferable to ``phrase``."""
    for rec in records:
        if rec.phrase == phrase:
            return bool(_better_candidates(rec, records))
    return False


def check_choice(chosen: str, records: Sequence[InputEventRecord]) -> Verdict:
    by_phrase = {r.phrase: r for r in records}
    rec = by_phrase.get(chosen)
    if rec is None:
        return Verdict("NoInputError", chosen)
    better = _better_candidates(rec, records)
    if not better:
        return ACCEPT
    order = {r.phrase: i for i, r in enumerate(records)}
    best = min(better, key=lambda r: (r.invocation_count, order[r.phrase]))
    return Verdict("BetterInputSuggestion", best.phrase)


def better_input_checker(chosen: str, state: int, model: BehaviorModel) -> Verdict:
    return check_choice(chosen, model.sigma(state))


def fallback_select_records(records: Sequence[InputEventRecord]) -> str:
    if not records:
        raise ValueError("no inputs to choose from")
    usable = [r for r in records if r.validity is not Validity.INVALID]
    pool = usable or list(records)
    return min(enumerate(pool), key=lambda p: (p[1].invocation_count, p[0]))[1].phrase


def fallback_select(state: int, model: BehaviorModel) -> str:
    return fallback_select_records(model.sigma(state))


_STEP = {n: re.compile(rf"step\s*{n}\s*:\s*(.*)", re.IGNORECASE) for n in (1, 2, 3)}
_OUTPUT = re.compile(r"^\s*output\s*:\s*(.+?)\s*$", re.IGNORECASE | re.MULTILINE)


def parse_choice(reply: str) -> ThoughtTrace:
    steps = []
    for n in (1, 2, 3):
        m = _STEP[n].search(reply)
        steps.append(m.group(1).strip() if m else "")
    outs = _OUTPUT.findall(reply)
    if outs:
        chosen = outs[-1]
    else:
        lines = [ln for ln in reply.splitlines() if ln.strip()]
        chosen = lines[-1] if lines else ""
    chosen = chosen.strip().strip("\"'`")
    return ThoughtTrace(steps[0], steps[1], steps[2], chosen or "(none)")


def _match(chosen: str, records: Sequence[InputEventRecord]) -> str:
    key = normalize_phrase(chosen, max_words=1000)
    for r in records:
        if normalize_phrase(r.phrase, max_words=1000) == key:
            return r.phrase
    return chosen


def delta_lines(state: int, model: BehaviorModel) -> list[tuple[str, str, str]]:
    return [(model.label(t.src), t.input, model.label(t.dst)) for t in model.delta_from(state)]


def select_input(state: int, model: BehaviorModel, gateway: Gateway,
                 session: GatewaySession) -> Selection:
    records = model.sigma(state)
    if not records:
        raise ValueError(f"state {state} has no inputs")
    slots = {
        "state": model.label(state),
        "delta": delta_lines(state, model),
        "sigma": records,
        "inputs": [r.phrase for r in records],
    }
    request = OracleRequest("exploration", model.label(state), sigma=records)
    kind = "short" if session.started else "long"
    prompt = gateway.templates.render("exploration", kind, slots)
    result = Selection("", ThoughtTrace("", "", "", "(none)"))
    limit = gateway.config.max_feedback_rounds
    while True:
        reply = gateway.complete(session, [ChatMessage("user", prompt)], request)
        trace = parse_choice(reply)
        trace.chosen = _match(trace.chosen, records)
        verdict = check_choice(trace.chosen, records)
        result.verdicts.append(verdict)
        if verdict.accepted:
            result.phrase, result.trace = trace.chosen, trace
            return result
        result.rejected.append(trace)
        if result.feedback_rounds == limit:
            break
        result.feedback_rounds += 1
        if verdict.kind == "NoInputError":
            prompt = gateway.templates.render(
                "exploration", "feedback", {**slots, "bad_input": trace.chosen}, "no_input_error"
            )
        else:
            prompt = gateway.templates.render(
                "exploration",
                "feedback",
                {**slots, "bad_input": trace.chosen, "better_input": verdict.ref},
                "better_input_suggestion",
            )
    choice = fallback_select_records(records)
    result.phrase = choice
    result.trace = ThoughtTrace("fallback", "fallback", "least-sent usable input", choice)
    result.fallback = True
    return result
