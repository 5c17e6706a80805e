"""Generating candidate inputs for an app output, and judging them afterwards."""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field
from typing import Sequence

from vui_modeler.gateway import ChatMessage, Gateway, GatewaySession, OracleRequest
from vui_modeler.model import BehaviorModel, Validity
from vui_modeler.questions import MAX_WORDS, is_confusion, normalize_phrase, rule_based_inputs
from vui_modeler.verdicts import OK, Verdict

EMPTY_ERROR = Verdict("EmptyError")


@dataclass
class Generation:
    inputs: list[str]
    verdicts: list[Verdict] = field(default_factory=list)
    feedback_rounds: int = 0
    fallback: bool = False


_BRACKETS = re.compile(r"\[.*?\]", re.DOTALL)
_QUOTED = re.compile(r"\"([^\"]*)\"|'([^']*)'")


def parse_inputs(reply: str, max_words: int = MAX_WORDS) -> list[str]:
    """Phrases from a python-list style reply; overlong and empty items are dropped."""
    m = _BRACKETS.search(reply)
    if not m:
        return []
    raw: list = []
    try:
        value = ast.literal_eval(m.group(0))
        if isinstance(value, (list, tuple)):
            raw = [str(v) for v in value]
    except (ValueError, SyntaxError):
        raw = [a or b for a, b in _QUOTED.findall(m.group(0))]
    out: list[str] = []
    for item in raw:
        phrase = normalize_phrase(item, max_words)
        if phrase and phrase not in out:
            out.append(phrase)
    return out


def generate_inputs(raw_output: str, gateway: Gateway, session: GatewaySession,
                    state_label: str | None = None, invalid: Sequence[str] = (),
                    max_words: int = MAX_WORDS) -> Generation:
    """Ask the gateway for replies to ``raw_output``.

    When ``invalid`` is non-empty the first message is the invalid-input
    feedback for those phrases instead of a fresh prompt.
    """
    if not raw_output:
        raise ValueError("raw_output must be non-empty")
    slots = {"app_output": raw_output, "state": state_label or raw_output}
    if invalid:
        prompt = gateway.templates.render(
            "generation", "feedback", {**slots, "bad_input": ", ".join(invalid)}, "invalid_suggestion"
        )
    else:
        prompt = gateway.templates.render("generation", "short" if session.started else "long", slots)
    request = OracleRequest("generation", raw_output)
    result = Generation([])
    limit = gateway.config.max_feedback_rounds
    while True:
        reply = gateway.complete(session, [ChatMessage("user", prompt)], request)
        items = parse_inputs(reply, max_words)
        if items:
            result.verdicts.append(OK)
            result.inputs = items
            return result
        result.verdicts.append(EMPTY_ERROR)
        if result.feedback_rounds == limit:
            break
        result.feedback_rounds += 1
        prompt = gateway.templates.render("generation", "feedback", slots, "empty_error")
    result.inputs = rule_based_inputs(raw_output)
    result.fallback = True
    return result


def check_input_outcome(state: int, phrase: str, next_state: int, next_raw_output: str,
                        model: BehaviorModel, confusion_phrases: tuple[str, ...] | None = None) -> Verdict:
    """Judge an input once the app's reply to it is known; updates validity."""
    confused = model.state(next_state).is_confusion or is_confusion(next_raw_output, confusion_phrases)
    if next_state == state or confused:
        model.set_validity(state, phrase, Validity.INVALID)
        return Verdict("InvalidSuggestion", phrase)
    model.set_validity(state, phrase, Validity.VALID)
    return OK
