"""Surface-cue question typing and rule-based input extraction.

Apps ask five broad kinds of question: yes/no, selection, instruction
("say X"), wh-questions, and mixtures of selection with one of the other
three.  Each kind implies a small set of sensible replies, which is what
``rule_based_inputs`` returns.  No NLP pipeline is involved; everything is
regex and word lists, so results are deterministic.
"""

from __future__ import annotations

import re
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path

MAX_WORDS = 5

AUX_WORDS = frozenset(
    "would do does did is are was were can could shall should will may "
    "have has am wanna".split()
)
WH_WORDS = frozenset("what what's which who whom whose where when why how".split())
FRAME_WORDS = frozenset(
    "to like want prefer choose pick between rather for about hear need get is are "
    "be you me us we i either say ask tell do would can could shall should will "
    "which what one try".split()
)
ARTICLES = frozenset({"a", "an", "the", "some"})

_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")
_INSTRUCTION_CUE = re.compile(r"\b(?:say|ask|tell me)\b", re.IGNORECASE)
_INSTRUCTION_PHRASE = re.compile(
    r"\b(?:say|ask(?:\s+(?:for|about))?|tell\s+me(?:\s+about)?)\s+"
    r"(\"[^\"]+\"|'[^']+'|[^,.!?;:]+?)"
    r"(?=\s+(?:to|or|and|if|when|whenever|for|at|anytime|now|again|later|please)\b|[,.!?;:]|$)",
    re.IGNORECASE,
)
_SEPARATORS = re.compile(r",\s*(?:or|and)\s+|\s+or\s+|\s+and\s+|,\s*", re.IGNORECASE)
_CUE_PREFIX = re.compile(
    r"^(?:just\s+)?(?:say|ask\s+(?:for|about)|ask|tell\s+me(?:\s+about)?)\s+", re.IGNORECASE
)
_CAPITALIZED = re.compile(r"\b([A-Z][a-z]+(?:\s+[A-Z][a-z]+)*)\b")


class QuestionType(str, Enum):
    YES_NO = "YesNo"
    SELECTION = "Selection"
    INSTRUCTION = "Instruction"
    WH = "Wh"
    INSTRUCTION_SELECTION = "Mixed(InstructionSelection)"
    WH_SELECTION = "Mixed(WhSelection)"
    YES_NO_SELECTION = "Mixed(YesNoSelection)"
    OTHER = "Other"

    @property
    def is_mixed(self) -> bool:
        return self.value.startswith("Mixed")


def _data_path(name: str) -> Path:
    return Path(str(resources.files("vui_modeler") / "data" / name))


def _content_lines(path: Path) -> list[str]:
    lines = path.read_text(encoding="utf-8").splitlines()
    return [ln.strip() for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]


@lru_cache(maxsize=None)
def load_confusion_phrases(path: str | None = None) -> tuple[str, ...]:
    p = Path(path) if path else _data_path("confusion_phrases.txt")
    return tuple(ln.casefold() for ln in _content_lines(p))


@lru_cache(maxsize=None)
def load_noun_lexicon(path: str | None = None) -> dict[str, str]:
    p = Path(path) if path else _data_path("nouns.txt")
    lexicon = {}
    for ln in _content_lines(p):
        key, _, value = ln.partition(":")
        if key.strip() and value.strip():
            lexicon[key.strip().casefold()] = value.strip().casefold()
    return lexicon


def _plain(text: str) -> str:
    return text.replace("’", "'").replace("‘", "'").replace("“", '"').replace("”", '"')


def is_confusion(text: str, phrases: tuple[str, ...] | None = None) -> bool:
    phrases = phrases if phrases is not None else load_confusion_phrases()
    folded = _plain(text).casefold()
    return any(p in folded for p in phrases)


def normalize_phrase(text: str, max_words: int = MAX_WORDS) -> str | None:
    """Lowercased, trimmed reply phrase, or None if empty or too long."""
    cleaned = _plain(str(text)).strip().strip("\"'`").strip()
    cleaned = re.sub(r"\s+", " ", cleaned).strip(" .,!?;:").casefold()
    if not cleaned or len(cleaned.split()) > max_words:
        return None
    return cleaned


def _sentences(text: str) -> list[str]:
    return [s.strip() for s in _SENTENCE_SPLIT.split(_plain(text).strip()) if s.strip()]


def _first_word(sentence: str) -> str:
    m = re.match(r"\W*([A-Za-z']+)", sentence)
    return m.group(1).casefold() if m else ""


def _clean_option(item: str) -> str | None:
    item = item.strip().strip(" .!?;:\"'")
    item = re.sub(r"^(?:or|and)\s+", "", item, flags=re.IGNORECASE)
    item = _CUE_PREFIX.sub("", item)
    words = item.split()
    while words and words[0].casefold() in ARTICLES:
        words = words[1:]
    return normalize_phrase(" ".join(words))


def _list_region(sentence: str) -> str | None:
    """The part of ``sentence`` holding an option list, if it has one."""
    body = sentence.rstrip(" .!?")
    if ":" in body:
        region = body.rsplit(":", 1)[1]
        return region if _SEPARATORS.search(region) else None
    if not re.search(r"\s+or\s+", body, re.IGNORECASE):
        return None
    if _first_word(body) in WH_WORDS and "," in body:
        return body.split(",", 1)[1]
    first = _SEPARATORS.search(body)
    head, rest = body[: first.start()], body[first.start():]
    words = head.split()
    option: list[str] = []
    for w in reversed(words):
        bare = w.strip("\"'").casefold()
        if bare in FRAME_WORDS or bare in ARTICLES:
            break
        option.insert(0, w)
    if not option:
        return None
    return " ".join(option) + rest


def _options(sentence: str) -> list[str]:
    region = _list_region(sentence)
    if region is None:
        return []
    out = []
    for part in _SEPARATORS.split(region):
        opt = _clean_option(part)
        if opt:
            out.append(opt)
    return out if len(out) >= 2 else []


def _instruction_phrases(text: str) -> list[str]:
    out = []
    for m in _INSTRUCTION_PHRASE.finditer(_plain(text)):
        phrase = _clean_option(m.group(1))
        if phrase:
            out.append(phrase)
    return out


def _lexicon_answer(sentence: str, lexicon: dict[str, str]) -> str | None:
    for w in re.findall(r"[A-Za-z]+(?:'s)?", sentence):
        key = w.casefold().removesuffix("'s")
        if key in lexicon:
            return lexicon[key]
    return None


def _noun_phrases(text: str) -> list[str]:
    out = []
    for sentence in _sentences(text):
        for m in _CAPITALIZED.finditer(sentence):
            if m.start() == len(sentence) - len(sentence.lstrip()):
                continue
            if m.group(1) in {"I", "I'm"}:
                continue
            phrase = normalize_phrase(m.group(1))
            if phrase:
                out.append(phrase)
    return out


class _Parse:
    def __init__(self, text: str, lexicon: dict[str, str] | None = None) -> None:
        self.text = text
        self.sentences = _sentences(text)
        questions = [s for s in self.sentences if s.endswith("?")]
        self.question = questions[-1] if questions else None
        lead = _first_word(self.question) if self.question else ""
        self.yes_no = lead in AUX_WORDS
        self.wh = lead in WH_WORDS
        self.instruction = bool(_INSTRUCTION_CUE.search(text))
        ordered = ([self.question] if self.question else []) + [
            s for s in self.sentences if s != self.question
        ]
        lexicon = lexicon if lexicon is not None else load_noun_lexicon()
        # A "what <noun>" question only counts as Wh when the lexicon knows the noun.
        self.wh_answer = _lexicon_answer(self.question or "", lexicon) if self.wh else None
        self.options: list[str] = []
        for s in ordered:
            opts = _options(s)
            if opts:
                self.options = opts
                break

    @property
    def kind(self) -> QuestionType:
        has_list = bool(self.options)
        if self.instruction and has_list:
            return QuestionType.INSTRUCTION_SELECTION
        if self.wh and has_list:
            return QuestionType.WH_SELECTION
        if self.yes_no and has_list:
            return QuestionType.YES_NO_SELECTION
        if self.instruction and _instruction_phrases(self.text):
            return QuestionType.INSTRUCTION
        if has_list:
            return QuestionType.SELECTION
        if self.yes_no:
            return QuestionType.YES_NO
        if self.wh and self.wh_answer:
            return QuestionType.WH
        return QuestionType.OTHER


def classify_question(raw_output: str, lexicon: dict[str, str] | None = None) -> QuestionType:
    if not raw_output or not raw_output.strip():
        raise ValueError("cannot classify an empty output")
    return _Parse(raw_output, lexicon).kind


def rule_based_inputs(raw_output: str, lexicon: dict[str, str] | None = None) -> list[str]:
    """Candidate replies implied by the question's surface form.

    Items are lowercased, at most five words, deduplicated, and ordered as
    they appear in the text (yes/no first for yes/no mixtures).
    """
    if not raw_output or not raw_output.strip():
        return ["help"]
    p = _Parse(raw_output, lexicon)
    kind = p.kind
    folded = _plain(raw_output).casefold()
    items: list[tuple[int, str]] = []

    def add(phrases: list[str]) -> None:
        for ph in phrases:
            pos = folded.find(ph)
            items.append((pos if pos >= 0 else len(folded), ph))

    if kind in (QuestionType.YES_NO, QuestionType.YES_NO_SELECTION):
        items += [(-2, "yes"), (-1, "no")]
    if kind in (QuestionType.INSTRUCTION, QuestionType.INSTRUCTION_SELECTION):
        add(_instruction_phrases(raw_output))
    if kind.is_mixed or kind is QuestionType.SELECTION:
        add(p.options)
    if kind in (QuestionType.WH, QuestionType.WH_SELECTION) and p.wh_answer:
        items.append((-1, p.wh_answer))
    if kind is QuestionType.OTHER:
        add(_noun_phrases(raw_output))

    items.sort(key=lambda pair: pair[0])
    seen: set[str] = set()
    out = []
    for _, ph in items:
        if ph not in seen:
            seen.add(ph)
            out.append(ph)
    return out or ["help"]


def jaccard(a, b) -> float:
    """Overlap of two phrase collections after normalization (1.0 when both empty)."""
    sa = {p for p in (normalize_phrase(x, max_words=1000) for x in a) if p}
    sb = {p for p in (normalize_phrase(x, max_words=1000) for x in b) if p}
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)
