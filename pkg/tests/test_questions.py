import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import GOLDEN
from vui_modeler.questions import (
    QuestionType,
    classify_question,
    is_confusion,
    jaccard,
    load_confusion_phrases,
    load_noun_lexicon,
    normalize_phrase,
    rule_based_inputs,
)

GOLDEN_CASES = json.loads((GOLDEN / "question_types.json").read_text(encoding="utf-8"))


def test_golden_file_has_five_per_type():
    families: dict[str, int] = {}
    for case in GOLDEN_CASES:
        family = "Mixed" if case["type"].startswith("Mixed") else case["type"]
        families[family] = families.get(family, 0) + 1
    assert families == {"YesNo": 5, "Selection": 5, "Instruction": 5, "Wh": 5, "Mixed": 5}
    mixed = {c["type"] for c in GOLDEN_CASES if c["type"].startswith("Mixed")}
    assert mixed == {"Mixed(InstructionSelection)", "Mixed(WhSelection)", "Mixed(YesNoSelection)"}


@pytest.mark.parametrize("case", GOLDEN_CASES, ids=[c["text"] for c in GOLDEN_CASES])
def test_golden(case):
    assert classify_question(case["text"]).value == case["type"]
    assert rule_based_inputs(case["text"]) == case["inputs"]


@pytest.mark.parametrize(
    "text,kind",
    [
        ("Would you like to continue?", QuestionType.YES_NO),
        ("You can ask for Service Times, or say Goodbye.", QuestionType.INSTRUCTION_SELECTION),
        ("What is your pet's name?", QuestionType.WH),
        ("Thanks for stopping by.", QuestionType.OTHER),
    ],
)
def test_classify_examples(text, kind):
    assert classify_question(text) is kind


def test_mixed_flag():
    assert QuestionType.WH_SELECTION.is_mixed and not QuestionType.WH.is_mixed


def test_classify_rejects_empty():
    with pytest.raises(ValueError):
        classify_question("   ")


@pytest.mark.parametrize(
    "text,expected",
    [
        ("You can ask for Service Times, or say Goodbye.", ["service times", "goodbye"]),
        ("Shall we play a game?", ["yes", "no"]),
        ("Do you want to walk or play?", ["yes", "no", "walk", "play"]),
        ("Hmm.", ["help"]),
        ("Welcome to Story Land, where Captain Kidd waits.", ["story land", "captain kidd"]),
        ("What is your shoe size?", ["help"]),
    ],
)
def test_rule_based_inputs_examples(text, expected):
    assert rule_based_inputs(text) == expected


def test_unknown_wh_noun_falls_through_to_other():
    assert classify_question("What is your shoe size?") is QuestionType.OTHER


def test_custom_lexicon():
    assert rule_based_inputs("What is your dog's name?", {"name": "rex"}) == ["rex"]


def test_confusion_phrases_and_detection():
    phrases = load_confusion_phrases()
    assert {"sorry", "didn't get", "didn't understand", "not sure", "try again", "can't help"} <= set(phrases)
    assert is_confusion("Sorry, I didn't get that.")
    assert is_confusion("I DIDN’T UNDERSTAND you")
    assert not is_confusion("Welcome back!")
    assert is_confusion("Oops, what?", ("oops",))


def test_confusion_file_is_editable(tmp_path):
    f = tmp_path / "phr.txt"
    f.write_text("# comment\npardon\n", encoding="utf-8")
    assert load_confusion_phrases(str(f)) == ("pardon",)
    lex = tmp_path / "lex.txt"
    lex.write_text("planet: mars\n", encoding="utf-8")
    assert load_noun_lexicon(str(lex)) == {"planet": "mars"}


def test_shipped_lexicon():
    assert set(load_noun_lexicon()) == {"name", "color", "number", "city", "animal", "food"}


def test_normalize_phrase():
    assert normalize_phrase("  Service   Times ") == "service times"
    assert normalize_phrase("one two three four five six") is None
    assert normalize_phrase("   ") is None


def test_jaccard():
    assert jaccard(["yes", "no"], ["walk", "play"]) == 0.0
    assert jaccard(["Walk", "play"], ["walk"]) == 0.5
    assert jaccard([], []) == 1.0


sentences = st.text(alphabet=st.characters(min_codepoint=32, max_codepoint=126), max_size=80)


@given(sentences)
def test_rule_inputs_are_short_unique_lowercase_and_pure(text):
    out = rule_based_inputs(text)
    assert out, "never empty"
    assert len(out) == len(set(out))
    for p in out:
        assert p and p == p.lower() and len(p.split()) <= 5
    assert rule_based_inputs(text) == out
