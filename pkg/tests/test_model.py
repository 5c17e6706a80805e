import json
import re

import pydot
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from vui_modeler.model import (
    LAUNCH,
    START,
    BehaviorModel,
    EmptyLabel,
    ModelError,
    Origin,
    ParseError,
    UnknownInput,
    UnknownState,
    Validity,
    import_json,
    new_model,
    replay,
    to_dot,
)


def test_new_model_has_only_start():
    m = new_model()
    assert [s.label for s in m.states] == [START]
    assert m.transitions == [] and m.finals == set()
    assert m.sigma(m.initial) == []


def test_ensure_state_grows_q():
    m = new_model()
    m.ensure_state("Welcome!")
    assert len(m.states) == 2


def test_fresh_model_round_trips():
    m = new_model()
    assert import_json(m.export("json")) == m


def test_ensure_state_is_idempotent_and_distinct():
    m = new_model()
    a = m.ensure_state("Welcome!")
    assert m.ensure_state("Welcome!") == a
    assert m.ensure_state("  welcome!  ") == a
    b = m.ensure_state("B")
    assert a != b


def test_ensure_state_resolves_merged_variant():
    m = new_model()
    w = m.ensure_state("Welcome!")
    m.merge_output("Hello there", w)
    assert m.ensure_state("Hello there") == w


@pytest.mark.parametrize("label", ["", "   "])
def test_empty_label_rejected(label):
    with pytest.raises(EmptyLabel):
        new_model().ensure_state(label)


def test_merge_keeps_q_and_dedupes():
    m = new_model()
    menu = m.ensure_state("Do you want to walk or play?")
    m.merge_output("Would you like to walk or play?", menu)
    m.merge_output("Would you like to walk or play?", menu)
    assert len(m.states) == 2
    doc = json.loads(m.export("json"))
    variants = doc["states"][1]["variants"]
    assert variants.count("Would you like to walk or play?") == 1
    assert m.state(menu).label == "Do you want to walk or play?"


def test_a_text_has_one_owner():
    m = new_model()
    a = m.ensure_state("Welcome")
    b = m.ensure_state("Menu")
    m.merge_output("Hello", a)
    with pytest.raises(ModelError):
        m.merge_output("hello", b)
    with pytest.raises(ModelError):
        m.merge_output("Menu", a)
    with pytest.raises(ModelError):
        m.merge_output("Fresh", m.initial)
    assert m.lookup("HELLO") == a and m.state(b).variants == ["Menu"]
    m.validate()


def test_merge_into_unknown_state():
    with pytest.raises(UnknownState):
        new_model().merge_output("x", 42)


def test_record_interaction_counts():
    m = new_model()
    w = m.ensure_state("Welcome")
    m.add_inputs(m.initial, [LAUNCH])
    m.record_interaction(m.initial, LAUNCH, "Welcome", w)
    assert [(t.src, t.input, t.dst, t.count) for t in m.transitions] == [(0, LAUNCH, w, 1)]
    m.record_interaction(m.initial, LAUNCH, "Welcome", w)
    assert len(m.transitions) == 1 and m.transitions[0].count == 2
    assert m.record(m.initial, LAUNCH).invocation_count == 2


def test_nondeterminism_is_preserved():
    m = new_model()
    a, b = m.ensure_state("A"), m.ensure_state("B")
    m.add_inputs(a, ["go"])
    m.record_interaction(a, "go", "B", b)
    c = m.ensure_state("C")
    m.record_interaction(a, "go", "C", c)
    assert sorted((t.dst, t.count) for t in m.delta_from(a)) == [(b, 1), (c, 1)]
    assert m.targets(a, "go") == [b, c]
    m.validate()


def test_record_interaction_errors():
    m = new_model()
    a = m.ensure_state("A")
    with pytest.raises(UnknownInput):
        m.record_interaction(a, "nope", "A", a)
    with pytest.raises(UnknownState):
        m.record_interaction(99, "nope", "A", a)
    m.add_inputs(a, ["go"])
    with pytest.raises(UnknownState):
        m.record_interaction(a, "go", "X", 99)


def test_validity_lifecycle():
    m = new_model()
    s, t = m.ensure_state("S"), m.ensure_state("T")
    m.add_inputs(s, ["blue", "walk"])
    assert m.record(s, "walk").validity is Validity.UNKNOWN
    m.record_interaction(s, "blue", "S again", s)
    m.set_validity(s, "blue", Validity.INVALID)
    assert m.record(s, "blue").validity is Validity.INVALID
    # A later distinct, non-confusion target clears it.
    m.record_interaction(s, "blue", "T", t)
    assert m.record(s, "blue").validity is Validity.VALID
    with pytest.raises(UnknownInput):
        m.set_validity(s, "nothing", Validity.VALID)
    with pytest.raises(ModelError):
        m.set_validity(s, "walk", Validity.VALID)  # never invoked stays Unknown
    with pytest.raises(ModelError):
        m.set_validity(s, "blue", Validity.UNKNOWN)


def test_views_are_snapshots_in_insertion_order():
    m = new_model()
    s = m.ensure_state("S")
    assert m.sigma(s) == [] and m.delta_from(s) == []
    m.add_inputs(s, ["b", "a", "c"])
    view = m.sigma(s)
    assert [r.phrase for r in view] == ["b", "a", "c"]
    view[0].invocation_count = 99
    assert m.record(s, "b").invocation_count == 0
    for target, phrase in zip("XYX", "bac"):
        m.record_interaction(s, phrase, target, m.ensure_state(target))
    assert len(m.delta_from(s)) <= 3
    assert sum(t.count for t in m.delta_from(s)) == 3
    with pytest.raises(UnknownState):
        m.sigma(77)


def test_dot_for_fresh_model():
    dot = new_model().export("dot")
    assert dot.count("[label=") == 1 and '"<START>"' in dot
    assert "->" not in dot


def test_dot_single_edge_and_double_circle():
    m = new_model()
    w = m.ensure_state("Bye")
    m.add_inputs(m.initial, [LAUNCH])
    m.record_interaction(m.initial, LAUNCH, "Bye", w)
    m.mark_final(w)
    dot = to_dot(m)
    assert dot.count("->") == 1
    assert "doublecircle" in dot
    assert "<LAUNCH> ×1" in dot


def test_import_rejects_garbage():
    with pytest.raises(ParseError):
        import_json("{not json")
    with pytest.raises(ParseError):
        import_json("[]")
    with pytest.raises(ParseError):
        import_json(json.dumps({"states": []}))
    doc = json.loads(new_model().export("json"))
    doc["finals"] = [5]
    with pytest.raises(ParseError):
        import_json(json.dumps(doc))


# -- randomized operation sequences ---------------------------------------

LABELS = ["Welcome", "Menu", "Game", "Bye", "Sorry, try again", "Help"]
PHRASES = ["yes", "no", "walk", "play", "help", LAUNCH]

op = st.one_of(
    st.tuples(st.just("ensure"), st.sampled_from(LABELS), st.booleans()),
    st.tuples(st.just("merge"), st.text(min_size=1, max_size=12), st.integers(0, 8)),
    st.tuples(st.just("add"), st.integers(0, 8), st.lists(st.sampled_from(PHRASES), max_size=3),
              st.sampled_from(list(Origin))),
    st.tuples(st.just("record"), st.integers(0, 8), st.sampled_from(PHRASES), st.integers(0, 8)),
    st.tuples(st.just("validity"), st.integers(0, 8), st.sampled_from(PHRASES),
              st.sampled_from([Validity.VALID, Validity.INVALID])),
    st.tuples(st.just("final"), st.integers(0, 8)),
)


def apply(m: BehaviorModel, o) -> None:
    kind = o[0]
    try:
        if kind == "ensure":
            m.ensure_state(o[1], is_confusion=o[2])
        elif kind == "merge":
            if o[1].strip():
                m.merge_output(o[1], o[2])
        elif kind == "add":
            m.add_inputs(o[1], o[2], o[3])
        elif kind == "record":
            target = o[3]
            m.record_interaction(o[1], o[2], m.label(target) if target in m else "x", target)
        elif kind == "validity":
            m.set_validity(o[1], o[2], o[3])
        else:
            m.mark_final(o[1])
    except (UnknownState, UnknownInput, ModelError):
        pass  # rejected operations must leave the model valid


@settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.lists(op, max_size=40))
def test_random_operation_sequences_keep_invariants(ops):
    m = new_model()
    sent: dict[tuple[int, str], int] = {}
    for o in ops:
        before = len(m.journal)
        apply(m, o)
        if o[0] == "record" and len(m.journal) > before:
            sent[(o[1], o[2])] = sent.get((o[1], o[2]), 0) + 1
        m.validate()
    assert m.initial in m and m.finals <= {s.id for s in m.states}
    for s in m.states:
        for r in m.sigma(s.id):
            assert (r.validity is Validity.UNKNOWN) == (r.invocation_count == 0)
            assert r.invocation_count == sent.get((s.id, r.phrase), 0)
        for v in s.variants:
            assert m.ensure_state(v) == s.id or m.lookup(v) == s.id
    assert import_json(m.export("json")) == m
    assert replay(m.journal) == m
    graphs = pydot.graph_from_dot_data(m.export("dot"))
    assert graphs and len(graphs[0].get_edges()) == len(m.transitions)
    assert len(graphs[0].get_nodes()) == len(m.states) + sum(
        1 for n in graphs[0].get_nodes() if n.get_name() in ("node", "edge", "graph"))


def test_dot_ids_are_plain_identifiers():
    m = new_model()
    m.ensure_state('Tricky "quoted"\nlabel')
    for line in m.export("dot").splitlines()[2:-1]:
        assert re.match(r"^  s\d+ ", line)
    assert pydot.graph_from_dot_data(m.export("dot"))
