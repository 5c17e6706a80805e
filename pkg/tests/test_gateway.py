import json

import httpx
import pytest

from conftest import free_port
from vui_modeler.exploration import parse_choice
from vui_modeler.gateway import (
    FAULTS,
    BackendUnavailable,
    ChatMessage,
    ContextOverflow,
    Gateway,
    GatewayConfig,
    MissingSlot,
    NoisyBackend,
    OracleRequest,
    PerfectBackend,
    PromptTemplate,
    RemoteBackend,
    TemplateError,
    TemplateSet,
    render,
)
from vui_modeler.gateway.backends import RateLimiter
from vui_modeler.gateway.prompts import PLACEHOLDERS, placeholders
from vui_modeler.generation import parse_inputs
from vui_modeler.model import InputEventRecord, Validity


@pytest.fixture(scope="module")
def templates():
    return TemplateSet.load()


# -- templates --------------------------------------------------------------

def test_every_shipped_template_is_valid(templates):
    for phase in ("extraction", "generation", "exploration"):
        for kind in ("long", "short"):
            tpl = templates.get(phase, kind)
            assert set(placeholders(tpl.body)) <= PLACEHOLDERS
        assert "few_shots" in placeholders(templates.get(phase, "long").body)
        assert templates.few_shots[phase]


def test_feedback_labels(templates):
    labels = {
        "extraction": ["no_state_error", "not_merge_suggestion", "should_merge_suggestion"],
        "generation": ["empty_error", "invalid_suggestion"],
        "exploration": ["no_input_error", "better_input_suggestion"],
    }
    for phase, names in labels.items():
        for name in names:
            assert templates.get(phase, "feedback", name).label == name
    with pytest.raises(TemplateError):
        templates.get("extraction", "feedback", "nope")


def test_short_extraction_render(templates):
    text = render(templates.get("extraction", "short"), {"app_output": "Hi", "state_set": ["<START>"]})
    assert '["<START>"]' in text and "Hi" in text


def test_missing_sigma(templates):
    tpl = templates.get("exploration", "long")
    with pytest.raises(MissingSlot) as err:
        render(tpl, {"state": "Menu", "delta": [], "few_shots": ""})
    assert err.value.name == "sigma"


def test_render_is_pure(templates):
    slots = {
        "state": "Menu",
        "delta": [("Menu", "walk", "Walk")],
        "sigma": [InputEventRecord("walk", 1, Validity.VALID), InputEventRecord("play")],
    }
    a = templates.render("exploration", "long", slots)
    assert a == templates.render("exploration", "long", slots)
    assert "delta(Menu, walk) = Walk" in a
    assert "walk (invoked 1 times, Valid)" in a
    assert "play (invoked 0 times, Unknown)" in a


def test_template_validation():
    with pytest.raises(TemplateError):
        PromptTemplate("extraction", "short", "{bogus}")
    with pytest.raises(TemplateError):
        PromptTemplate("extraction", "long", "no shots here {app_output}")
    with pytest.raises(TemplateError):
        PromptTemplate("extraction", "feedback", "{app_output}")
    with pytest.raises(TemplateError):
        PromptTemplate("planning", "short", "x")


def test_template_dir_override(tmp_path, templates):
    from importlib import resources

    src = resources.files("vui_modeler.gateway") / "templates"
    for f in src.iterdir():
        (tmp_path / f.name).write_text(f.read_text(encoding="utf-8"), encoding="utf-8")
    (tmp_path / "extraction_short.txt").write_text("CUSTOM {app_output}", encoding="utf-8")
    custom = TemplateSet.load(tmp_path)
    assert custom.render("extraction", "short", {"app_output": "x"}) == "CUSTOM x"


def test_generation_few_shots_follow_rules(templates):
    assert 'Output: ["yes", "no", "walk", "play"]' in templates.few_shots["generation"]


# -- sessions ---------------------------------------------------------------

def test_chat_message_validation():
    with pytest.raises(ValueError):
        ChatMessage("robot", "x")
    with pytest.raises(ValueError):
        ChatMessage("user", "")
    assert ChatMessage("user", "hi").to_wire() == {"role": "user", "content": "hi"}


def test_config_validation():
    with pytest.raises(ValueError):
        GatewayConfig(error_rate=1.5)
    with pytest.raises(ValueError):
        GatewayConfig(max_feedback_rounds=0)
    with pytest.raises(ValueError):
        GatewayConfig(backend="remote")
    with pytest.raises(ValueError):
        GatewayConfig(backend="magic")
    assert GatewayConfig().max_feedback_rounds == 3


def test_session_history_keeps_first_exchange_and_tail():
    gw = Gateway(GatewayConfig(history_window=2))
    sess = gw.open_session("generation")
    assert not sess.started
    for i in range(5):
        gw.complete(sess, [ChatMessage("user", f"Say x{i}.")], OracleRequest("generation", f"Say x{i}."))
    ctx = sess.context([ChatMessage("user", "next")])
    assert ctx[0].text == "Say x0." and ctx[1].role == "assistant"
    assert [m.text for m in ctx[2:4]] == ["Say x4.", 'Output: ["x4"]']
    assert len(sess.transcript) == 10  # append-only, nothing dropped
    assert sess.calls == 5


def test_context_overflow():
    gw = Gateway(GatewayConfig(context_limit=10))
    sess = gw.open_session("generation")
    with pytest.raises(ContextOverflow):
        gw.complete(sess, [ChatMessage("user", "x" * 11)], OracleRequest("generation", "x"))
    assert sess.transcript == []


def test_sessions_per_phase_and_key_are_independent():
    gw = Gateway(GatewayConfig(backend="noisy", seed=3, error_rate=0.5))
    a = gw.open_session("extraction", "1")
    b = gw.open_session("extraction", "2")
    assert a.backend is not b.backend
    assert a.backend.rng.random() != b.backend.rng.random()


# -- oracle backends --------------------------------------------------------

def test_perfect_extraction_returns_truth_label():
    truth = {"welcome!": "w", "hello there!": "w", "bye.": "b"}
    be = PerfectBackend(truth)
    req = OracleRequest("extraction", "Hello there!", state_set=["Welcome!", "Bye."])
    assert be.reply([], req) == "Output: Welcome!"
    req2 = OracleRequest("extraction", "Something new", state_set=["Welcome!"])
    assert be.reply([], req2) == "Output: Something new"


def test_perfect_generation_and_exploration():
    be = PerfectBackend()
    assert parse_inputs(be.reply([], OracleRequest("generation", "Do you want to walk or play?"))) == [
        "yes", "no", "walk", "play"]
    sigma = [InputEventRecord("goodbye", 1, Validity.VALID), InputEventRecord("service times")]
    choice = parse_choice(be.reply([], OracleRequest("exploration", "Menu", sigma=sigma)))
    assert choice.chosen == "service times" and choice.step1


def test_oracle_needs_structured_request():
    with pytest.raises(BackendUnavailable):
        PerfectBackend().reply([ChatMessage("user", "hi")], None)


def _fault_requests():
    sigma = [InputEventRecord("walk", 2, Validity.VALID), InputEventRecord("play")]
    truth = {"welcome!": "w", "hi again!": "w", "menu.": "m"}
    return truth, {
        "extraction": OracleRequest(
            "extraction", "Hi again!", state_set=["Welcome!", "Menu."],
            hints={"candidate_inputs": ["walk"], "state_inputs": {"Welcome!": ["walk"], "Menu.": ["x"]},
                   "threshold": 0.5, "prev_targets": ["Welcome!"]},
        ),
        "generation": OracleRequest("generation", "Do you want to walk or play?"),
        "exploration": OracleRequest("exploration", "Menu.", sigma=sigma),
    }


def test_noisy_full_error_rate_always_violates():
    truth, reqs = _fault_requests()
    be = NoisyBackend(truth, seed=7, error_rate=1.0)
    perfect = PerfectBackend(truth)
    for phase, req in reqs.items():
        for _ in range(10):
            reply = be.reply([], req)
            assert reply != perfect.reply([], req)
    assert len(be.faults) == 30
    assert set(be.faults) <= {f for fs in FAULTS.values() for f in fs}


@pytest.mark.parametrize("fault", [f for fs in FAULTS.values() for f in fs])
def test_every_fault_is_reachable_within_50_calls(fault):
    truth, reqs = _fault_requests()
    phase = next(p for p, fs in FAULTS.items() if fault in fs)
    for seed in range(20):
        be = NoisyBackend(truth, seed=seed, error_rate=0.5)
        for _ in range(50):
            be.reply([], reqs[phase])
            if fault in be.faults:
                return
    pytest.fail(f"{fault} never injected")


def test_noisy_zero_rate_equals_perfect():
    truth, reqs = _fault_requests()
    noisy, perfect = NoisyBackend(truth, seed=1, error_rate=0.0), PerfectBackend(truth, seed=1)
    for req in reqs.values():
        assert noisy.reply([], req) == perfect.reply([], req)
    assert noisy.faults == []


def test_noisy_is_deterministic():
    truth, reqs = _fault_requests()
    runs = []
    for _ in range(2):
        be = NoisyBackend(truth, seed=11, error_rate=0.6)
        runs.append([be.reply([], r) for r in list(reqs.values()) * 5])
    assert runs[0] == runs[1]


# -- remote backend ---------------------------------------------------------

def test_remote_wire_format(monkeypatch):
    seen = {}

    def handler(request: httpx.Request) -> httpx.Response:
        seen["body"] = json.loads(request.content)
        seen["auth"] = request.headers.get("authorization")
        return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": "Output: ok"}}]})

    monkeypatch.setenv("ELEVATE_API_KEY", "sekrit")
    gw = Gateway(GatewayConfig(backend="remote", endpoint="https://llm.test/v1/chat", temperature=0.2),
                 transport=httpx.MockTransport(handler))
    sess = gw.open_session("extraction")
    assert gw.complete(sess, [ChatMessage("user", "hello")]) == "Output: ok"
    assert seen["body"] == {"model": "gpt-4", "messages": [{"role": "user", "content": "hello"}],
                            "temperature": 0.2}
    assert seen["auth"] == "Bearer sekrit"


def test_remote_retries_then_gives_up():
    calls = []

    def handler(request):
        calls.append(1)
        raise httpx.ConnectError("refused", request=request)

    be = RemoteBackend("https://llm.test", "m", backoff_s=0.0, transport=httpx.MockTransport(handler))
    with pytest.raises(BackendUnavailable):
        be.reply([ChatMessage("user", "x")])
    assert len(calls) == 3


def test_remote_unreachable_endpoint():
    be = RemoteBackend(f"http://127.0.0.1:{free_port()}/v1", "m", backoff_s=0.0, timeout_s=2)
    with pytest.raises(BackendUnavailable, match="3 attempts"):
        be.reply([ChatMessage("user", "x")])


def test_remote_recovers_after_server_error():
    replies = iter([httpx.Response(503), httpx.Response(
        200, json={"choices": [{"message": {"content": "fine"}}]})])
    be = RemoteBackend("https://llm.test", "m", backoff_s=0.0,
                       transport=httpx.MockTransport(lambda r: next(replies)))
    assert be.reply([ChatMessage("user", "x")]) == "fine"


def test_remote_bad_shape():
    be = RemoteBackend("https://llm.test", "m", backoff_s=0.0,
                       transport=httpx.MockTransport(lambda r: httpx.Response(200, json={"nope": 1})))
    with pytest.raises(BackendUnavailable, match="shape"):
        be.reply([ChatMessage("user", "x")])


def test_rate_limiter_spaces_calls(monkeypatch):
    clock = {"t": 100.0}
    sleeps = []
    monkeypatch.setattr("vui_modeler.gateway.backends.time.monotonic", lambda: clock["t"])
    monkeypatch.setattr("vui_modeler.gateway.backends.time.sleep", lambda s: sleeps.append(s))
    lim = RateLimiter(60)  # one per second
    lim.acquire()
    lim.acquire()
    lim.acquire()
    assert sleeps == [pytest.approx(1.0), pytest.approx(2.0)]
