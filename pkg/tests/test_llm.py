"""Prompt pipeline: template rendering, chat client, marker parsing,
and end-to-end detection against a scripted transport."""

import json
import threading

import httpx
import pytest

from conftest import GOLDEN_DIR
from rtica.errors import BadConfig, MalformedResponse, TransportError, UnboundPlaceholder
from rtica.llm import (
    API_KEY_ENV,
    CostMeter,
    LlmConfig,
    PhaseToggles,
    PromptTemplate,
    call_model,
    llm_detect,
    load_template,
    parse_verdicts,
    render_prompt,
)

APPLES_TEXT = (
    "John bought some apples. He gave 3 to Mary.\n"
    "How many apples did he originally have?"
)

CONDITIONS = "1. value of given_away\n2. value of current_left"


def make_config(**overrides):
    base = dict(
        endpoint="http://mock.test/v1",
        model="test-model",
        seeds=(0, 1, 2),
        backoff_base=0.0,
    )
    base.update(overrides)
    return LlmConfig(**base)


def chat_response(text, status=200, usage=None):
    body = {
        "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": usage or {"prompt_tokens": 10, "completion_tokens": 5},
    }
    return httpx.Response(status, json=body)


class TestTemplates:
    @pytest.mark.parametrize("phase", ["understanding", "enumeration", "verification"])
    def test_render_matches_golden(self, phase):
        bindings = {"PROBLEM_TEXT": APPLES_TEXT}
        if phase == "verification":
            bindings["CONDITIONS"] = CONDITIONS
        rendered = render_prompt(load_template(phase), bindings)
        assert rendered == (GOLDEN_DIR / f"{phase}_apples.txt").read_text()

    def test_placeholders_discovered(self):
        t = load_template("verification")
        assert t.placeholders == {"PROBLEM_TEXT", "CONDITIONS"}

    def test_unbound_placeholder_raises(self):
        with pytest.raises(UnboundPlaceholder):
            render_prompt(load_template("verification"), {"PROBLEM_TEXT": "x"})

    def test_unknown_phase(self):
        with pytest.raises(BadConfig):
            load_template("summarization")

    def test_custom_template_dir(self, tmp_path):
        (tmp_path / "understanding.txt").write_text("Custom: {PROBLEM_TEXT}\n")
        t = load_template("understanding", tmp_path)
        assert render_prompt(t, {"PROBLEM_TEXT": "hi"}) == "Custom: hi\n"


class TestConfig:
    def test_from_file(self, tmp_path):
        cfg_file = tmp_path / "llm.conf"
        cfg_file.write_text(
            "endpoint = http://h/v1  # local\nmodel = m\nseeds = 3,4\ntemperature = 0.2\n"
        )
        cfg = LlmConfig.from_file(cfg_file)
        assert cfg.endpoint == "http://h/v1"
        assert cfg.seeds == (3, 4)
        assert cfg.temperature == 0.2

    def test_missing_required_key(self, tmp_path):
        cfg_file = tmp_path / "llm.conf"
        cfg_file.write_text("model = m\n")
        with pytest.raises(BadConfig):
            LlmConfig.from_file(cfg_file)

    def test_invalid_values(self):
        with pytest.raises(BadConfig):
            make_config(top_p=0.0)
        with pytest.raises(BadConfig):
            make_config(temperature=-1.0)
        with pytest.raises(BadConfig):
            make_config(seeds=())


class TestCostMeter:
    def test_accumulates(self):
        meter = CostMeter()
        meter.add(10, 5, 0.5)
        meter.add(20, 10, 1.0)
        s = meter.summary()
        assert s["prompt_tokens"] == 30
        assert s["completion_tokens"] == 15
        assert s["total_tokens"] == 45
        assert s["avg_tokens"] == 22.5
        assert s["processing_time_s"] == pytest.approx(1.5)

    def test_thread_safe(self):
        meter = CostMeter()
        threads = [
            threading.Thread(target=lambda: [meter.add(1, 1, 0.0) for _ in range(500)])
            for _ in range(4)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert meter.summary()["total_tokens"] == 4000


class TestCallModel:
    def test_success_and_usage(self):
        meter = CostMeter()
        client = httpx.Client(
            transport=httpx.MockTransport(lambda req: chat_response("hello"))
        )
        text, usage = call_model(make_config(), "hi", client=client, meter=meter)
        assert text == "hello"
        assert usage["prompt_tokens"] == 10
        assert meter.summary()["total_tokens"] == 15

    def test_retries_on_429_then_succeeds(self):
        calls = []

        def handler(req):
            calls.append(req)
            if len(calls) == 1:
                return httpx.Response(429, text="slow down")
            return chat_response("ok")

        client = httpx.Client(transport=httpx.MockTransport(handler))
        text, _ = call_model(make_config(), "hi", client=client)
        assert text == "ok" and len(calls) == 2

    def test_server_errors_exhaust_retries(self):
        client = httpx.Client(
            transport=httpx.MockTransport(lambda req: httpx.Response(500))
        )
        with pytest.raises(TransportError):
            call_model(make_config(max_retries=2), "hi", client=client)

    def test_client_error_not_retried(self):
        calls = []

        def handler(req):
            calls.append(req)
            return httpx.Response(404)

        client = httpx.Client(transport=httpx.MockTransport(handler))
        with pytest.raises(TransportError):
            call_model(make_config(), "hi", client=client)
        assert len(calls) == 1

    def test_malformed_response(self):
        client = httpx.Client(
            transport=httpx.MockTransport(
                lambda req: httpx.Response(200, json={"surprise": True})
            )
        )
        with pytest.raises(MalformedResponse):
            call_model(make_config(), "hi", client=client)

    def test_api_key_header(self, monkeypatch):
        monkeypatch.setenv(API_KEY_ENV, "sk-test")
        seen = {}

        def handler(req):
            seen["auth"] = req.headers.get("authorization")
            return chat_response("ok")

        client = httpx.Client(transport=httpx.MockTransport(handler))
        call_model(make_config(), "hi", client=client)
        assert seen["auth"] == "Bearer sk-test"

    def test_request_body_parameters(self):
        seen = {}

        def handler(req):
            seen.update(json.loads(req.content))
            return chat_response("ok")

        client = httpx.Client(transport=httpx.MockTransport(handler))
        call_model(make_config(), "hi", seed=7, client=client)
        assert seen["model"] == "test-model"
        assert seen["temperature"] == 0.7
        assert seen["top_p"] == 0.9
        assert seen["seed"] == 7


class TestParseVerdicts:
    def test_basic(self):
        parsed = parse_verdicts(
            "- AVAILABLE: [given away count] - [stated as 3]\n"
            "- MISSING: [current count] - [never stated]\n"
        )
        assert [e.marker for e in parsed.entries] == ["AVAILABLE", "MISSING"]
        assert parsed.entries[0].condition == "given away count"
        assert parsed.entries[1].detail == "never stated"

    def test_prose_goes_to_remainder(self):
        parsed = parse_verdicts("Let me think.\nMISSING: x\nDone.")
        assert len(parsed.entries) == 1
        assert parsed.remainder == ("Let me think.", "Done.")

    def test_fuzz_recovers_all_markers(self):
        prefixes = ["", "- ", "* ", "• ", "1. ", "12) "]
        markers = ["AVAILABLE", "available", "Available", "DERIVABLE", "Missing"]
        seps = [": ", " - ", ":  "]
        cases = []
        for i in range(50):
            prefix = prefixes[i % len(prefixes)]
            marker = markers[i % len(markers)]
            sep = seps[i % len(seps)]
            cases.append((f"{prefix}{marker}{sep}[cond {i}] - [detail {i}]", marker.upper(), f"cond {i}"))
        lines = []
        for i, (line, _, _) in enumerate(cases):
            lines.append(line)
            if i % 7 == 0:
                lines.append("Some interleaved prose that is not a verdict.")
        parsed = parse_verdicts("\n".join(lines))
        assert len(parsed.entries) == 50
        for entry, (_, marker, cond) in zip(parsed.entries, cases):
            assert entry.marker == marker
            assert entry.condition == cond


UNDERSTANDING_REPLY = "The question asks for the original number of apples."
ENUMERATION_REPLY = (
    "1. the number of apples given away - Requires: the stated count\n"
    "2. the current apple count remaining - Requires: the remaining count\n"
)
VERIFICATION_INCOMPLETE = (
    "- AVAILABLE: [the number of apples given away] - [stated as 3]\n"
    "- MISSING: [the current apple count remaining] - "
    "[the current number of apples remaining is undefined]\n"
)
VERIFICATION_COMPLETE = (
    "- AVAILABLE: [the number of apples given away] - [stated as 3]\n"
    "- AVAILABLE: [the current apple count remaining] - [stated as 5]\n"
)


def scripted_client(verification_reply):
    """Respond per conversation position: the pipeline sends 1, 3, then 5
    messages as the transcript grows."""

    def handler(req):
        n = len(json.loads(req.content)["messages"])
        reply = {1: UNDERSTANDING_REPLY, 3: ENUMERATION_REPLY, 5: verification_reply}[n]
        return chat_response(reply)

    return httpx.Client(transport=httpx.MockTransport(handler))


class TestLlmDetect:
    def test_incomplete_end_to_end(self):
        meter = CostMeter()
        audit = []
        res = llm_detect(
            APPLES_TEXT,
            make_config(),
            client=scripted_client(VERIFICATION_INCOMPLETE),
            meter=meter,
            audit=audit,
        )
        assert res.i_missing == "yes"
        (item,) = res.missing
        assert item.subject == "the current apple count remaining"
        assert "undefined" in item.description
        assert res.oracle_calls == 9  # 3 phases x 3 seeds
        assert meter.summary()["calls"] == 9
        assert len(audit) == 3  # one transcript per seed

    def test_complete_end_to_end(self):
        res = llm_detect(
            APPLES_TEXT, make_config(), client=scripted_client(VERIFICATION_COMPLETE)
        )
        assert res.i_missing == "no"
        assert res.missing == ()

    def test_majority_vote_breaks_toward_agreement(self):
        # seed 0 disagrees; seeds 1 and 2 say missing
        state = {"seed_calls": 0}

        def handler(req):
            body = json.loads(req.content)
            n = len(body["messages"])
            if n == 1:
                state["seed_calls"] += 1
            if n < 5:
                reply = {1: UNDERSTANDING_REPLY, 3: ENUMERATION_REPLY}[n]
            elif state["seed_calls"] == 1:
                reply = VERIFICATION_COMPLETE
            else:
                reply = VERIFICATION_INCOMPLETE
            return chat_response(reply)

        res = llm_detect(
            APPLES_TEXT,
            make_config(),
            client=httpx.Client(transport=httpx.MockTransport(handler)),
        )
        assert res.i_missing == "yes"
        assert res.missing[0].subject == "the current apple count remaining"

    def test_verification_toggle_off_marks_all_missing(self):
        res = llm_detect(
            APPLES_TEXT,
            make_config(seeds=(0,)),
            PhaseToggles(verification=False),
            client=scripted_client(VERIFICATION_COMPLETE),
        )
        assert res.i_missing == "yes"
        assert res.oracle_calls == 2  # verification phase skipped

    def test_target_recognition_toggle_shrinks_prompt(self):
        full = load_template("understanding")
        stripped_prompts = []

        def handler(req):
            body = json.loads(req.content)
            if len(body["messages"]) == 1:
                stripped_prompts.append(body["messages"][0]["content"])
            n = len(body["messages"])
            reply = {1: UNDERSTANDING_REPLY, 3: ENUMERATION_REPLY, 5: VERIFICATION_COMPLETE}[n]
            return chat_response(reply)

        llm_detect(
            APPLES_TEXT,
            make_config(seeds=(0,)),
            PhaseToggles(target_recognition=False),
            client=httpx.Client(transport=httpx.MockTransport(handler)),
        )
        assert "1." in full.body
        assert "1." not in stripped_prompts[0]
