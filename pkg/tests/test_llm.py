"""Chat gateway behavior: retries, errors, and the offline mocks."""

from __future__ import annotations

import pytest

from qaea_dr.augment import build_generation_prompt, parse_qa_json
from qaea_dr.errors import (
    BackendError,
    EmptyOutputError,
    JsonExtractionError,
    TransportError,
    ValidationError,
)
from qaea_dr.llm import (
    TASK_EE,
    TASK_QAG,
    ChatRequest,
    HttpChatBackend,
    MockChatBackend,
    MockEvaluatorBackend,
    MockProfile,
    mock_generate,
)

OK_BODY = {"choices": [{"message": {"content": "hello"}}]}


def make_backend(post_fn, **kwargs):
    kwargs.setdefault("backoff_base", 0.0)
    return HttpChatBackend(endpoint="http://test/v1/chat", model="m", post_fn=post_fn, **kwargs)


class TestHttpChatBackend:
    def test_success_passthrough(self):
        backend = make_backend(lambda payload: (200, OK_BODY))
        resp = backend.complete(ChatRequest(model_name="m", user_prompt="p"))
        assert resp.text == "hello"
        assert resp.backend_id == "http:m"

    def test_retry_on_429_then_success(self, caplog):
        statuses = iter([429, 200])
        calls = []

        def post(payload):
            calls.append(payload)
            status = next(statuses)
            return status, OK_BODY if status == 200 else {"error": "rate limited"}

        backend = make_backend(post)
        with caplog.at_level("WARNING"):
            resp = backend.complete(ChatRequest(model_name="m", user_prompt="p"))
        assert resp.text == "hello"
        assert resp.latency >= 0.0
        assert len(calls) == 2
        assert "retry 1/" in caplog.text

    def test_transport_error_after_max_retries(self):
        def post(payload):
            raise ConnectionError("down")

        backend = make_backend(post, max_retries=2)
        with pytest.raises(TransportError, match="after 2 retries"):
            backend.complete(ChatRequest(model_name="m", user_prompt="p"))

    def test_client_error_not_retried(self):
        calls = []

        def post(payload):
            calls.append(payload)
            return 400, {"error": "bad request"}

        backend = make_backend(post)
        with pytest.raises(BackendError) as exc:
            backend.complete(ChatRequest(model_name="m", user_prompt="p"))
        assert exc.value.status == 400
        assert len(calls) == 1

    def test_empty_completion_is_an_error(self):
        backend = make_backend(
            lambda payload: (200, {"choices": [{"message": {"content": ""}}]})
        )
        with pytest.raises(EmptyOutputError):
            backend.complete(ChatRequest(model_name="m", user_prompt="p"))

    def test_payload_shape(self):
        seen = {}

        def post(payload):
            seen.update(payload)
            return 200, OK_BODY

        backend = make_backend(post)
        backend.complete(
            ChatRequest(
                model_name="m",
                user_prompt="user text",
                system_prompt="system text",
                temperature=0.0,
                max_output_tokens=64,
            )
        )
        assert seen["model"] == "m"
        assert seen["temperature"] == 0.0
        assert seen["max_tokens"] == 64
        assert seen["messages"] == [
            {"role": "system", "content": "system text"},
            {"role": "user", "content": "user text"},
        ]

    def test_request_validation(self):
        with pytest.raises(ValidationError):
            ChatRequest(model_name="m", user_prompt="p", temperature=1.5)
        with pytest.raises(ValidationError):
            ChatRequest(model_name="m", user_prompt="p", max_output_tokens=0)


class TestMockGenerate:
    def test_echo_oracle_qag_definition(self):
        out = mock_generate("X is Y.", TASK_QAG, MockProfile.echo_oracle())
        assert out == '{"factual inquiry": [["What is X?", "X is Y."]]}'

    def test_echo_oracle_ee_definition(self):
        events = mock_generate("X is Y.", TASK_EE, MockProfile.echo_oracle())
        assert '"event type": "Definition"' in events
        assert '"event subject": "X"' in events

    def test_noisy_probability_one_breaks_parsing(self):
        out = mock_generate("X is Y.", TASK_QAG, MockProfile.noisy(1.0))
        with pytest.raises(JsonExtractionError):
            parse_qa_json(out)

    def test_deterministic_per_seed(self):
        profile = MockProfile.noisy(0.5, seed=9)
        runs = {
            mock_generate(f"Doc {i} is here.", TASK_QAG, profile) for _ in range(3)
            for i in range(4)
        }
        rerun = {
            mock_generate(f"Doc {i} is here.", TASK_QAG, profile) for _ in range(3)
            for i in range(4)
        }
        assert runs == rerun

    def test_adversarial_then_regen_fixes(self):
        profile = MockProfile.adversarial_low_score()
        bad = mock_generate("X is Y.", TASK_QAG, profile)
        good = mock_generate("X is Y.", TASK_QAG, profile, regenerating=True)
        assert "UNRELATED" in bad
        assert "UNRELATED" not in good

    def test_unknown_task_rejected(self):
        with pytest.raises(ValidationError):
            mock_generate("text", "summarize", MockProfile.echo_oracle())


class TestMockChatBackend:
    def test_canned_map_contract(self):
        backend = MockChatBackend(canned={"P": "R"})
        assert backend.complete(ChatRequest(model_name="m", user_prompt="P")).text == "R"

    def test_referential_transparency(self):
        backend = MockChatBackend()
        prompt = build_generation_prompt("Alpha is beta.", TASK_QAG)
        first = backend.complete(ChatRequest(model_name="m", user_prompt=prompt)).text
        second = backend.complete(ChatRequest(model_name="m", user_prompt=prompt)).text
        assert first == second

    def test_routes_both_tasks(self):
        backend = MockChatBackend()
        qag = backend.complete(
            ChatRequest(
                model_name="m", user_prompt=build_generation_prompt("X is Y.", TASK_QAG)
            )
        ).text
        ee = backend.complete(
            ChatRequest(
                model_name="m", user_prompt=build_generation_prompt("X is Y.", TASK_EE)
            )
        ).text
        assert "factual inquiry" in qag
        assert "event type" in ee

    def test_unroutable_prompt_rejected(self):
        backend = MockChatBackend()
        with pytest.raises(ValidationError, match="cannot route"):
            backend.complete(ChatRequest(model_name="m", user_prompt="tell me a joke"))


class TestMockEvaluator:
    def score_of(self, backend, payload="whatever"):
        from qaea_dr.augment import build_score_prompt, parse_score_json

        prompt = build_score_prompt(payload, "original", TASK_QAG)
        return parse_score_json(
            backend.complete(ChatRequest(model_name="m", user_prompt=prompt)).text
        )

    def test_constant_policy(self):
        report = self.score_of(MockEvaluatorBackend(7))
        assert report.total_score == 7
        assert sum(d.score for d in report.deductions) == 3

    def test_scripted_policy_consumes_in_order(self):
        backend = MockEvaluatorBackend([9, 10])
        assert self.score_of(backend).total_score == 9
        assert self.score_of(backend).total_score == 10
        assert self.score_of(backend).total_score == 10  # exhausted -> 10

    def test_content_policy_penalizes_adversarial(self):
        backend = MockEvaluatorBackend()
        assert self.score_of(backend, "UNRELATED filler").total_score == 3
        assert self.score_of(backend, "faithful content").total_score == 10

    def test_deduction_reasons_come_from_rubric(self):
        report = self.score_of(MockEvaluatorBackend(0))
        assert sum(d.score for d in report.deductions) == 10
        for d in report.deductions:
            assert d.reason in ("Relevance", "Clarity", "Consistency", "Completeness")
