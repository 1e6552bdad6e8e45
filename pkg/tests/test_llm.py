import pytest

from prego.anticipation import ContextSet
from prego.core import build_alphabet, build_vocabulary
from prego.errors import BudgetExceeded, TransportError
from prego.llm import (
    LLMBackend,
    LLMClient,
    TokenBudget,
    estimate_tokens,
    llm_predict,
    parse_emission,
)
from prego.prompts import PromptSpec, render_prompt

from .stub_llm import StubLLMServer


def make_spec(size=10):
    vocab = build_vocabulary([f"s{i}" for i in range(size)])
    alphabet = build_alphabet(vocab, "numerical")
    context = ContextSet(sequences=(("p", tuple(range(size))),))
    return PromptSpec(style="referenced_context", alphabet=alphabet,
                      context=context, history=(0, 1))


def fast_client(endpoint, **kw):
    kw.setdefault("backoff_base", 0.001)
    kw.setdefault("timeout", 5.0)
    return LLMClient(endpoint=endpoint, **kw)


class TestParseEmission:
    def test_clean_symbol(self):
        spec = make_spec()
        result = parse_emission(spec.alphabet, "2\n", k=1)
        assert result.predictions == (2,)
        assert result.raw_emission == "2\n"

    def test_unknown_symbol_recorded(self):
        spec = make_spec()
        result = parse_emission(spec.alphabet, "banana", k=1)
        assert result.predictions == ()
        assert result.raw_emission == "banana"

    def test_whitespace_and_terminator_stripping(self):
        spec = make_spec()
        assert parse_emission(spec.alphabet, " 7 ,", k=1).predictions == (7,)

    def test_k_many_tokens(self):
        spec = make_spec()
        result = parse_emission(spec.alphabet, "3, 5, 3, 1\nignored", k=3)
        assert result.predictions == (3, 5, 1)

    def test_stops_at_first_unknown_after_leading_valid(self):
        spec = make_spec()
        result = parse_emission(spec.alphabet, "3, ???, 5", k=3)
        assert result.predictions == (3,)


class TestClientContract:
    def test_request_body_carries_hyperparameters(self):
        spec = make_spec()
        with StubLLMServer(["2"]) as stub:
            client = fast_client(stub.endpoint, temperature=0.6, max_tokens=4)
            result = llm_predict(client, spec, k=1)
        assert result.predictions == (2,)
        body = stub.requests[0]["body"]
        assert body["temperature"] == 0.6
        assert body["max_tokens"] == 4
        assert body["prompt"] == render_prompt(spec)

    def test_api_key_sent_as_bearer(self, monkeypatch):
        monkeypatch.setenv("PREGO_LLM_KEY", "sekrit")
        spec = make_spec()
        with StubLLMServer(["2"]) as stub:
            llm_predict(fast_client(stub.endpoint), spec, k=1)
        assert stub.requests[0]["authorization"] == "Bearer sekrit"

    def test_retries_transport_failures_with_bounded_backoff(self):
        spec = make_spec()
        with StubLLMServer([(500, "x"), (503, "x"), "4"]) as stub:
            client = fast_client(stub.endpoint, max_retries=3)
            result = llm_predict(client, spec, k=1)
        assert result.predictions == (4,)
        assert len(stub.requests) == 3

    def test_gives_up_past_retry_budget(self):
        spec = make_spec()
        with StubLLMServer([(500, "x")] * 10) as stub:
            client = fast_client(stub.endpoint, max_retries=2)
            with pytest.raises(TransportError):
                llm_predict(client, spec, k=1)
        assert len(stub.requests) == 3  # initial attempt + 2 retries

    def test_unreachable_endpoint(self):
        client = fast_client("http://127.0.0.1:1/complete", max_retries=1)
        with pytest.raises(TransportError):
            client.complete("hi")

    def test_dropped_connection_retried(self):
        spec = make_spec()
        with StubLLMServer(["drop", "5"]) as stub:
            client = fast_client(stub.endpoint, max_retries=2)
            assert llm_predict(client, spec, k=1).predictions == (5,)

    def test_malformed_body(self):
        spec = make_spec()
        with StubLLMServer([]) as stub:
            stub.script.append((200, None))  # {"text": null} -> str "None", unknown
            client = fast_client(stub.endpoint)
            result = llm_predict(client, spec, k=1)
            assert result.predictions == ()


class TestBudget:
    def test_charges_and_halts(self):
        budget = TokenBudget(limit=10)
        budget.charge(6)
        with pytest.raises(BudgetExceeded):
            budget.charge(5)
        assert budget.used == 6

    def test_client_halts_before_sending(self):
        spec = make_spec()
        prompt_tokens = estimate_tokens(render_prompt(spec), 4)
        with StubLLMServer(["2", "2", "2"]) as stub:
            budget = TokenBudget(limit=prompt_tokens * 2 + 1)
            client = fast_client(stub.endpoint, budget=budget)
            llm_predict(client, spec, k=1)
            llm_predict(client, spec, k=1)
            with pytest.raises(BudgetExceeded):
                llm_predict(client, spec, k=1)
        assert len(stub.requests) == 2


class TestBackend:
    def test_backend_predicts_over_history(self):
        vocab = build_vocabulary([f"s{i}" for i in range(4)])
        alphabet = build_alphabet(vocab, "numerical")
        context = ContextSet(sequences=(("p", (0, 1, 2, 3)),))
        with StubLLMServer(["2"]) as stub:
            backend = LLMBackend(fast_client(stub.endpoint), alphabet, context)
            result = backend.predict([0, 1], k=1)
        assert result.predictions == (2,)
        prompt = stub.requests[0]["body"]["prompt"]
        assert "0,1," in prompt
