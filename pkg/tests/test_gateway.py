import httpx
import pytest
from hypothesis import given, strategies as st

from manta.errors import BudgetExceeded, DimensionMismatch, ProviderError, UnparseableVerdict
from manta.gateway import (
    MOCK_EMBED_DIM,
    ProviderConfig,
    TokenLedger,
    complete,
    count_tokens,
    embed,
    judge_pair,
    mock_embed_one,
)


class TestCountTokens:
    def test_empty(self):
        assert count_tokens("") == 0

    def test_three_words(self):
        assert count_tokens("a b c") == 3

    @given(st.text(max_size=80))
    def test_prefix_adds_one(self, t):
        assert count_tokens("x " + t) == 1 + count_tokens(t)

    @given(st.binary(max_size=64))
    def test_total_on_any_bytes(self, raw):
        count_tokens(raw.decode("utf-8", errors="replace"))


class TestLedger:
    def test_monotone_and_conserved(self):
        ledger = TokenLedger()
        deltas = [3, 5, 2, 9]
        for d in deltas[:2]:
            ledger.charge_completion(d)
        for d in deltas[2:]:
            ledger.charge_embedding(d)
        assert ledger.completion_tokens == 8
        assert ledger.embedding_tokens == 11
        assert ledger.total == sum(deltas)

    def test_budget_must_be_positive(self):
        with pytest.raises(ValueError):
            TokenLedger(budget=0)

    def test_concurrent_increments(self):
        import threading

        ledger = TokenLedger()
        threads = [
            threading.Thread(
                target=lambda: [ledger.charge_completion(1) for _ in range(500)])
            for _ in range(8)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert ledger.completion_tokens == 4000


class TestComplete:
    def test_mock_deterministic_and_charged(self, mock_cfg):
        ledger = TokenLedger()
        reply = complete(mock_cfg, "ping", ledger)
        assert reply == complete(mock_cfg, "ping", TokenLedger())
        assert ledger.completion_tokens == count_tokens("ping") + count_tokens(reply)

    def test_budget_blocks_before_dispatch(self, mock_cfg):
        ledger = TokenLedger(budget=5)
        ledger.charge_completion(5)
        with pytest.raises(BudgetExceeded):
            complete(mock_cfg, "any prompt at all", ledger)

    def test_mock_pure_in_seed_and_prompt(self):
        a = complete(ProviderConfig(endpoint="mock://a"), "x", TokenLedger())
        b = complete(ProviderConfig(endpoint="mock://b"), "x", TokenLedger())
        assert a != b

    def test_retry_then_success(self):
        calls = {"n": 0}

        def handler(request):
            calls["n"] += 1
            if calls["n"] == 1:
                return httpx.Response(500, text="boom")
            return httpx.Response(200, json={
                "choices": [{"message": {"content": "hello there"}}]})

        cfg = ProviderConfig(endpoint="http://fake", max_retries=2)
        client = httpx.Client(transport=httpx.MockTransport(handler))
        ledger = TokenLedger()
        assert complete(cfg, "hi", ledger, client=client) == "hello there"
        assert calls["n"] == 2
        assert ledger.completion_tokens == count_tokens("hi") + 2

    def test_exhausted_retries_raise(self):
        def handler(request):
            return httpx.Response(503, text="down")

        cfg = ProviderConfig(endpoint="http://fake", max_retries=1)
        client = httpx.Client(transport=httpx.MockTransport(handler))
        with pytest.raises(ProviderError):
            complete(cfg, "hi", TokenLedger(), client=client)


class TestEmbed:
    def test_identical_texts_identical_vectors(self, mock_cfg):
        out = embed(mock_cfg, ["same text", "same text"], TokenLedger())
        assert out[0] == out[1]

    def test_dimension_fixed(self, mock_cfg):
        out = embed(mock_cfg, ["a", "much longer text here"], TokenLedger())
        assert all(v.dimension == MOCK_EMBED_DIM for v in out)

    def test_token_delta_matches_recount(self, mock_cfg):
        texts = ["one two", "three", "four five six"]
        ledger = TokenLedger()
        embed(mock_cfg, texts, ledger)
        assert ledger.embedding_tokens == sum(count_tokens(t) for t in texts)

    def test_empty_input_rejected(self, mock_cfg):
        with pytest.raises(ValueError):
            embed(mock_cfg, [], TokenLedger())

    def test_ragged_provider_response(self):
        def handler(request):
            return httpx.Response(200, json={"data": [
                {"embedding": [1.0, 2.0]}, {"embedding": [1.0]}]})

        cfg = ProviderConfig(endpoint="http://fake")
        client = httpx.Client(transport=httpx.MockTransport(handler))
        with pytest.raises(DimensionMismatch):
            embed(cfg, ["a", "b"], TokenLedger(), client=client)

    def test_http_request_shape(self):
        captured = {}

        def handler(request):
            captured["json"] = request.read()
            return httpx.Response(200, json={"data": [{"embedding": [0.0, 1.0]}]})

        cfg = ProviderConfig(endpoint="http://fake", model_id="embed-1")
        client = httpx.Client(transport=httpx.MockTransport(handler))
        embed(cfg, ["hello"], TokenLedger(), client=client)
        import json

        body = json.loads(captured["json"])
        assert body == {"model": "embed-1", "input": ["hello"]}


class TestJudgePair:
    def test_swap_flips_winner(self, mock_cfg):
        a = [b"image-a-1", b"image-a-2"]
        b = [b"image-b-1"]
        forward = judge_pair(mock_cfg, a, b, "diversity", TokenLedger())
        backward = judge_pair(mock_cfg, b, a, "diversity", TokenLedger())
        assert {forward.winner, backward.winner} == {"A", "B"}

    def test_identical_sets_tie_to_a(self, mock_cfg):
        imgs = [b"same-bytes"]
        v = judge_pair(mock_cfg, imgs, imgs, "quality", TokenLedger())
        assert v.winner == "A"

    def test_parse_real_provider_response(self):
        def handler(request):
            return httpx.Response(200, json={"choices": [{"message": {
                "content": "Set B is more varied.\nWINNER: B"}}]})

        cfg = ProviderConfig(endpoint="http://fake")
        client = httpx.Client(transport=httpx.MockTransport(handler))
        v = judge_pair(cfg, [b"a"], [b"b"], "diversity", TokenLedger(),
                       client=client)
        assert v.winner == "B"

    def test_unparseable_verdict(self):
        def handler(request):
            return httpx.Response(200, json={"choices": [{"message": {
                "content": "they are both nice"}}]})

        cfg = ProviderConfig(endpoint="http://fake")
        client = httpx.Client(transport=httpx.MockTransport(handler))
        with pytest.raises(UnparseableVerdict):
            judge_pair(cfg, [b"a"], [b"b"], "diversity", TokenLedger(),
                       client=client)


@given(st.text(max_size=40), st.text(max_size=40))
def test_mock_embedding_pure(a, b):
    va = mock_embed_one("seed", a)
    vb = mock_embed_one("seed", b)
    if a == b:
        assert va == vb
    assert va == mock_embed_one("seed", a)
