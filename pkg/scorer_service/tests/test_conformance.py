"""Protocol conformance against the primary toolkit.

Acceptance: with the service in mock mode, the primary's external_http
scorer must reproduce the primary's builtin toy scorer AOPC values within
1e-6 on a 50-instance corpus, preserve /score input order, and answer
400/503 as specified. The primary is driven only over HTTP.
"""

from __future__ import annotations

import threading
import time

import numpy as np
import pytest
import requests
import uvicorn

from scorer_service.app import create_app

caekit_faithfulness = pytest.importorskip("caekit.faithfulness")
caekit_scorers = pytest.importorskip("caekit.scorers")


@pytest.fixture(scope="module")
def service_url():
    server = uvicorn.Server(
        uvicorn.Config(create_app(mode="mock"), host="127.0.0.1", port=0, log_level="warning")
    )
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 10
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError("service did not start")
        time.sleep(0.02)
    port = server.servers[0].sockets[0].getsockname()[1]
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)


def make_corpus(n, seed):
    rng = np.random.default_rng(seed)
    corpus = []
    for i in range(n):
        premise_tokens = [f"w{i}_{k}" for k in range(6)]
        hyp_tokens = premise_tokens + [f"d{i}_{k}" for k in range(4)]
        rng.shuffle(hyp_tokens)
        corpus.append((" ".join(premise_tokens), " ".join(hyp_tokens)))
    return corpus


def test_aopc_agreement_with_builtin_toy_scorer(service_url):
    http_scorer = caekit_scorers.HttpScorer(service_url)
    toy = caekit_scorers.ToyOverlapScorer()
    rng = np.random.default_rng(7)
    for premise, hypothesis in make_corpus(50, seed=41):
        tokens = tuple(hypothesis.split())
        ranking = caekit_faithfulness.AttributionRanking(
            instance_id="x", tokens=tokens, scores=tuple(rng.random(len(tokens))), method="random"
        )
        for metric in ("compr", "suff"):
            via_http = caekit_faithfulness.aopc(http_scorer, premise, hypothesis, ranking, metric)
            via_toy = caekit_faithfulness.aopc(toy, premise, hypothesis, ranking, metric)
            assert abs(via_http - via_toy) <= 1e-6


def test_probabilities_bit_compatible(service_url):
    http_scorer = caekit_scorers.HttpScorer(service_url)
    toy = caekit_scorers.ToyOverlapScorer()
    for premise, hypothesis in make_corpus(20, seed=13):
        a = http_scorer.score(premise, hypothesis)
        b = toy.score(premise, hypothesis)
        assert abs(a.entailment - b.entailment) <= 1e-9
        assert abs(a.not_entailment - b.not_entailment) <= 1e-9


def test_score_order_preservation(service_url):
    hypotheses = ["a b", "a z", "x y", "a b c", "a b"]
    body = {
        "inputs": [{"premise": "a b c", "hypothesis": h} for h in hypotheses],
        "return_tokens": True,
    }
    resp = requests.post(f"{service_url}/score", json=body, timeout=10)
    assert resp.status_code == 200
    out = resp.json()
    assert [t for t in out["tokens"]] == [h.split() for h in hypotheses]
    assert out["probs"][0] == out["probs"][4]


def test_error_behavior_400(service_url):
    resp = requests.post(f"{service_url}/score", json={"inputs": [{"premise": 3}]}, timeout=10)
    assert resp.status_code == 400
    resp = requests.post(f"{service_url}/score", data="not json", timeout=10)
    assert resp.status_code == 400


def test_error_behavior_503_before_model_load():
    from fastapi.testclient import TestClient

    client = TestClient(create_app(mode="model", model_path="/missing/model"))
    assert client.get("/health").status_code == 503
    assert client.post("/score", json={"inputs": []}).status_code == 503


def test_primary_http_scorer_tokenize_alignment(service_url):
    http_scorer = caekit_scorers.HttpScorer(service_url)
    assert http_scorer.tokenize("the quick  brown fox") == ["the", "quick", "brown", "fox"]
