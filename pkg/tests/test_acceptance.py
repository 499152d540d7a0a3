"""Acceptance suite: one test per release criterion, each printing a
[PASS]/[FAIL] line (run with ``pytest -s tests/test_acceptance.py`` to see
them). Tolerances are pinned here and nowhere else."""

from __future__ import annotations

import functools
import math
import time
from collections import Counter

import numpy as np

from caekit.cae import NodeType, load_case_file, parse_assurance_case, serialize
from caekit.agreement import aggregate_agreement, flat_diff, flat_summary_to_csv, summarize_flat
from caekit.faithfulness import (
    AttributionRanking,
    aopc,
    comprehensiveness,
    permutation_test,
    sufficiency,
)
from caekit.ged import GedCostModel, ged_approx, ged_exact, random_typed_tree
from caekit.harness import MockChatClient, Requirement, build_prompt, generate, success_rate, success_table_csv
from caekit.pairs import (
    SamplerConfig,
    SplitSpec,
    build_gdpr_nli,
    cae_negatives,
    cae_pairs,
    export_jsonl,
    import_jsonl,
    split_by_requirement,
)
from caekit.scorers import ConstantScorer, ToyOverlapScorer

from conftest import FIXTURES, build_case, path_case, random_case, star_case
from test_ged import brute_force_ged
from test_pairs import ancestor_pairs_oracle


def criterion(name):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"[FAIL] {name}")
                raise
            print(f"[PASS] {name}")

        return run

    return wrap


@criterion("GED oracle equivalence: 200 random pairs <=6 nodes, exact == brute force, < 60 s")
def test_ged_oracle_equivalence():
    rng = np.random.default_rng(20_2400)
    costs = GedCostModel()
    start = time.monotonic()
    for _ in range(200):
        ga = random_typed_tree(rng, int(rng.integers(1, 7)))
        gb = random_typed_tree(rng, int(rng.integers(1, 7)))
        result = ged_exact(ga, gb, costs)
        assert result.exact
        assert result.distance == brute_force_ged(ga, gb, costs)
    elapsed = time.monotonic() - start
    assert elapsed < 60.0, f"took {elapsed:.1f}s"


@criterion("GED metric properties: identity, symmetry, approx >= exact, leaf-add == +2")
def test_ged_metric_properties():
    rng = np.random.default_rng(31_007)
    costs = GedCostModel()
    for _ in range(100):
        ga = random_typed_tree(rng, int(rng.integers(1, 9)))
        gb = random_typed_tree(rng, int(rng.integers(1, 9)))
        assert ged_exact(ga, ga, costs).distance == 0.0
        ab = ged_exact(ga, gb, costs).distance
        ba = ged_exact(gb, ga, costs).distance
        assert abs(ab - ba) < 1e-9
        assert ged_approx(ga, gb, costs).distance >= ab - 1e-9
    for _ in range(50):
        n = int(rng.integers(1, 10))
        base = random_typed_tree(rng, n)
        leaf_label = NodeType.EVIDENCE.value
        grown = base.__class__(
            labels=base.labels + (leaf_label,),
            edges=frozenset(set(base.edges) | {frozenset((int(rng.integers(n)), n))}),
        )
        assert ged_exact(base, grown, costs).distance == 2.0


@criterion("Flat metric: identity zero, symmetry + triangle on 100 triples, report layout")
def test_flat_metric():
    rng = np.random.default_rng(555)
    for _ in range(100):
        a = random_case(rng, int(rng.integers(1, 12)))
        b = random_case(rng, int(rng.integers(1, 12)))
        c = random_case(rng, int(rng.integers(1, 12)))
        assert all(v == 0 for v in flat_diff(a, a).values())
        ab = flat_diff(a, b)
        assert ab == flat_diff(b, a)
        ac, bc = flat_diff(a, c), flat_diff(b, c)
        for t in NodeType:
            assert ac[t] <= ab[t] + bc[t]
    cases = [load_case_file(p) for p in sorted((FIXTURES / "corpus").glob("*.json"))]
    reports = aggregate_agreement(cases, "intra") + aggregate_agreement(cases, "inter")
    table = flat_summary_to_csv(summarize_flat(reports))
    assert table == (
        "type,intra_model,inter_model\n"
        "MainClaim,0.00,0.00\n"
        "SubClaim,0.00,0.50\n"
        "ArgumentClaim,0.00,1.00\n"
        "ArgumentSubClaim,0.00,0.00\n"
        "Evidence,0.50,0.50\n"
    )


@criterion("Pair generation: closed forms, closure oracle on 100 trees, no leakage, byte-stable")
def test_pair_generation(tmp_path):
    # closed forms
    path = path_case(["MainClaim", "SubClaim", "ArgumentClaim", "Evidence"])
    per_hop = Counter(i.hop for i in cae_pairs(path, 4) if i.variant == "chain")
    assert per_hop == Counter({1: 3, 2: 2, 3: 1})
    star = star_case(3)
    assert Counter(i.hop for i in cae_pairs(star, 4)) == Counter({1: 6})
    binary = build_case(
        ("r", "MainClaim",
         ("a", "SubClaim", ("aa", "ArgumentClaim", ("e1", "Evidence"), ("e2", "Evidence"))),
         ("b", "SubClaim", ("bb", "ArgumentClaim", ("e3", "Evidence"), ("e4", "Evidence"))))
    )
    got = Counter(i.hop for i in cae_pairs(binary, 3) if i.variant == "wo_chain")
    assert got == Counter(h for _, _, h in ancestor_pairs_oracle(binary, 3))

    # transitive-closure oracle
    rng = np.random.default_rng(808)
    for _ in range(100):
        case = random_case(rng, int(rng.integers(1, 11)))
        hop_limit = int(rng.integers(1, 6))
        got_pairs = {
            (i.provenance["premise_node"], i.provenance["hypothesis_node"], i.hop)
            for i in cae_pairs(case, hop_limit)
            if i.variant == "chain"
        }
        assert got_pairs == ancestor_pairs_oracle(case, hop_limit)

    # split leakage
    req_ids = [f"R{i}" for i in range(1, 20)]
    spec = SplitSpec(frozenset(req_ids[:15]), frozenset(req_ids[15:]))
    instances = []
    for rid in req_ids:
        instances.extend(cae_pairs(path_case(["MainClaim", "SubClaim", "Evidence"], requirement_id=rid), 4))
    train, test = split_by_requirement(instances, spec)
    assert {i.requirement_id for i in train} & {i.requirement_id for i in test} == set()
    assert len(train) + len(test) == len(instances)

    # byte-identical seeded reruns
    cases = [path_case(["MainClaim", "SubClaim", "Evidence"], requirement_id=f"R{i}") for i in (1, 2)]
    blobs = []
    for run in range(2):
        out = tmp_path / f"run{run}.jsonl"
        items = [inst for case in cases for inst in cae_pairs(case, 4)]
        items += cae_negatives(cases, SamplerConfig(negative_rate=0.5, seed=77))
        export_jsonl(items, out)
        blobs.append(out.read_bytes())
    assert blobs[0] == blobs[1]


@criterion("Negative sampling: rate 0.1 within 3 sigma on N >= 2000, positives never resampled")
def test_negative_sampling():
    requirements = [(f"R{i}", f"req {i}") for i in range(1, 46)]
    dpa = [(f"d{j}", f"sentence {j}", {f"R{(j % 10) + 1}"} if j < 10 else set()) for j in range(100)]
    n_candidates = 45 * 100 - 10
    assert n_candidates >= 2000
    out = build_gdpr_nli(requirements, dpa, SamplerConfig(negative_rate=0.1, seed=2025))
    negatives = [i for i in out if i.label == "not_entailment"]
    positives = [i for i in out if i.label == "entailment"]
    sigma = math.sqrt(n_candidates * 0.1 * 0.9)
    assert abs(len(negatives) - 0.1 * n_candidates) <= 3 * sigma
    pos_keys = {(i.provenance["requirement_id"], i.provenance["dpa_id"]) for i in positives}
    neg_keys = {(i.provenance["requirement_id"], i.provenance["dpa_id"]) for i in negatives}
    assert pos_keys & neg_keys == set()

    rng = np.random.default_rng(31)
    case = random_case(rng, 14, requirement_id="R1")
    pos_pairs = {
        (i.provenance["premise_node"], i.provenance["hypothesis_node"])
        for i in cae_pairs(case, 14)
    }
    for inst in cae_negatives([case], SamplerConfig(negative_rate=1.0, within_case_negatives=True)):
        assert (inst.provenance["premise_node"], inst.provenance["hypothesis_node"]) not in pos_pairs


@criterion("Faithfulness identities: Suff(q=1)=0, constant scorer all-zero, affine invariance")
def test_faithfulness_identities():
    toy = ToyOverlapScorer()
    rng = np.random.default_rng(12)
    for trial in range(20):
        n_p, n_h = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        premise = " ".join(f"p{trial}_{i}" if rng.random() < 0.5 else f"s{i}" for i in range(n_p))
        hypothesis = " ".join(f"h{trial}_{i}" if rng.random() < 0.5 else f"s{i}" for i in range(n_h))
        tokens = tuple(hypothesis.split())
        scores = tuple(float(x) for x in rng.normal(size=len(tokens)))
        ranking = AttributionRanking("x", tokens, scores, "rand")
        assert abs(sufficiency(toy, premise, hypothesis, ranking, 1.0)) <= 1e-9
        const = ConstantScorer(0.65)
        for q in (0.1, 0.4, 1.0):
            assert abs(comprehensiveness(const, premise, hypothesis, ranking, q)) <= 1e-9
            assert abs(sufficiency(const, premise, hypothesis, ranking, q)) <= 1e-9
        assert abs(aopc(const, premise, hypothesis, ranking, "compr")) <= 1e-9
        assert abs(aopc(const, premise, hypothesis, ranking, "suff")) <= 1e-9
        scaled = AttributionRanking("x", tokens, tuple(2.5 * s + 7.0 for s in scores), "rand")
        for q in (0.1, 0.3, 0.7, 1.0):
            assert ranking.top_indices(q) == scaled.top_indices(q)
        for metric in ("compr", "suff"):
            assert aopc(toy, premise, hypothesis, ranking, metric) == aopc(
                toy, premise, hypothesis, scaled, metric
            )


@criterion("Faithfulness separation: oracle vs random rankings, p < 0.01 both metrics, < 2 min")
def test_faithfulness_separation():
    start = time.monotonic()
    toy = ToyOverlapScorer()
    rng = np.random.default_rng(20_240)
    oracle_compr, rand_compr, oracle_suff, rand_suff = [], [], [], []
    for i in range(100):
        premise_tokens = [f"w{i}_{k}" for k in range(6)]
        hyp_tokens = premise_tokens + [f"d{i}_{k}" for k in range(5)]
        rng.shuffle(hyp_tokens)
        premise, hypothesis = " ".join(premise_tokens), " ".join(hyp_tokens)
        assert toy.score(premise, hypothesis).predicted_label == "entailment"
        tokens = tuple(hyp_tokens)
        p_set = set(premise_tokens)
        oracle = AttributionRanking("x", tokens, tuple(1.0 if t in p_set else 0.0 for t in tokens), "oracle")
        random_r = AttributionRanking("x", tokens, tuple(rng.random(len(tokens))), "random")
        oracle_compr.append(aopc(toy, premise, hypothesis, oracle, "compr"))
        rand_compr.append(aopc(toy, premise, hypothesis, random_r, "compr"))
        oracle_suff.append(aopc(toy, premise, hypothesis, oracle, "suff"))
        rand_suff.append(aopc(toy, premise, hypothesis, random_r, "suff"))
    assert np.mean(oracle_compr) > np.mean(rand_compr)
    assert np.mean(oracle_suff) < np.mean(rand_suff)
    assert permutation_test(oracle_compr, rand_compr, 10_000, seed=99) < 0.01
    assert permutation_test(oracle_suff, rand_suff, 10_000, seed=99) < 0.01
    elapsed = time.monotonic() - start
    assert elapsed < 120.0, f"took {elapsed:.1f}s"


@criterion("Permutation sanity: identical groups p > 0.5, separated 5v5 p <= 0.01")
def test_permutation_sanity():
    values = [0.11, 0.25, 0.4, 0.43, 0.8]
    assert permutation_test(values, list(values), 10_000, seed=5) > 0.5
    p = permutation_test([0.0] * 5, [1.0] * 5, 10_000, seed=5)
    assert p <= 0.01


@criterion("Harness accounting: table layout, 3-of-5 => 60%, statuses partition calls")
def test_harness_accounting():
    replies = [(FIXTURES / "mock_replies" / f"reply{i}.txt").read_text() for i in range(5)]
    requirement = Requirement("R18", "Assistance", "Assist the controller.", "Reduces risk.")
    outcomes = []
    for model in ("alpha", "beta"):
        client = MockChatClient(responses=replies)
        outcomes.extend(generate(client, build_prompt(requirement, model_name=model), n_calls=5))
    rows = success_rate(outcomes)
    table = success_table_csv(rows)
    lines = table.splitlines()
    assert lines[0] == "model,total,err_cnt,success_pct"
    assert lines[1] == "alpha,5,2,60.0"
    assert lines[2] == "beta,5,2,60.0"
    statuses = Counter(o.status for o in outcomes)
    assert sum(statuses.values()) == 2 * 5
    assert statuses["valid_json_case"] == 6


@criterion("Round trips: parse/serialize idempotent on fixtures, JSONL lossless")
def test_round_trips(tmp_path):
    for path in sorted(FIXTURES.glob("toy__*.json")) + sorted((FIXTURES / "corpus").glob("*.json")):
        case = load_case_file(path)
        assert parse_assurance_case(serialize(case)) == case
        assert serialize(parse_assurance_case(serialize(case))) == serialize(case)
    cases = [path_case(["MainClaim", "SubClaim", "ArgumentClaim", "Evidence"], requirement_id=f"R{i}") for i in (1, 2)]
    instances = [inst for case in cases for inst in cae_pairs(case, 4)]
    instances += cae_negatives(cases, SamplerConfig(negative_rate=1.0, seed=3))
    out = tmp_path / "instances.jsonl"
    export_jsonl(instances, out)
    assert import_jsonl(out) == instances
