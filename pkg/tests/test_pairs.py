from __future__ import annotations

import json
import math
from collections import Counter

import numpy as np
import pytest

from caekit.pairs import (
    LABEL_ENTAILMENT,
    LABEL_NOT_ENTAILMENT,
    JsonlError,
    NliInstance,
    SamplerConfig,
    SplitSpec,
    UnknownRequirement,
    build_gdpr_nli,
    cae_negatives,
    cae_pairs,
    export_jsonl,
    hop_counts,
    hop_table_csv,
    import_jsonl,
    instance_to_dict,
    render_input,
    split_by_requirement,
)

from conftest import build_case, path_case, random_case, star_case

PATH4_TYPES = ["MainClaim", "SubClaim", "ArgumentClaim", "Evidence"]


def ancestor_pairs_oracle(case, max_hop):
    """Brute force: for every ordered node pair, walk every downward path."""
    pairs = set()

    def walk(start, current, depth):
        if depth > max_hop:
            return
        if depth >= 1:
            pairs.add((start, current, depth))
        for child in case.nodes[current].children:
            walk(start, child, depth + 1)

    for nid in case.nodes:
        walk(nid, nid, 0)
    return pairs


def test_path4_hop_counts():
    case = path_case(PATH4_TYPES)
    instances = cae_pairs(case, max_hop=4)
    per_variant = Counter((i.hop, i.variant) for i in instances)
    for variant in ("chain", "wo_chain"):
        assert per_variant[(1, variant)] == 3
        assert per_variant[(2, variant)] == 2
        assert per_variant[(3, variant)] == 1
    assert all(i.label == LABEL_ENTAILMENT for i in instances)


def test_star_only_direct_pairs():
    case = star_case(3)
    instances = cae_pairs(case, max_hop=4)
    assert {i.hop for i in instances} == {1}
    assert len(instances) == 6  # 3 pairs x 2 variants


def test_full_binary_tree_hop_counts_match_enumeration():
    spec = ("r", "MainClaim",
            ("a", "SubClaim",
             ("aa", "ArgumentClaim", ("aaa", "Evidence"), ("aab", "Evidence")),
             ("ab", "ArgumentClaim", ("aba", "Evidence"), ("abb", "Evidence"))),
            ("b", "SubClaim",
             ("ba", "ArgumentClaim", ("baa", "Evidence"), ("bab", "Evidence")),
             ("bb", "ArgumentClaim", ("bba", "Evidence"), ("bbb", "Evidence"))))
    case = build_case(spec)
    oracle = ancestor_pairs_oracle(case, max_hop=3)
    got = Counter(i.hop for i in cae_pairs(case, max_hop=3) if i.variant == "chain")
    expect = Counter(hop for _, _, hop in oracle)
    assert got == expect == Counter({1: 14, 2: 12, 3: 8})


def test_transitive_closure_oracle_on_random_trees():
    rng = np.random.default_rng(99)
    for _ in range(100):
        case = random_case(rng, int(rng.integers(1, 11)))
        max_hop = int(rng.integers(1, 5))
        got = {
            (i.provenance["premise_node"], i.provenance["hypothesis_node"], i.hop)
            for i in cae_pairs(case, max_hop)
            if i.variant == "chain"
        }
        assert got == ancestor_pairs_oracle(case, max_hop)


def test_max_hop_truncates():
    case = path_case(PATH4_TYPES)
    instances = cae_pairs(case, max_hop=1)
    assert {i.hop for i in instances} == {1}


def test_intermediate_texts_follow_path_order():
    case = path_case(PATH4_TYPES)
    [inst] = [i for i in cae_pairs(case, 4) if i.hop == 3 and i.variant == "chain"]
    assert inst.intermediate_texts == (case.nodes["n1"].text, case.nodes["n2"].text)
    premise_text, hypothesis_text = render_input(inst)
    assert premise_text == f"{case.nodes['n0'].text}\n{case.nodes['n1'].text}\n{case.nodes['n2'].text}"
    assert hypothesis_text == case.nodes["n3"].text
    # each intermediate sits after the premise, in order
    positions = [premise_text.index(t) for t in inst.intermediate_texts]
    assert positions == sorted(positions)
    assert positions[0] > premise_text.index(inst.premise)


def test_hop1_chain_equals_wo_chain():
    case = star_case(2)
    chain, wo = [i for i in cae_pairs(case, 1) if i.provenance["hypothesis_node"] == "e0"]
    assert {chain.variant, wo.variant} == {"chain", "wo_chain"}
    assert render_input(chain) == render_input(wo)


def test_render_custom_separator():
    inst = NliInstance(
        premise="P", hypothesis="H", intermediate_texts=("s1", "s2"), label=LABEL_ENTAILMENT,
        hop=3, variant="chain", requirement_id="R1", source="cae",
        provenance={"premise_case": "c", "premise_node": "a", "hypothesis_case": "c", "hypothesis_node": "b"},
    )
    assert render_input(inst, separator=" | ")[0] == "P | s1 | s2"


def test_negatives_single_case_empty():
    case = path_case(PATH4_TYPES)
    assert cae_negatives([case], SamplerConfig(negative_rate=1.0)) == []


def test_negatives_rate_one_emits_all_cross_pairs():
    a = path_case(["MainClaim", "SubClaim", "Evidence"], requirement_id="R1", source_model="m")
    b = path_case(["MainClaim", "ArgumentClaim", "Evidence"], requirement_id="R2", source_model="m")
    out = cae_negatives([a, b], SamplerConfig(negative_rate=1.0))
    keyed = {
        (i.provenance["premise_case"], i.provenance["premise_node"],
         i.provenance["hypothesis_case"], i.provenance["hypothesis_node"])
        for i in out
    }
    assert len(keyed) == 18  # 3x3 node pairs in both directions
    assert len(out) == 36  # both variants
    assert all(i.label == LABEL_NOT_ENTAILMENT for i in out)
    assert all(not i.intermediate_texts for i in out)


def test_negatives_never_collide_with_positives():
    rng = np.random.default_rng(5)
    case = random_case(rng, 12, requirement_id="R1")
    positives = {
        (i.provenance["premise_node"], i.provenance["hypothesis_node"])
        for i in cae_pairs(case, max_hop=12)
    }
    negatives = cae_negatives([case], SamplerConfig(negative_rate=1.0, within_case_negatives=True))
    assert negatives  # within-case sampling produced candidates
    for inst in negatives:
        pair = (inst.provenance["premise_node"], inst.provenance["hypothesis_node"])
        assert pair not in positives


def test_negatives_binomial_bound_on_large_candidate_set():
    a = path_case(["MainClaim"] + ["SubClaim"] * 30 + ["Evidence"], requirement_id="R1")
    b = path_case(["MainClaim"] + ["SubClaim"] * 30 + ["Evidence"], requirement_id="R2")
    n_candidates = 32 * 32 * 2
    assert n_candidates >= 2000
    rate = 0.1
    out = cae_negatives([a, b], SamplerConfig(negative_rate=rate, seed=4242))
    drawn = len(out) / 2  # two variants per drawn candidate
    sigma = math.sqrt(n_candidates * rate * (1 - rate))
    assert abs(drawn - n_candidates * rate) <= 3 * sigma


def test_negatives_deterministic_and_order_independent():
    a = path_case(PATH4_TYPES, requirement_id="R1")
    b = path_case(PATH4_TYPES, requirement_id="R2")
    cfg = SamplerConfig(negative_rate=0.5, seed=7)
    first = [instance_to_dict(i) for i in cae_negatives([a, b], cfg)]
    second = [instance_to_dict(i) for i in cae_negatives([b, a], cfg)]
    assert first == second


def test_gdpr_gold_pair_is_entailment():
    requirements = [
        ("R18", "The processor shall assist the controller in consulting the "
                "supervisory authorities prior to processing to mitigate the risk."),
        ("R20", "The processor shall make available all information necessary to "
                "demonstrate compliance."),
    ]
    dpa = [
        ("Online 100", "At controller's request and at the controller's reasonable expense "
                       "on a time and materials basis, assist with fulfilling any obligation "
                       "under Applicable Data Protection Law.", {"R18"}),
    ]
    out = build_gdpr_nli(requirements, dpa, SamplerConfig(negative_rate=0.0))
    assert len(out) == 1
    inst = out[0]
    assert inst.label == LABEL_ENTAILMENT
    assert inst.requirement_id == "R18"
    assert inst.provenance == {"requirement_id": "R18", "dpa_id": "Online 100"}
    assert inst.hop == 1 and inst.variant == "wo_chain"


def test_gdpr_no_gold_rate_zero_emits_nothing():
    out = build_gdpr_nli([("R1", "text")], [("d1", "sentence", set())], SamplerConfig(negative_rate=0.0))
    assert out == []


def test_gdpr_negative_count_binomial_bound():
    requirements = [(f"R{i}", f"requirement text {i}") for i in range(1, 46)]
    dpa = []
    gold_total = 0
    for d in range(100):
        gold = {f"R{(d % 10) + 1}"} if d < 10 else set()
        gold_total += len(gold)
        dpa.append((f"d{d}", f"dpa sentence {d}", gold))
    assert gold_total == 10
    cfg = SamplerConfig(negative_rate=0.1, seed=31337)
    out = build_gdpr_nli(requirements, dpa, cfg)
    negatives = [i for i in out if i.label == LABEL_NOT_ENTAILMENT]
    positives = [i for i in out if i.label == LABEL_ENTAILMENT]
    assert len(positives) == 10
    n_candidates = 45 * 100 - 10
    sigma = math.sqrt(n_candidates * 0.1 * 0.9)
    assert abs(len(negatives) - n_candidates * 0.1) <= 3 * sigma
    # a negative never repeats a gold pair
    gold_pairs = {(i.provenance["requirement_id"], i.provenance["dpa_id"]) for i in positives}
    for i in negatives:
        assert (i.provenance["requirement_id"], i.provenance["dpa_id"]) not in gold_pairs


def test_gdpr_duplicate_requirement_ids_rejected():
    with pytest.raises(ValueError, match="duplicate"):
        build_gdpr_nli([("R1", "a"), ("R1", "b")], [], SamplerConfig())


def test_split_by_requirement_no_leakage():
    req_ids = [f"R{i}" for i in range(1, 20)]
    spec = SplitSpec(frozenset(req_ids[:15]), frozenset(req_ids[15:]))
    instances = []
    for rid in req_ids:
        case = path_case(PATH4_TYPES, requirement_id=rid)
        instances.extend(cae_pairs(case, 4))
    train, test = split_by_requirement(instances, spec)
    assert len(train) + len(test) == len(instances)
    assert {i.requirement_id for i in train} == set(req_ids[:15])
    assert {i.requirement_id for i in test} == set(req_ids[15:])
    assert {i.requirement_id for i in train} & {i.requirement_id for i in test} == set()


def test_split_empty_test_spec():
    instances = cae_pairs(path_case(PATH4_TYPES, requirement_id="R1"), 4)
    train, test = split_by_requirement(instances, SplitSpec(frozenset({"R1"}), frozenset()))
    assert test == [] and len(train) == len(instances)


def test_split_unknown_requirement():
    instances = cae_pairs(path_case(PATH4_TYPES, requirement_id="R9"), 4)
    with pytest.raises(UnknownRequirement):
        split_by_requirement(instances, SplitSpec(frozenset({"R1"}), frozenset({"R2"})))


def test_split_spec_overlap_rejected():
    with pytest.raises(ValueError, match="overlap"):
        SplitSpec(frozenset({"R1"}), frozenset({"R1"}))


def test_jsonl_round_trip(tmp_path):
    case = path_case(PATH4_TYPES)
    instances = cae_pairs(case, 4) + cae_negatives(
        [case, path_case(PATH4_TYPES, requirement_id="R2")], SamplerConfig(negative_rate=1.0)
    )
    path = tmp_path / "data.jsonl"
    export_jsonl(instances, path)
    assert import_jsonl(path) == instances


def test_jsonl_empty_list(tmp_path):
    path = tmp_path / "empty.jsonl"
    export_jsonl([], path)
    assert path.read_text() == ""
    assert import_jsonl(path) == []


def test_jsonl_malformed_line_reports_number(tmp_path):
    path = tmp_path / "bad.jsonl"
    good = json.dumps(instance_to_dict(cae_pairs(path_case(PATH4_TYPES), 1)[0]))
    path.write_text(good + "\nnot json\n")
    with pytest.raises(JsonlError) as err:
        import_jsonl(path)
    assert err.value.line_no == 2


def test_export_deterministic_bytes(tmp_path):
    cfg = SamplerConfig(negative_rate=0.4, seed=99)
    cases = [path_case(PATH4_TYPES, requirement_id=f"R{i}") for i in (1, 2, 3)]
    blobs = []
    for run in range(2):
        instances = []
        for case in cases:
            instances.extend(cae_pairs(case, 4))
        instances.extend(cae_negatives(cases, cfg))
        path = tmp_path / f"run{run}.jsonl"
        export_jsonl(instances, path)
        blobs.append(path.read_bytes())
    assert blobs[0] == blobs[1]


def test_golden_jsonl_snapshot(fixtures_dir):
    case = path_case(PATH4_TYPES, requirement_id="R2", source_model="toy")
    golden = (fixtures_dir / "golden" / "path4_pairs.jsonl").read_bytes()
    out = fixtures_dir.parent / "_tmp_path4.jsonl"
    try:
        export_jsonl(cae_pairs(case, 4), out)
        assert out.read_bytes() == golden
    finally:
        out.unlink(missing_ok=True)


def test_hop_counts_exclude_negatives():
    case = path_case(PATH4_TYPES, requirement_id="R1")
    other = path_case(PATH4_TYPES, requirement_id="R2")
    instances = cae_pairs(case, 4) + cae_negatives([case, other], SamplerConfig(negative_rate=1.0))
    counts = hop_counts(instances)
    assert counts == {1: 6, 2: 4, 3: 2}


def test_hop_table_layout():
    train = cae_pairs(path_case(PATH4_TYPES, requirement_id="R1"), 4)
    text = hop_table_csv(train, [])
    lines = text.splitlines()
    assert lines[0] == "row,train,test"
    assert lines[1] == f"All,{len(train)},0"
    assert lines[2] == "#1_hop,6,0"
    assert lines[3] == "#2_hop,4,0"
    assert lines[4] == "#3_hop,2,0"
