"""NLI dataset construction.

Two sources of premise/hypothesis pairs:

* ``gdpr_dpa`` — a regulatory requirement is the premise and an agreement
  sentence the hypothesis; gold requirement ids on each sentence mark the
  entailment pairs, and non-matching combinations are negative-sampled.
* ``cae`` — inside an assurance-case tree, every ancestor is a premise for
  each of its descendants. The path length in edges is the instance's hop;
  the texts of the interior path nodes are kept so that the *chain* input
  variant can append the intermediate reasoning steps to the premise, while
  *wo_chain* renders the bare pair.

Every instance carries a deterministic ``instance_id`` derived from its
provenance so that externally computed attribution rankings can refer back
to it. All sampling is Bernoulli per candidate with a generator keyed by
(seed, owning unit), which makes exports byte-stable under reruns and
reorderings.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .cae import AssuranceCase
from .seeding import keyed_rng

LABEL_ENTAILMENT = "entailment"
LABEL_NOT_ENTAILMENT = "not_entailment"
VARIANT_CHAIN = "chain"
VARIANT_WO_CHAIN = "wo_chain"

DEFAULT_SEPARATOR = "\n"

_JSONL_FIELDS = (
    "instance_id",
    "source",
    "requirement_id",
    "premise",
    "hypothesis",
    "intermediate_texts",
    "label",
    "hop",
    "variant",
    "provenance",
)


class UnknownRequirement(ValueError):
    """An instance's requirement id is absent from the split specification."""


class JsonlError(ValueError):
    def __init__(self, path: str, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


@dataclass(frozen=True)
class NliInstance:
    premise: str
    hypothesis: str
    intermediate_texts: tuple[str, ...]
    label: str
    hop: int
    variant: str
    requirement_id: str
    source: str
    provenance: dict[str, str]
    instance_id: str = ""

    def __post_init__(self) -> None:
        if self.hop < 1:
            raise ValueError("hop must be >= 1")
        if self.hop == 1 and self.intermediate_texts:
            raise ValueError("hop-1 instances must not carry intermediate texts")
        if not self.instance_id:
            object.__setattr__(self, "instance_id", _derive_instance_id(self))


def _derive_instance_id(inst: NliInstance) -> str:
    payload = json.dumps(
        [inst.source, inst.requirement_id, inst.label, inst.variant, sorted(inst.provenance.items())],
        ensure_ascii=True,
    )
    digest = hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]
    return f"{inst.source}-{digest}"


@dataclass(frozen=True)
class SamplerConfig:
    negative_rate: float = 0.1
    seed: int = 0
    within_case_negatives: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.negative_rate <= 1.0:
            raise ValueError("negative_rate must be in [0, 1]")


@dataclass(frozen=True)
class SplitSpec:
    train_requirements: frozenset[str]
    test_requirements: frozenset[str]

    def __post_init__(self) -> None:
        overlap = self.train_requirements & self.test_requirements
        if overlap:
            raise ValueError(f"train/test requirement sets overlap: {sorted(overlap)}")

    @classmethod
    def from_file(cls, path: str | Path) -> "SplitSpec":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(frozenset(doc["train"]), frozenset(doc["test"]))


def build_gdpr_nli(
    requirements: list[tuple[str, str]],
    dpa_sentences: list[tuple[str, str, set[str]]],
    cfg: SamplerConfig,
) -> list[NliInstance]:
    """Requirement-premise / sentence-hypothesis pairs.

    Gold matches become entailment instances; every other combination is an
    independent Bernoulli(``negative_rate``) draw, iterated hypothesis-major
    with one generator per sentence so the output is order-independent.
    """
    seen_req = set()
    for rid, _ in requirements:
        if rid in seen_req:
            raise ValueError(f"duplicate requirement id {rid!r}")
        seen_req.add(rid)
    instances: list[NliInstance] = []
    for dpa_id, dpa_text, gold in dpa_sentences:
        rng = keyed_rng(cfg.seed, "gdpr_dpa", dpa_id)
        for req_id, req_text in requirements:
            is_gold = req_id in gold
            draw = rng.random()  # one draw per candidate keeps the stream aligned
            if is_gold:
                label = LABEL_ENTAILMENT
            elif draw >= cfg.negative_rate:
                continue
            else:
                label = LABEL_NOT_ENTAILMENT
            instances.append(
                NliInstance(
                    premise=req_text,
                    hypothesis=dpa_text,
                    intermediate_texts=(),
                    label=label,
                    hop=1,
                    variant=VARIANT_WO_CHAIN,
                    requirement_id=req_id,
                    source="gdpr_dpa",
                    provenance={"requirement_id": req_id, "dpa_id": dpa_id},
                )
            )
    return instances


def _paths_from(case: AssuranceCase, start: str, max_hop: int) -> list[list[str]]:
    """All downward paths of length 1..max_hop starting at ``start``."""
    out: list[list[str]] = []
    stack: list[list[str]] = [[start]]
    while stack:
        path = stack.pop()
        if len(path) > 1:
            out.append(path)
        if len(path) - 1 >= max_hop:
            continue
        node = case.nodes[path[-1]]
        for child in reversed(node.children):
            if child in case.nodes:
                stack.append(path + [child])
    return out


def cae_pairs(case: AssuranceCase, max_hop: int) -> list[NliInstance]:
    """Entailment instances for every ancestor/descendant pair within
    ``max_hop`` edges, in both input variants."""
    if max_hop < 1:
        raise ValueError("max_hop must be >= 1")
    instances: list[NliInstance] = []
    order = [n.id for n in case.preorder()]
    for start in order:
        for path in _paths_from(case, start, max_hop):
            premise = case.nodes[path[0]]
            hypothesis = case.nodes[path[-1]]
            intermediates = tuple(case.nodes[nid].text for nid in path[1:-1])
            hop = len(path) - 1
            for variant in (VARIANT_CHAIN, VARIANT_WO_CHAIN):
                instances.append(
                    NliInstance(
                        premise=premise.text,
                        hypothesis=hypothesis.text,
                        intermediate_texts=intermediates if hop > 1 else (),
                        label=LABEL_ENTAILMENT,
                        hop=hop,
                        variant=variant,
                        requirement_id=case.requirement_id,
                        source="cae",
                        provenance={
                            "premise_case": case.case_id,
                            "premise_node": premise.id,
                            "hypothesis_case": case.case_id,
                            "hypothesis_node": hypothesis.id,
                        },
                    )
                )
    return instances


def _descendants(case: AssuranceCase) -> dict[str, set[str]]:
    desc: dict[str, set[str]] = {nid: set() for nid in case.nodes}

    def collect(nid: str) -> set[str]:
        acc: set[str] = set()
        for child in case.nodes[nid].children:
            if child in case.nodes:
                acc.add(child)
                acc |= collect(child)
        desc[nid] = acc
        return acc

    collect(case.root)
    return desc


def _tree_distance(case: AssuranceCase, u: str, v: str) -> int:
    depths = case.depths()
    parents: dict[str, str] = {}
    for node in case.nodes.values():
        for child in node.children:
            parents[child] = node.id

    def ancestors(x: str) -> list[str]:
        chain = [x]
        while chain[-1] in parents:
            chain.append(parents[chain[-1]])
        return chain

    up = set(ancestors(u))
    for anc in ancestors(v):
        if anc in up:
            return (depths[u] - depths[anc]) + (depths[v] - depths[anc])
    return depths[u] + depths[v]


def _negative(premise_case, premise_node, hyp_case, hyp_node, hop, variant) -> NliInstance:
    return NliInstance(
        premise=premise_node.text,
        hypothesis=hyp_node.text,
        intermediate_texts=(),
        label=LABEL_NOT_ENTAILMENT,
        hop=max(1, hop),
        variant=variant,
        requirement_id=premise_case.requirement_id,
        source="cae",
        provenance={
            "premise_case": premise_case.case_id,
            "premise_node": premise_node.id,
            "hypothesis_case": hyp_case.case_id,
            "hypothesis_node": hyp_node.id,
        },
    )


def cae_negatives(cases: list[AssuranceCase], cfg: SamplerConfig) -> list[NliInstance]:
    """Non-entailment instances.

    Cross-requirement candidates take the premise from one case and the
    hypothesis from a case of a different requirement; the recorded hop is
    the depth gap the pair imitates. With ``within_case_negatives``,
    non-descendant pairs inside each case are candidates too, with hop equal
    to the actual tree distance. Positives can never be drawn: within a case
    descendants are excluded, across cases the node pair is never an
    ancestor/descendant pair.
    """
    ordered = sorted(cases, key=lambda c: c.case_id)
    instances: list[NliInstance] = []
    for case_a in ordered:
        depths_a = case_a.depths()
        order_a = [n.id for n in case_a.preorder()]
        for case_b in ordered:
            if case_b.requirement_id == case_a.requirement_id:
                continue
            rng = keyed_rng(cfg.seed, "cae_cross", case_a.case_id, case_b.case_id)
            depths_b = case_b.depths()
            order_b = [n.id for n in case_b.preorder()]
            for u in order_a:
                for v in order_b:
                    if rng.random() >= cfg.negative_rate:
                        continue
                    hop = depths_b[v] - depths_a[u]
                    for variant in (VARIANT_CHAIN, VARIANT_WO_CHAIN):
                        instances.append(
                            _negative(case_a, case_a.nodes[u], case_b, case_b.nodes[v], hop, variant)
                        )
    if cfg.within_case_negatives:
        for case in ordered:
            rng = keyed_rng(cfg.seed, "cae_within", case.case_id)
            desc = _descendants(case)
            order = [n.id for n in case.preorder()]
            for u in order:
                for v in order:
                    if v == u or v in desc[u]:
                        continue
                    if rng.random() >= cfg.negative_rate:
                        continue
                    hop = _tree_distance(case, u, v)
                    for variant in (VARIANT_CHAIN, VARIANT_WO_CHAIN):
                        instances.append(
                            _negative(case, case.nodes[u], case, case.nodes[v], hop, variant)
                        )
    return instances


def render_input(instance: NliInstance, separator: str = DEFAULT_SEPARATOR) -> tuple[str, str]:
    """(premise text, hypothesis text) as fed to a scorer. The chain variant
    appends the intermediate path texts to the premise, in path order."""
    if instance.variant == VARIANT_CHAIN and instance.intermediate_texts:
        return separator.join((instance.premise, *instance.intermediate_texts)), instance.hypothesis
    return instance.premise, instance.hypothesis


def split_by_requirement(
    instances: list[NliInstance], spec: SplitSpec
) -> tuple[list[NliInstance], list[NliInstance]]:
    train: list[NliInstance] = []
    test: list[NliInstance] = []
    for inst in instances:
        if inst.requirement_id in spec.train_requirements:
            train.append(inst)
        elif inst.requirement_id in spec.test_requirements:
            test.append(inst)
        else:
            raise UnknownRequirement(
                f"requirement {inst.requirement_id!r} is in neither split"
            )
    return train, test


def instance_to_dict(inst: NliInstance) -> dict:
    doc = {}
    for name in _JSONL_FIELDS:
        value = getattr(inst, name)
        doc[name] = list(value) if isinstance(value, tuple) else value
    return doc


def instance_from_dict(doc: dict) -> NliInstance:
    missing = [k for k in _JSONL_FIELDS if k not in doc]
    if missing:
        raise ValueError(f"missing fields: {missing}")
    return NliInstance(
        premise=doc["premise"],
        hypothesis=doc["hypothesis"],
        intermediate_texts=tuple(doc["intermediate_texts"]),
        label=doc["label"],
        hop=doc["hop"],
        variant=doc["variant"],
        requirement_id=doc["requirement_id"],
        source=doc["source"],
        provenance=dict(doc["provenance"]),
        instance_id=doc["instance_id"],
    )


def export_jsonl(instances: list[NliInstance], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(instance_to_dict(inst), ensure_ascii=False) + "\n")


def import_jsonl(path: str | Path) -> list[NliInstance]:
    out: list[NliInstance] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(instance_from_dict(json.loads(line)))
            except (json.JSONDecodeError, ValueError, KeyError, TypeError) as exc:
                raise JsonlError(str(path), line_no, str(exc)) from exc
    return out


def hop_counts(instances: list[NliInstance]) -> dict[int, int]:
    """Entailment instances per hop."""
    counts: dict[int, int] = {}
    for inst in instances:
        if inst.label == LABEL_ENTAILMENT:
            counts[inst.hop] = counts.get(inst.hop, 0) + 1
    return counts


def hop_table_csv(train: list[NliInstance], test: list[NliInstance]) -> str:
    """Per-hop count table; ``All`` includes negatives, hop rows count the
    entailment pairs at that depth."""
    train_hops = hop_counts(train)
    test_hops = hop_counts(test)
    max_hop = max([*train_hops, *test_hops, 1])
    lines = ["row,train,test", f"All,{len(train)},{len(test)}"]
    for hop in range(1, max_hop + 1):
        lines.append(f"#{hop}_hop,{train_hops.get(hop, 0)},{test_hops.get(hop, 0)}")
    return "\n".join(lines) + "\n"
