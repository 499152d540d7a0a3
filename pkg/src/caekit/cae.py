"""Claim-Argument-Evidence (CAE) assurance cases: parsing, validation, canonical JSON.

An assurance case is a rooted tree of typed nodes. The on-disk format nests
children under a single ``main_claim`` object, so a syntactically well-formed
document is always a tree:

    {
      "requirement_id": "R18",
      "source_model": "phi4",        // optional, defaults to "unknown"
      "run_index": 0,                // optional, defaults to 0
      "main_claim": {
        "id": "c1", "type": "MainClaim", "text": "...",
        "children": [ {"id": "c2", "type": "SubClaim", "text": "...", "children": []} ]
      }
    }

Parsing errors are split into three distinguishable categories so callers can
account for them separately: :class:`MalformedJson`, :class:`SchemaViolation`
and :class:`StructureViolation`.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path


class NodeType(str, Enum):
    MAIN_CLAIM = "MainClaim"
    SUB_CLAIM = "SubClaim"
    ARGUMENT_CLAIM = "ArgumentClaim"
    ARGUMENT_SUB_CLAIM = "ArgumentSubClaim"
    EVIDENCE = "Evidence"


# Depth rank used for the default parent->child transition policy: a parent
# may own children of any strictly deeper rank (skip-level edges allowed).
_TYPE_RANK = {
    NodeType.MAIN_CLAIM: 0,
    NodeType.SUB_CLAIM: 1,
    NodeType.ARGUMENT_CLAIM: 2,
    NodeType.ARGUMENT_SUB_CLAIM: 3,
    NodeType.EVIDENCE: 4,
}

DEFAULT_ALLOWED_TRANSITIONS: dict[NodeType, frozenset[NodeType]] = {
    parent: frozenset(t for t in NodeType if _TYPE_RANK[t] > _TYPE_RANK[parent])
    for parent in NodeType
}


class CaseParseError(ValueError):
    """Base class for assurance-case parse failures."""


class MalformedJson(CaseParseError):
    """The document is not parseable JSON at all."""


class SchemaViolation(CaseParseError):
    """Valid JSON, but a required field is missing or has the wrong shape."""


class StructureViolation(CaseParseError):
    """The node graph breaks a tree invariant (duplicate id, evidence with
    children, root of the wrong type)."""


@dataclass(frozen=True)
class CaeNode:
    id: str
    node_type: NodeType
    text: str
    children: tuple[str, ...] = ()


@dataclass(frozen=True)
class AssuranceCase:
    requirement_id: str
    source_model: str
    run_index: int
    root: str
    nodes: dict[str, CaeNode]

    @property
    def case_id(self) -> str:
        return f"{self.source_model}__{self.requirement_id}__{self.run_index}"

    def preorder(self) -> list[CaeNode]:
        """Nodes in depth-first order, children in stored order."""
        out: list[CaeNode] = []
        stack = [self.root]
        seen: set[str] = set()
        while stack:
            nid = stack.pop()
            if nid in seen or nid not in self.nodes:
                continue
            seen.add(nid)
            node = self.nodes[nid]
            out.append(node)
            stack.extend(reversed(node.children))
        return out

    def depths(self) -> dict[str, int]:
        """Edge-distance from the root for every reachable node."""
        out = {self.root: 0}
        stack = [self.root]
        while stack:
            nid = stack.pop()
            node = self.nodes.get(nid)
            if node is None:
                continue
            for child in node.children:
                if child not in out and child in self.nodes:
                    out[child] = out[nid] + 1
                    stack.append(child)
        return out


@dataclass(frozen=True)
class Violation:
    code: str
    node_id: str
    message: str


@dataclass
class ValidationReport:
    case_id: str
    violations: list[Violation] = field(default_factory=list)
    warnings: list[Violation] = field(default_factory=list)

    @property
    def is_valid(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "is_valid": self.is_valid,
            "violations": [vars(v) for v in self.violations],
            "warnings": [vars(v) for v in self.warnings],
        }


def _require(obj: dict, key: str, context: str) -> object:
    if key not in obj:
        raise SchemaViolation(f"{context}: missing required field {key!r}")
    return obj[key]


def _parse_node(obj: object, nodes: dict[str, CaeNode], context: str) -> str:
    if not isinstance(obj, dict):
        raise SchemaViolation(f"{context}: node must be a JSON object, got {type(obj).__name__}")
    node_id = _require(obj, "id", context)
    if not isinstance(node_id, str) or not node_id:
        raise SchemaViolation(f"{context}: node id must be a nonempty string")
    type_str = _require(obj, "type", f"node {node_id!r}")
    try:
        node_type = NodeType(type_str)
    except ValueError:
        raise SchemaViolation(f"node {node_id!r}: unknown node type {type_str!r}") from None
    text = _require(obj, "text", f"node {node_id!r}")
    if not isinstance(text, str) or not text.strip():
        raise SchemaViolation(f"node {node_id!r}: text must be a nonempty string")
    if node_id in nodes:
        raise StructureViolation(f"duplicate node id {node_id!r}")

    raw_children = obj.get("children", [])
    if not isinstance(raw_children, list):
        raise SchemaViolation(f"node {node_id!r}: children must be a list")
    if node_type is NodeType.EVIDENCE and raw_children:
        raise StructureViolation(f"evidence node {node_id!r} has children")

    # Reserve the id before recursing so a child reusing it is caught.
    nodes[node_id] = CaeNode(node_id, node_type, text.strip())
    child_ids = tuple(_parse_node(c, nodes, f"child of {node_id!r}") for c in raw_children)
    nodes[node_id] = CaeNode(node_id, node_type, text.strip(), child_ids)
    return node_id


def parse_assurance_case(
    document: str,
    requirement_id: str | None = None,
    source_model: str | None = None,
    run_index: int | None = None,
) -> AssuranceCase:
    """Parse a JSON document into an :class:`AssuranceCase`.

    Explicit meta arguments override the corresponding document fields; the
    usual source of meta is the ``<model>__<requirement>__<run>.json`` file
    name convention (see :func:`meta_from_filename`).

    Raises :class:`MalformedJson`, :class:`SchemaViolation` or
    :class:`StructureViolation`.
    """
    try:
        doc = json.loads(document)
    except (json.JSONDecodeError, TypeError) as exc:
        raise MalformedJson(f"not parseable JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaViolation(f"top-level element must be a JSON object, got {type(doc).__name__}")

    req = requirement_id if requirement_id is not None else doc.get("requirement_id")
    if not isinstance(req, str) or not req:
        raise SchemaViolation("missing required field 'requirement_id' (document or meta)")
    model = source_model if source_model is not None else doc.get("source_model", "unknown")
    if not isinstance(model, str) or not model:
        raise SchemaViolation("'source_model' must be a nonempty string")
    run = run_index if run_index is not None else doc.get("run_index", 0)
    if not isinstance(run, int) or isinstance(run, bool) or run < 0:
        raise SchemaViolation("'run_index' must be a nonnegative integer")

    main_claim = _require(doc, "main_claim", "document")
    nodes: dict[str, CaeNode] = {}
    root = _parse_node(main_claim, nodes, "main_claim")
    if nodes[root].node_type is not NodeType.MAIN_CLAIM:
        raise StructureViolation(
            f"root node {root!r} has type {nodes[root].node_type.value!r}, expected MainClaim"
        )
    return AssuranceCase(req, model, run, root, nodes)


def validate(
    case: AssuranceCase,
    allowed_transitions: dict[NodeType, frozenset[NodeType]] | None = None,
) -> ValidationReport:
    """Structural validation. Always returns a report, never raises.

    Errors (``violations``) make the case invalid; stylistic findings such as
    non-Evidence leaves or unusual parent/child type pairings are warnings.
    """
    transitions = allowed_transitions or DEFAULT_ALLOWED_TRANSITIONS
    report = ValidationReport(case_id=case.case_id)
    err = report.violations.append
    warn = report.warnings.append

    if case.root not in case.nodes:
        err(Violation("MissingRoot", case.root, "root id not present in node map"))
        return report
    if case.nodes[case.root].node_type is not NodeType.MAIN_CLAIM:
        err(Violation("RootNotMainClaim", case.root, "root must be a MainClaim"))

    parents: dict[str, list[str]] = {}
    for node in case.nodes.values():
        if not node.text.strip():
            err(Violation("EmptyText", node.id, "node text is empty"))
        for child in node.children:
            if child not in case.nodes:
                err(Violation("MissingChild", node.id, f"child {child!r} is not a known node"))
                continue
            parents.setdefault(child, []).append(node.id)
        if node.node_type is NodeType.EVIDENCE and node.children:
            err(Violation("EvidenceHasChildren", node.id, "evidence nodes must be leaves"))

    main_claims = [n for n in case.nodes.values() if n.node_type is NodeType.MAIN_CLAIM]
    if len(main_claims) > 1:
        for n in main_claims:
            if n.id != case.root:
                err(Violation("MultipleMainClaims", n.id, "only the root may be a MainClaim"))
    if case.root in parents:
        err(Violation("RootHasParent", case.root, "root must not be a child of any node"))
    for child, ps in parents.items():
        if len(ps) > 1:
            err(Violation("MultipleParents", child, f"node has {len(ps)} parents: {sorted(ps)}"))

    # Reachability and cycle detection (iterative DFS with on-path tracking).
    reachable: set[str] = set()
    on_path: set[str] = set()
    stack: list[tuple[str, bool]] = [(case.root, False)]
    while stack:
        nid, done = stack.pop()
        if done:
            on_path.discard(nid)
            continue
        if nid in on_path:
            err(Violation("Cycle", nid, "node participates in a cycle"))
            continue
        if nid in reachable or nid not in case.nodes:
            continue
        reachable.add(nid)
        on_path.add(nid)
        stack.append((nid, True))
        for child in case.nodes[nid].children:
            stack.append((child, False))
    for nid in sorted(set(case.nodes) - reachable):
        err(Violation("OrphanNode", nid, "node not reachable from the root"))

    if not any(n.node_type is NodeType.EVIDENCE for n in case.nodes.values()):
        err(Violation("NoEvidence", "", "case contains no Evidence node"))

    for node in case.nodes.values():
        if not node.children and node.node_type is not NodeType.EVIDENCE:
            warn(Violation("NonEvidenceLeaf", node.id, f"leaf has type {node.node_type.value}"))
        for child in node.children:
            child_node = case.nodes.get(child)
            if child_node and child_node.node_type not in transitions.get(node.node_type, frozenset()):
                warn(
                    Violation(
                        "UnexpectedChildType",
                        child,
                        f"{child_node.node_type.value} under {node.node_type.value}",
                    )
                )
    return report


def count_by_type(case: AssuranceCase) -> dict[NodeType, int]:
    counts = {t: 0 for t in NodeType}
    for node in case.nodes.values():
        counts[node.node_type] += 1
    return counts


def _node_to_json(case: AssuranceCase, node_id: str) -> dict:
    node = case.nodes[node_id]
    return {
        "id": node.id,
        "type": node.node_type.value,
        "text": node.text,
        "children": [_node_to_json(case, c) for c in node.children],
    }


def serialize(case: AssuranceCase) -> str:
    """Canonical JSON text. Deterministic: fixed key order, 2-space indent,
    trailing newline. ``parse_assurance_case(serialize(c)) == c``."""
    doc = {
        "requirement_id": case.requirement_id,
        "source_model": case.source_model,
        "run_index": case.run_index,
        "main_claim": _node_to_json(case, case.root),
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


_FILENAME_RE = re.compile(r"^(?P<model>.+)__(?P<req>[^_].*?)__(?P<run>\d+)$")


def meta_from_filename(path: str | Path) -> tuple[str, str, int]:
    """Split ``<model>__<requirement_id>__<run>.json`` into its parts.

    The model segment may itself contain ``__``; the requirement and run are
    the last two double-underscore-separated fields.
    """
    stem = Path(path).name
    if stem.endswith(".json"):
        stem = stem[: -len(".json")]
    parts = stem.split("__")
    if len(parts) < 3 or not parts[-1].isdigit():
        raise ValueError(
            f"{path!r} does not match the <model>__<requirement_id>__<run>.json convention"
        )
    return "__".join(parts[:-2]), parts[-2], int(parts[-1])


def load_case_file(path: str | Path) -> AssuranceCase:
    """Parse one case file, taking meta from the file name convention."""
    model, req, run = meta_from_filename(path)
    text = Path(path).read_text(encoding="utf-8")
    return parse_assurance_case(text, requirement_id=req, source_model=model, run_index=run)
