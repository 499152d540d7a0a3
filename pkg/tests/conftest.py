from __future__ import annotations

from pathlib import Path

import pytest

from caekit.cae import AssuranceCase, CaeNode, NodeType

FIXTURES = Path(__file__).parent / "fixtures"

NodeSpec = tuple  # (node_id, type_name, children...)


def build_case(
    spec: NodeSpec,
    requirement_id: str = "R1",
    source_model: str = "toy",
    run_index: int = 0,
    texts: dict[str, str] | None = None,
) -> AssuranceCase:
    """Assemble a case from nested (id, type, *children) tuples; node text
    defaults to a phrase derived from the id."""
    texts = texts or {}
    nodes: dict[str, CaeNode] = {}

    def walk(node_spec: NodeSpec) -> str:
        node_id, type_name, *children = node_spec
        child_ids = tuple(walk(c) for c in children)
        nodes[node_id] = CaeNode(
            id=node_id,
            node_type=NodeType(type_name),
            text=texts.get(node_id, f"statement for {node_id}"),
            children=child_ids,
        )
        return node_id

    root = walk(spec)
    return AssuranceCase(requirement_id, source_model, run_index, root, nodes)


def path_case(types: list[str], **meta) -> AssuranceCase:
    """Single downward path with the given node types."""
    spec: NodeSpec = (f"n{len(types) - 1}", types[-1])
    for i in range(len(types) - 2, -1, -1):
        spec = (f"n{i}", types[i], spec)
    return build_case(spec, **meta)


def star_case(n_leaves: int, **meta) -> AssuranceCase:
    spec = ("root", "MainClaim", *[(f"e{i}", "Evidence") for i in range(n_leaves)])
    return build_case(spec, **meta)


def random_case(rng, n_nodes: int, **meta) -> AssuranceCase:
    """Random typed tree as an AssuranceCase; the root is a MainClaim,
    interior nodes never Evidence, leaves drawn from all non-root types."""
    interior = [NodeType.SUB_CLAIM, NodeType.ARGUMENT_CLAIM, NodeType.ARGUMENT_SUB_CLAIM]
    leafy = interior + [NodeType.EVIDENCE]
    children: dict[int, list[int]] = {i: [] for i in range(n_nodes)}
    for i in range(1, n_nodes):
        children[int(rng.integers(i))].append(i)
    nodes = {}
    for i in range(n_nodes):
        if i == 0:
            node_type = NodeType.MAIN_CLAIM
        elif children[i]:
            node_type = interior[int(rng.integers(len(interior)))]
        else:
            node_type = leafy[int(rng.integers(len(leafy)))]
        nodes[f"n{i}"] = CaeNode(
            id=f"n{i}",
            node_type=node_type,
            text=f"statement {i}",
            children=tuple(f"n{j}" for j in children[i]),
        )
    return AssuranceCase(root="n0", nodes=nodes, **{"requirement_id": "R1", "source_model": "toy", "run_index": 0, **meta})


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES
