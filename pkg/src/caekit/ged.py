"""Graph edit distance between typed assurance-case trees.

Cases are compared as unordered rooted trees embedded as undirected labeled
graphs: the node label is the CAE node type, node text is ignored, and edges
are the parent/child links. Distance zero (under an exact search) means the
two trees are isomorphic up to node ids and texts.

:func:`ged_exact` runs a best-first search over partial node assignments
(nodes of the first graph are decided one at a time: mapped to an unused node
of the second graph or deleted) with an admissible remaining-cost bound, so
the distance it reports is the true minimum whenever the state budget is not
exhausted. :func:`ged_approx` computes an upper bound from a single optimal
bipartite node assignment on (type, degree) signatures.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

from scipy.optimize import linear_sum_assignment

from .cae import AssuranceCase, NodeType

EditOp = tuple[str, str, str]

DEFAULT_BUDGET = 1_000_000


@dataclass(frozen=True)
class GedCostModel:
    """Edit costs. Substituting a node by one of the same type is free;
    ``node_substitute`` is the (symmetric) cost across different types and
    must be positive so that zero-cost substitution implies equal types."""

    node_insert: float = 1.0
    node_delete: float = 1.0
    node_substitute: float = 1.0
    edge_insert: float = 1.0
    edge_delete: float = 1.0

    def __post_init__(self) -> None:
        for name in ("node_insert", "node_delete", "node_substitute", "edge_insert", "edge_delete"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.node_substitute <= 0:
            raise ValueError("node_substitute must be > 0 (cost 0 is reserved for equal types)")

    def sub_cost(self, label_a: str, label_b: str) -> float:
        return 0.0 if label_a == label_b else self.node_substitute


@dataclass
class GedResult:
    distance: float
    exact: bool
    expanded_states: int
    edit_path: list[EditOp] | None = None


@dataclass(frozen=True)
class LabeledGraph:
    """Flat graph view used by the edit-distance search."""

    labels: tuple[str, ...]
    edges: frozenset[frozenset[int]]
    names: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return len(self.labels)

    def degree(self, i: int) -> int:
        return sum(1 for e in self.edges if i in e)

    def adjacency(self) -> list[set[int]]:
        adj: list[set[int]] = [set() for _ in range(self.n)]
        for e in self.edges:
            a, b = tuple(e)
            adj[a].add(b)
            adj[b].add(a)
        return adj


def case_graph(case: AssuranceCase) -> LabeledGraph:
    """Embed a case as a labeled graph; node order is tree preorder."""
    order = case.preorder()
    index = {node.id: i for i, node in enumerate(order)}
    edges = set()
    for node in order:
        for child in node.children:
            if child in index:
                edges.add(frozenset((index[node.id], index[child])))
    return LabeledGraph(
        labels=tuple(n.node_type.value for n in order),
        edges=frozenset(edges),
        names=tuple(n.id for n in order),
    )


def _as_graph(g: AssuranceCase | LabeledGraph) -> LabeledGraph:
    return g if isinstance(g, LabeledGraph) else case_graph(g)


def induced_edit_cost(
    ga: LabeledGraph,
    gb: LabeledGraph,
    mapping: dict[int, int | None],
    costs: GedCostModel,
) -> float:
    """Exact edit cost of one complete node assignment (``None`` = deleted;
    unassigned nodes of ``gb`` are inserted). Any such cost is an upper bound
    on the edit distance."""
    total = 0.0
    used_b = {v for v in mapping.values() if v is not None}
    for i in range(ga.n):
        j = mapping.get(i)
        total += costs.node_delete if j is None else costs.sub_cost(ga.labels[i], gb.labels[j])
    total += costs.node_insert * (gb.n - len(used_b))

    image = {i: j for i, j in mapping.items() if j is not None}
    mapped_b_edges = set()
    for e in ga.edges:
        a1, a2 = tuple(e)
        if a1 in image and a2 in image:
            be = frozenset((image[a1], image[a2]))
            if be in gb.edges:
                mapped_b_edges.add(be)
            else:
                total += costs.edge_delete
        else:
            total += costs.edge_delete
    total += costs.edge_insert * len(gb.edges - mapped_b_edges)
    return total


def _signature_assignment(ga: LabeledGraph, gb: LabeledGraph, costs: GedCostModel) -> dict[int, int | None]:
    """Optimal bipartite assignment on local (type, degree) signatures."""
    n, m = ga.n, gb.n
    big = (
        (n + m) * (costs.node_insert + costs.node_delete + costs.node_substitute)
        + 2 * (len(ga.edges) + len(gb.edges) + 1) * (costs.edge_insert + costs.edge_delete)
        + 1.0
    )
    deg_a = [ga.degree(i) for i in range(n)]
    deg_b = [gb.degree(j) for j in range(m)]
    local = min(costs.edge_insert, costs.edge_delete)

    # Riesen/Bunke-style square matrix: rows = A nodes then B-insertion rows,
    # cols = B nodes then A-deletion cols. Each node may only use its own
    # dummy row/column.
    size = n + m
    cost = [[big] * size for _ in range(size)]
    for i in range(n):
        for j in range(m):
            cost[i][j] = costs.sub_cost(ga.labels[i], gb.labels[j]) + local * abs(deg_a[i] - deg_b[j])
        cost[i][m + i] = costs.node_delete + costs.edge_delete * deg_a[i]
    for j in range(m):
        cost[n + j][j] = costs.node_insert + costs.edge_insert * deg_b[j]
        for k in range(n):
            cost[n + j][m + k] = 0.0

    rows, cols = linear_sum_assignment(cost)
    mapping: dict[int, int | None] = {}
    for r, c in zip(rows, cols):
        if r < n:
            mapping[r] = c if c < m else None
    return mapping


def _aligned_assignment(ga: LabeledGraph, gb: LabeledGraph) -> dict[int, int | None]:
    """Pair nodes by preorder position; surplus nodes are deleted/inserted.
    Cheap but tight for near-identical generations."""
    k = min(ga.n, gb.n)
    mapping: dict[int, int | None] = {i: i for i in range(k)}
    for i in range(k, ga.n):
        mapping[i] = None
    return mapping


def _refine_assignment(
    ga: LabeledGraph,
    gb: LabeledGraph,
    mapping: dict[int, int | None],
    costs: GedCostModel,
    max_passes: int = 5,
) -> tuple[dict[int, int | None], float]:
    """Deterministic local search: swap two images, or retarget one node to
    an unused B node, while the induced cost improves."""
    best = induced_edit_cost(ga, gb, mapping, costs)
    n = ga.n
    for _ in range(max_passes):
        improved = False
        for i1 in range(n):
            for i2 in range(i1 + 1, n):
                if mapping[i1] == mapping[i2]:
                    continue
                trial = dict(mapping)
                trial[i1], trial[i2] = trial[i2], trial[i1]
                cost = induced_edit_cost(ga, gb, trial, costs)
                if cost < best - 1e-12:
                    mapping, best, improved = trial, cost, True
        used = {v for v in mapping.values() if v is not None}
        for i in range(n):
            for u in range(gb.n):
                if u in used:
                    continue
                trial = dict(mapping)
                trial[i] = u
                cost = induced_edit_cost(ga, gb, trial, costs)
                if cost < best - 1e-12:
                    mapping, best, improved = trial, cost, True
                    used = {v for v in mapping.values() if v is not None}
        if not improved:
            break
    return mapping, best


def ged_approx(
    a: AssuranceCase | LabeledGraph,
    b: AssuranceCase | LabeledGraph,
    costs: GedCostModel | None = None,
) -> GedResult:
    """Deterministic upper bound on the edit distance (never below it)."""
    costs = costs or GedCostModel()
    ga, gb = _as_graph(a), _as_graph(b)
    candidates = [
        _signature_assignment(ga, gb, costs),
        _aligned_assignment(ga, gb),
    ]
    best = min(_refine_assignment(ga, gb, mapping, costs)[1] for mapping in candidates)
    return GedResult(distance=best, exact=False, expanded_states=0)


def ged_exact(
    a: AssuranceCase | LabeledGraph,
    b: AssuranceCase | LabeledGraph,
    costs: GedCostModel | None = None,
    budget: int = DEFAULT_BUDGET,
    return_path: bool = False,
) -> GedResult:
    """Minimum edit distance, or a flagged upper bound if ``budget`` states
    are expanded first.

    States are partial assignments deciding A's nodes in index order (for
    trees built by :func:`case_graph` that is preorder, so each node meets
    its parent's decision immediately). The admissible remaining-cost bound
    combines an optimal label matching of the undecided nodes, the count gap
    between edges joining two undecided nodes on either side, and the edges
    from already-deleted nodes to undecided ones, whose deletion is forced.
    """
    costs = costs or GedCostModel()
    ga, gb = _as_graph(a), _as_graph(b)
    n, m = ga.n, gb.n
    if n == 0:
        dist = m * costs.node_insert + len(gb.edges) * costs.edge_insert
        path = _build_path(ga, gb, ()) if return_path else None
        return GedResult(distance=dist, exact=True, expanded_states=0, edit_path=path)

    label_names = sorted(set(ga.labels) | set(gb.labels))
    lab = {name: i for i, name in enumerate(label_names)}
    n_labels = len(label_names)
    la = [lab[x] for x in ga.labels]
    lb = [lab[x] for x in gb.labels]

    adj_a_mask = [0] * n
    adj_b_mask = [0] * m
    for e in ga.edges:
        u, v = tuple(e)
        adj_a_mask[u] |= 1 << v
        adj_a_mask[v] |= 1 << u
    for e in gb.edges:
        u, v = tuple(e)
        adj_b_mask[u] |= 1 << v
        adj_b_mask[v] |= 1 << u
    earlier = [[i for i in range(k) if adj_a_mask[k] >> i & 1] for k in range(n)]
    later_count = [bin(adj_a_mask[k] >> (k + 1)).count("1") for k in range(n)]
    total_b_edges = len(gb.edges)

    # Twin nodes (same label, same neighbor set — e.g. sibling Evidence
    # leaves) are interchangeable, so the search only visits canonical
    # assignments: within a B twin class the lowest free index is used first;
    # within an A twin class images are increasing and deletions come last.
    b_twin_earlier = [0] * m
    b_groups: dict[tuple[int, int], int] = {}
    for j in range(m):
        key = (lb[j], adj_b_mask[j])
        b_twin_earlier[j] = b_groups.get(key, 0)
        b_groups[key] = b_groups.get(key, 0) | (1 << j)
    a_twin_prev = [-1] * n
    a_seen: dict[tuple[int, int], int] = {}
    for k in range(n):
        key = (la[k], adj_a_mask[k])
        if key in a_seen:
            a_twin_prev[k] = a_seen[key]
        a_seen[key] = k

    # suffix label counts of A and "both endpoints undecided" A-edge counts,
    # by prefix length
    suffix_a = [[0] * n_labels for _ in range(n + 1)]
    for k in range(n - 1, -1, -1):
        row = suffix_a[k + 1].copy()
        row[la[k]] += 1
        suffix_a[k] = row
    ea_rem = [sum(1 for e in ga.edges if min(e) >= k) for k in range(n + 1)]

    sub, ndel, nins = costs.node_substitute, costs.node_delete, costs.node_insert
    edel, eins = costs.edge_delete, costs.edge_insert
    cross_cost = min(sub, ndel + nins)

    def contrib(a_open: int, b_open: int) -> float:
        # a mapped node with unequal open-edge counts must pay the difference
        d = a_open - b_open
        return d * edel if d >= 0 else -d * eins

    def h_label_edge(k: int, b_counts: tuple[int, ...], eb_rem: int, forced: int) -> float:
        ra = suffix_a[k]
        same = 0
        total_a = 0
        total_b = 0
        for t in range(n_labels):
            ca, cb = ra[t], b_counts[t]
            same += ca if ca < cb else cb
            total_a += ca
            total_b += cb
        left_a = total_a - same
        left_b = total_b - same
        cross = left_a if left_a < left_b else left_b
        bound = cross * cross_cost + (left_a - cross) * ndel + (left_b - cross) * nins
        d = ea_rem[k] - eb_rem
        bound += d * edel if d >= 0 else -d * eins
        return bound + forced * edel

    upper = ged_approx(ga, gb, costs).distance
    eps = 1e-9

    b_counts0 = [0] * n_labels
    for t in lb:
        b_counts0[t] += 1
    b_counts0 = tuple(b_counts0)

    # state: (f, tiebreak, g, assigned, used_mask, eb_rem, both_used,
    #         b_counts, forced, opens, h_open)
    # opens[i] packs the mapped node i's open-edge counts (a_open << 8 | b_open):
    # A-edges from i to undecided nodes and B-edges from its image to unused
    # nodes; h_open is the summed contrib over mapped nodes.
    zeros = (0,) * n
    start = (h_label_edge(0, b_counts0, total_b_edges, 0), 0, 0.0, (), 0, total_b_edges, 0, b_counts0, 0, zeros, 0.0)
    heap = [start]
    expanded = 0
    counter = 1
    full_mask = (1 << m) - 1

    while heap:
        f, _, g, assigned, used_mask, eb_rem, both_used, b_counts, forced, opens, h_open = heapq.heappop(heap)
        k = len(assigned)
        if k == n:
            path = _build_path(ga, gb, assigned) if return_path else None
            return GedResult(distance=g, exact=True, expanded_states=expanded, edit_path=path)
        expanded += 1
        if expanded > budget:
            return GedResult(distance=upper, exact=False, expanded_states=expanded)

        lk = la[k]
        nbrs = earlier[k]
        deleted_nbrs = sum(1 for i in nbrs if assigned[i] < 0)
        last = k + 1 == n
        mapped_pairs = [(i, bi) for i, bi in enumerate(assigned) if bi >= 0]

        # the edge (i, k) of every earlier mapped neighbor is resolved now,
        # whichever option is taken: its a_open drops by one
        opens_base = list(opens)
        h_open_base = h_open
        for i in nbrs:
            if assigned[i] >= 0:
                old = opens_base[i]
                ao, bo = old >> 8, old & 255
                h_open_base += contrib(ao - 1, bo) - contrib(ao, bo)
                opens_base[i] = old - 256

        twin = a_twin_prev[k]
        twin_floor = -1  # minimum allowed image (exclusive); -2 = deletion only
        if twin >= 0:
            twin_floor = assigned[twin] if assigned[twin] >= 0 else -2

        # map node k onto each unused B node
        free = ~used_mask & full_mask
        fm = free if twin_floor != -2 else 0
        while fm:
            low = fm & -fm
            j = low.bit_length() - 1
            fm ^= low
            if j <= twin_floor or b_twin_earlier[j] & free:
                continue
            delta = 0.0 if lk == lb[j] else sub
            bmask_j = adj_b_mask[j]
            matched = 0
            for i in nbrs:
                bi = assigned[i]
                if bi < 0:
                    delta += edel
                elif bmask_j >> bi & 1:
                    matched += 1
                else:
                    delta += edel
            inserts = bin(bmask_j & used_mask).count("1") - matched
            delta += eins * inserts
            g2 = g + delta
            used2 = used_mask | low
            eb2 = eb_rem - bin(bmask_j & ~used_mask & full_mask).count("1")
            bu2 = both_used + matched + inserts
            forced2 = forced - deleted_nbrs
            if last:
                g2 += (m - bin(used2).count("1")) * nins + (total_b_edges - bu2) * eins
                f2 = g2
                upper = min(upper, g2)
                if f2 <= upper + eps:
                    heapq.heappush(heap, (f2, counter, g2, assigned + (j,), used2, eb2, bu2, b_counts, forced2, opens, 0.0))
                    counter += 1
                continue
            bc2 = list(b_counts)
            bc2[lb[j]] -= 1
            bc2 = tuple(bc2)
            # the image's open B-edges close for every mapped node adjacent to j
            h_open2 = h_open_base
            opens2 = opens_base.copy()
            for i, bi in mapped_pairs:
                if bmask_j >> bi & 1:
                    old = opens2[i]
                    ao, bo = old >> 8, old & 255
                    h_open2 += contrib(ao, bo - 1) - contrib(ao, bo)
                    opens2[i] = old - 1
            ao_k = later_count[k]
            bo_k = bin(bmask_j & free & ~low).count("1")
            h_open2 += contrib(ao_k, bo_k)
            opens2[k] = (ao_k << 8) | bo_k
            f2 = g2 + h_label_edge(k + 1, bc2, eb2, forced2) + h_open2
            if f2 <= upper + eps:
                heapq.heappush(heap, (f2, counter, g2, assigned + (j,), used2, eb2, bu2, bc2, forced2, tuple(opens2), h_open2))
                counter += 1

        # delete node k
        g2 = g + ndel + edel * len(nbrs)
        forced2 = forced - deleted_nbrs + later_count[k]
        if last:
            g2 += (m - bin(used_mask).count("1")) * nins + (total_b_edges - both_used) * eins
            f2 = g2
            upper = min(upper, g2)
            if f2 <= upper + eps:
                heapq.heappush(heap, (f2, counter, g2, assigned + (-1,), used_mask, eb_rem, both_used, b_counts, forced2, opens, 0.0))
                counter += 1
        else:
            f2 = g2 + h_label_edge(k + 1, b_counts, eb_rem, forced2) + h_open_base
            if f2 <= upper + eps:
                heapq.heappush(heap, (f2, counter, g2, assigned + (-1,), used_mask, eb_rem, both_used, b_counts, forced2, tuple(opens_base), h_open_base))
                counter += 1

    # Defensive: pruning keeps every prefix of the ged_approx assignment, so
    # the heap cannot drain before a goal pops; report the bound if it does.
    return GedResult(distance=upper, exact=False, expanded_states=expanded)


def _build_path(ga: LabeledGraph, gb: LabeledGraph, assigned: tuple[int, ...]) -> list[EditOp]:
    def name_a(i: int) -> str:
        return ga.names[i] if ga.names else str(i)

    def name_b(j: int) -> str:
        return gb.names[j] if gb.names else str(j)

    ops: list[EditOp] = []
    image: dict[int, int] = {}
    for i, j in enumerate(assigned):
        if j < 0:
            ops.append(("node_delete", name_a(i), ""))
        else:
            image[i] = j
            kind = "node_match" if ga.labels[i] == gb.labels[j] else "node_substitute"
            ops.append((kind, name_a(i), name_b(j)))
    for j in range(gb.n):
        if j not in image.values():
            ops.append(("node_insert", "", name_b(j)))

    matched_b = set()
    for a1, a2 in (tuple(e) for e in ga.edges):
        if a1 in image and a2 in image:
            be = frozenset((image[a1], image[a2]))
            if be in gb.edges:
                matched_b.add(be)
                ops.append(("edge_match", f"{name_a(a1)}-{name_a(a2)}", "-".join(sorted(name_b(x) for x in be))))
                continue
        ops.append(("edge_delete", f"{name_a(a1)}-{name_a(a2)}", ""))
    for e in gb.edges - matched_b:
        ops.append(("edge_insert", "", "-".join(sorted(name_b(x) for x in e))))
    return ops


def random_typed_tree(rng, n_nodes: int) -> LabeledGraph:
    """Random tree with CAE-type labels, for tests and calibration. The root
    is always a MainClaim; other labels are drawn uniformly."""
    other = [t.value for t in NodeType if t is not NodeType.MAIN_CLAIM]
    labels = [NodeType.MAIN_CLAIM.value]
    edges = set()
    for i in range(1, n_nodes):
        labels.append(other[int(rng.integers(len(other)))])
        parent = int(rng.integers(i))
        edges.add(frozenset((parent, i)))
    return LabeledGraph(labels=tuple(labels), edges=frozenset(edges))
