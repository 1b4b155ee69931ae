"""Intra-group preference aggregation.

Builds the net pairwise-comparison graph of a group, extracts top components
with an early-stopping strongly-connected-components pass, orders small
components by exact Kemeny ranking (weighted minimum feedback arc set via
subset DP) and falls back to a Borda heuristic on large components.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .model import PairwiseComparisonMatrix

# Largest component the subset-DP Kemeny solver will accept (2^s states).
EXACT_KEMENY_CAP = 20


class KemenyCapacityError(RuntimeError):
    pass


@dataclass(frozen=True)
class AggregationConfig:
    k: int
    theta_scc: int
    theta_p: float = 0.01

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.k <= self.theta_scc:
            raise ValueError("need k <= theta_scc")
        if not 0.0 <= self.theta_p <= 1.0:
            raise ValueError("theta_p must lie in [0, 1]")


@dataclass
class ComparisonGraph:
    """Directed weighted graph of net pairwise wins within a group.

    Edge (x, y) with weight w > 0 means w more members prefer x to y than
    the reverse; ties produce no edge, so 2-cycles never occur.
    """

    nodes: Set[int] = field(default_factory=set)
    edges: Dict[Tuple[int, int], int] = field(default_factory=dict)

    def successors(self, x: int) -> List[int]:
        return [y for (a, y) in self.edges if a == x]

    def subgraph(self, keep: Iterable[int]) -> "ComparisonGraph":
        keep = set(keep)
        return ComparisonGraph(
            nodes=keep,
            edges={(x, y): w for (x, y), w in self.edges.items() if x in keep and y in keep},
        )


@dataclass
class SccExtraction:
    components: List[List[int]]  # popped order = topological order of the graph
    c: int
    beta_max: int
    visited_ops: int = 0  # DFS step counter, used to assert linear-time behavior


@dataclass
class TopKList:
    items: List[int]
    method: str  # "kemeny" | "borda"
    short: bool = False  # fewer eligible items than k
    scores: Optional[Dict[int, float]] = None

    def to_json(self) -> str:
        payload = [
            {"item": i, "score": None if self.scores is None else self.scores.get(i)}
            for i in self.items
        ]
        return json.dumps(payload)


def kendall_tau(a: Sequence[int], b: Sequence[int]) -> int:
    """Number of item pairs the two (partial) rankings order oppositely.

    Pairs not ordered by both rankings contribute nothing.
    """
    pos_a = {item: i for i, item in enumerate(a)}
    pos_b = {item: i for i, item in enumerate(b)}
    common = [item for item in a if item in pos_b]
    disagreements = 0
    for i in range(len(common)):
        for j in range(i + 1, len(common)):
            x, y = common[i], common[j]
            da = pos_a[x] - pos_a[y]
            db = pos_b[x] - pos_b[y]
            if da * db < 0:
                disagreements += 1
    return disagreements


def kemeny_cost(candidate: Sequence[int], profiles: Iterable[Sequence[int]]) -> int:
    """Total Kendall tau distance of a candidate ranking to all profiles."""
    return sum(kendall_tau(candidate, p) for p in profiles)


def sum_matrices(matrices: Iterable[PairwiseComparisonMatrix]) -> Counter:
    agg: Counter = Counter()
    for m in matrices:
        agg.update(m.entries)
    return agg


def build_comparison_graph(matrices: Iterable[PairwiseComparisonMatrix]) -> ComparisonGraph:
    """Sum the members' matrices and keep the positive net directions."""
    return comparison_graph_from_aggregate(sum_matrices(matrices))


def comparison_graph_from_aggregate(agg: Mapping[Tuple[int, int], int]) -> ComparisonGraph:
    g = ComparisonGraph()
    seen = set()
    for (x, y), w in agg.items():
        key = (min(x, y), max(x, y))
        if key in seen:
            continue
        seen.add(key)
        net = w - agg.get((y, x), 0)
        if net > 0:
            g.edges[(x, y)] = net
        elif net < 0:
            g.edges[(y, x)] = -net
        else:
            continue
        g.nodes.add(x)
        g.nodes.add(y)
    return g


def popularity(item: int, raters_by_item: Mapping[int, Set[int]], group_size: int) -> float:
    """Fraction of group members who rated the item."""
    if group_size < 1:
        raise ValueError("group must be nonempty")
    return len(raters_by_item.get(item, ())) / group_size


def tarjan_topk(
    g: ComparisonGraph,
    config: AggregationConfig,
    pop: Mapping[int, float],
) -> SccExtraction:
    """Pop strongly connected components until k eligible items are seen.

    Tarjan runs on the transpose graph, so components are emitted in forward
    topological order of the original graph; items below the popularity
    threshold are dropped from each popped component before counting.
    """
    adj_t: Dict[int, List[int]] = {v: [] for v in g.nodes}
    for (x, y) in g.edges:
        adj_t[y].append(x)
    for v in adj_t:
        adj_t[v].sort()

    index: Dict[int, int] = {}
    low: Dict[int, int] = {}
    on_stack: Set[int] = set()
    stack: List[int] = []
    next_index = 0
    components: List[List[int]] = []
    c = 0
    beta_max = 0
    ops = 0
    done = False

    for start in sorted(g.nodes):
        if done:
            break
        if start in index:
            continue
        # iterative DFS: frames of (vertex, iterator position)
        work = [(start, 0)]
        while work:
            v, ptr = work.pop()
            if ptr == 0:
                index[v] = low[v] = next_index
                next_index += 1
                stack.append(v)
                on_stack.add(v)
            recurse = False
            succs = adj_t[v]
            while ptr < len(succs):
                w = succs[ptr]
                ptr += 1
                ops += 1
                if w not in index:
                    work.append((v, ptr))
                    work.append((w, 0))
                    recurse = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if recurse:
                continue
            if low[v] == index[v]:
                comp = []
                while True:
                    u = stack.pop()
                    on_stack.discard(u)
                    if pop.get(u, 0.0) >= config.theta_p:
                        comp.append(u)
                    if u == v:
                        break
                comp.reverse()
                if comp:
                    components.append(comp)
                    c += len(comp)
                    beta_max = max(beta_max, len(comp))
                if c >= config.k:
                    done = True
                    break
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
        # leaving the DFS tree rooted at `start`

    return SccExtraction(components, c, beta_max, ops)


def exact_kemeny(subgraph: ComparisonGraph) -> List[int]:
    """Order one component minimizing the total weight of back-edges.

    Subset DP: f(mask) is the minimal feedback weight of arranging `mask` as
    the tail of the ordering; placing v first among `mask` turns every edge
    from the rest of `mask` into v into a back-edge. Ties resolve to the
    ordering with the smallest item id first.
    """
    nodes = sorted(subgraph.nodes)
    s = len(nodes)
    if s == 0:
        return []
    if s > EXACT_KEMENY_CAP:
        raise KemenyCapacityError(
            f"component of size {s} exceeds the exact solver cap {EXACT_KEMENY_CAP}"
        )
    idx = {v: i for i, v in enumerate(nodes)}
    # in_w[v] = list of (bit of a, weight) for edges a -> v
    in_w: List[List[Tuple[int, int]]] = [[] for _ in range(s)]
    for (a, b), w in subgraph.edges.items():
        in_w[idx[b]].append((1 << idx[a], w))

    full = (1 << s) - 1
    INF = float("inf")
    f = [INF] * (full + 1)
    f[0] = 0
    for mask in range(1, full + 1):
        best = INF
        m = mask
        while m:
            bit = m & -m
            m ^= bit
            v = bit.bit_length() - 1
            rest = mask ^ bit
            cost = f[rest]
            for abit, w in in_w[v]:
                if abit & rest:
                    cost += w
            if cost < best:
                best = cost
        f[mask] = best

    order = []
    mask = full
    while mask:
        m = mask
        while m:
            bit = m & -m
            m ^= bit
            v = bit.bit_length() - 1
            rest = mask ^ bit
            cost = f[rest]
            for abit, w in in_w[v]:
                if abit & rest:
                    cost += w
            if cost == f[mask]:
                order.append(nodes[v])
                mask = rest
                break
    return order


def feedback_cost(order: Sequence[int], graph: ComparisonGraph) -> int:
    """Total weight of edges pointing backwards in the given ordering."""
    pos = {v: i for i, v in enumerate(order)}
    return sum(
        w
        for (x, y), w in graph.edges.items()
        if x in pos and y in pos and pos[x] > pos[y]
    )


def borda_scores_from_aggregate(agg: Mapping[Tuple[int, int], int], n_items: int) -> Dict[int, float]:
    """Per-item win counts from the group aggregate matrix (row sums)."""
    scores = {i: 0.0 for i in range(n_items)}
    for (x, _y), w in agg.items():
        scores[x] += w
    return scores


def borda_scores_from_ratings(rating_sums: Mapping[int, float], n_items: int) -> Dict[int, float]:
    """Borda scores for the non-private path: per-item rating sums."""
    return {i: float(rating_sums.get(i, 0.0)) for i in range(n_items)}


def borda(
    scores: Mapping[int, float],
    pop: Mapping[int, float],
    items: Iterable[int],
) -> List[int]:
    """Score-sum ranking. Ties: higher popularity first, then smaller id."""
    return sorted(items, key=lambda i: (-scores.get(i, 0.0), -pop.get(i, 0.0), i))


def aggregate_topk(
    matrices: Sequence[PairwiseComparisonMatrix],
    config: AggregationConfig,
    pop: Mapping[int, float],
) -> TopKList:
    """Full intra-group aggregation: comparison graph, SCC pass, then exact
    Kemeny within components or the Borda heuristic on oversized ones.

    Items below the popularity threshold never appear in the output.
    """
    if not matrices:
        return TopKList([], "kemeny", short=True)
    n_items = matrices[0].n
    agg = sum_matrices(matrices)
    graph = comparison_graph_from_aggregate(agg)
    extraction = tarjan_topk(graph, config, pop)

    if extraction.beta_max >= config.theta_scc or extraction.beta_max > EXACT_KEMENY_CAP:
        scores = borda_scores_from_aggregate(agg, n_items)
        eligible = [i for i in range(n_items) if pop.get(i, 0.0) >= config.theta_p]
        ranked = borda(scores, pop, eligible)
        items = ranked[: config.k]
        return TopKList(items, "borda", short=len(items) < config.k, scores=scores)

    items: List[int] = []
    for comp in extraction.components:
        if len(comp) == 1:
            items.append(comp[0])
        else:
            items.extend(exact_kemeny(graph.subgraph(comp)))
    items = items[: config.k]
    return TopKList(items, "kemeny", short=len(items) < config.k)
