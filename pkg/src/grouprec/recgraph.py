"""Heterogeneous recommendation graph and random-walk rank scores.

Nodes are groups, items and tags (or users, items and profile attributes for
the non-private baseline graph). The rank score of every node with respect
to a target is the stationary vector of a damped random walk teleporting
back to the target, computed by power iteration.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np
import scipy.sparse as sp

from .model import Catalog, Group, RatingRecord

Node = Tuple[str, int]  # (kind, id); kinds: "group", "item", "tag", "user", "attr"


class RecommendationGraph:
    """Immutable-after-build weighted directed graph over typed nodes."""

    def __init__(self):
        self.nodes: List[Node] = []
        self.index: Dict[Node, int] = {}
        self.edges: Dict[Tuple[int, int], float] = {}
        self.labels: Dict[int, str] = {}  # optional display label per node index

    def add_node(self, node: Node, label: Optional[str] = None) -> int:
        if node in self.index:
            return self.index[node]
        idx = len(self.nodes)
        self.nodes.append(node)
        self.index[node] = idx
        if label is not None:
            self.labels[idx] = label
        return idx

    def add_edge(self, src: Node, dst: Node, weight: float) -> None:
        if weight <= 0:
            raise ValueError(f"edge weight must be positive, got {weight}")
        if src == dst:
            raise ValueError("self-loops are not allowed")
        self.edges[(self.index[src], self.index[dst])] = weight

    def add_symmetric(self, a: Node, b: Node, weight: float) -> None:
        self.add_edge(a, b, weight)
        self.add_edge(b, a, weight)

    @property
    def v(self) -> int:
        return len(self.nodes)

    def nodes_of_kind(self, kind: str) -> List[int]:
        return [i for i, (k, _) in enumerate(self.nodes) if k == kind]

    def to_edge_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["src_type", "src_id", "dst_type", "dst_id", "weight"])
            for (i, j), w in sorted(self.edges.items()):
                sk, sid = self.nodes[i]
                dk, did = self.nodes[j]
                writer.writerow([sk, sid, dk, did, repr(w)])


@dataclass(frozen=True)
class RankConfig:
    damping: float = 0.85
    epsilon: float = 1e-8
    max_iterations: int = 200

    def __post_init__(self):
        if not 0.0 < self.damping < 1.0:
            raise ValueError("damping must lie strictly inside (0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass
class RankScoreVector:
    target: Node
    scores: np.ndarray
    converged: bool
    iterations: int


@dataclass(frozen=True)
class Prediction:
    group: int
    item: int
    value: float
    method: str  # user_based | item_based | group_average | global_mean


def topk_weight(rank: int, k: int, w_max: float) -> float:
    """Edge weight for an item at 1-based position `rank` in a top-k list."""
    return (k + 1 - rank) / k * w_max


def build_graph(
    topk_lists: Mapping[int, Sequence[int]],
    catalog: Catalog,
    groups: Mapping[int, Group],
    w_max: float = 1.0,
    k: Optional[int] = None,
) -> RecommendationGraph:
    """Assemble the group/item/tag recommendation graph.

    Group-item edges carry the linearly decaying top-k weight; item-tag and
    associate-group edges carry weight 1. All items and tags in the catalog
    become nodes so tag paths can reach items no group has listed.
    """
    g = RecommendationGraph()
    for gid in sorted(groups):
        g.add_node(("group", gid))
    for item in range(catalog.n_items):
        g.add_node(("item", item))
    for tag in range(catalog.n_tags):
        g.add_node(("tag", tag))

    if k is None:
        k = max((len(lst) for lst in topk_lists.values()), default=0)
    any_cf_edges = False
    for gid in sorted(topk_lists):
        for rank, item in enumerate(topk_lists[gid], start=1):
            w = topk_weight(rank, k, w_max)
            if w > 0:
                g.add_symmetric(("group", gid), ("item", item), w)
                any_cf_edges = True
    for item in range(catalog.n_items):
        for tag in sorted(catalog.item_tags(item)):
            g.add_symmetric(("item", item), ("tag", tag), 1.0)
    for gid, group in groups.items():
        for other in group.associates:
            if other in groups:
                g.add_edge(("group", gid), ("group", other), 1.0)
    if not any_cf_edges:
        import warnings

        warnings.warn("recommendation graph has no group-item edges", stacklevel=2)
    return g


def transition_operator(g: RecommendationGraph) -> Tuple[sp.csr_matrix, np.ndarray]:
    """Column-stochastic walk operator W (W[j, i] = P(i -> j)) plus a mask of
    dangling nodes (no out-edges); their mass is redirected to the teleport
    vector during iteration."""
    v = g.v
    out = np.zeros(v)
    for (i, _j), w in g.edges.items():
        out[i] += w
    rows, cols, vals = [], [], []
    for (i, j), w in g.edges.items():
        rows.append(j)
        cols.append(i)
        vals.append(w / out[i])
    W = sp.csr_matrix((vals, (rows, cols)), shape=(v, v))
    dangling = out == 0
    return W, dangling


def _iterate(
    W: sp.csr_matrix,
    dangling: np.ndarray,
    theta: np.ndarray,
    config: RankConfig,
) -> Tuple[np.ndarray, bool, int]:
    v = theta.shape[0]
    s = np.full_like(theta, 1.0 / v)
    beta = config.damping
    for it in range(1, config.max_iterations + 1):
        lost = s[dangling].sum(axis=0)
        s_new = beta * (W @ s + lost * theta) + (1 - beta) * theta
        delta = np.abs(s_new - s).sum(axis=0)
        s = s_new
        if np.max(delta) < config.epsilon:
            return s, True, it
    return s, False, config.max_iterations


def rank_scores(
    g: RecommendationGraph, target: Node, config: RankConfig = RankConfig()
) -> RankScoreVector:
    """Personalized rank scores for one target node."""
    if target not in g.index:
        raise KeyError(f"target node {target} not in graph")
    W, dangling = transition_operator(g)
    theta = np.zeros(g.v)
    theta[g.index[target]] = 1.0
    s, converged, iters = _iterate(W, dangling, theta, config)
    return RankScoreVector(target, s, converged, iters)


def rank_scores_batch(
    g: RecommendationGraph, targets: Sequence[Node], config: RankConfig = RankConfig()
) -> Dict[Node, RankScoreVector]:
    """Rank scores for many targets at once (one shared power iteration)."""
    W, dangling = transition_operator(g)
    theta = np.zeros((g.v, len(targets)))
    for col, t in enumerate(targets):
        theta[g.index[t], col] = 1.0
    S, converged, iters = _iterate(W, dangling, theta, config)
    return {
        t: RankScoreVector(t, S[:, col], converged, iters)
        for col, t in enumerate(targets)
    }


def recommend(
    rsv: RankScoreVector,
    g: RecommendationGraph,
    exclude: Set[int] = frozenset(),
) -> List[int]:
    """Item nodes sorted by descending rank score; ties by ascending id."""
    scored = [
        (-rsv.scores[idx], item)
        for idx, (kind, item) in enumerate(g.nodes)
        if kind == "item" and item not in exclude
    ]
    scored.sort()
    return [item for _neg, item in scored]


def personalize(ranked: Sequence[int], rated: Set[int]) -> List[int]:
    """Drop every item the user has already rated, preserving order."""
    return [i for i in ranked if i not in rated]


# ---------------------------------------------------------------------------
# Rating statistics and predictions
# ---------------------------------------------------------------------------


class GroupRatingStats:
    """Per-group rating means and item popularity, built from raw ratings.

    Used by the prediction operators and the evaluation harness; the privacy
    pipeline itself never sees these per-user numbers.
    """

    def __init__(self, ratings: Iterable[RatingRecord], groups: Mapping[int, Group]):
        member_group = {}
        for gid, grp in groups.items():
            for u in grp.members:
                member_group[u] = gid
        sums: Dict[int, float] = {}
        counts: Dict[int, int] = {}
        item_sums: Dict[Tuple[int, int], float] = {}
        item_counts: Dict[Tuple[int, int], int] = {}
        raters: Dict[Tuple[int, int], Set[int]] = {}
        total, n_total = 0.0, 0
        for rec in ratings:
            gid = member_group.get(rec.user)
            if gid is None:
                continue
            sums[gid] = sums.get(gid, 0.0) + rec.rating
            counts[gid] = counts.get(gid, 0) + 1
            key = (gid, rec.item)
            item_sums[key] = item_sums.get(key, 0.0) + rec.rating
            item_counts[key] = item_counts.get(key, 0) + 1
            raters.setdefault(key, set()).add(rec.user)
            total += rec.rating
            n_total += 1
        self._groups = groups
        self._sums = sums
        self._counts = counts
        self._item_sums = item_sums
        self._item_counts = item_counts
        self._raters = raters
        self.global_mean = total / n_total if n_total else 0.0

    def group_mean(self, gid: int) -> float:
        c = self._counts.get(gid, 0)
        return self._sums.get(gid, 0.0) / c if c else self.global_mean

    def group_item_mean(self, gid: int, item: int) -> Optional[float]:
        c = self._item_counts.get((gid, item), 0)
        if c == 0:
            return None
        return self._item_sums[(gid, item)] / c

    def popularity(self, gid: int, item: int) -> float:
        n = self._groups[gid].size
        return len(self._raters.get((gid, item), ())) / n

    def popularity_map(self, gid: int) -> Dict[int, float]:
        n = self._groups[gid].size
        return {
            item: len(users) / n
            for (g, item), users in self._raters.items()
            if g == gid
        }


def _clamp(value: float, p_max: int) -> float:
    return min(float(p_max), max(1.0, value))


def predict_user_based(
    target: int,
    item: int,
    group_scores: Mapping[int, float],
    stats: GroupRatingStats,
    theta_p: float,
    p_max: int = 5,
) -> Prediction:
    """Predict the target group's rating via score-weighted group deviations.

    When the item already meets the popularity threshold inside the target
    group, the group members' average rating is returned directly.
    """
    if stats.popularity(target, item) >= theta_p:
        mean = stats.group_item_mean(target, item)
        return Prediction(target, item, _clamp(mean, p_max), "group_average")
    neighbors = [
        gid
        for gid in group_scores
        if gid != target and stats.popularity(gid, item) >= theta_p
    ]
    total = sum(group_scores[gid] for gid in neighbors)
    if not neighbors or total <= 0:
        return predict_item_based(target, item, {}, stats, theta_p, p_max)
    baseline = stats.group_mean(target)
    dev = sum(
        group_scores[gid] * (stats.group_item_mean(gid, item) - stats.group_mean(gid))
        for gid in neighbors
    )
    return Prediction(target, item, _clamp(dev / total + baseline, p_max), "user_based")


def predict_item_based(
    target: int,
    item: int,
    item_scores: Mapping[int, float],
    stats: GroupRatingStats,
    theta_p: float,
    p_max: int = 5,
) -> Prediction:
    """Predict via score-weighted average of the target group's own ratings
    on other (sufficiently popular) items."""
    rated = [
        j
        for j in item_scores
        if j != item and stats.popularity(target, j) >= theta_p
    ]
    total = sum(item_scores[j] for j in rated)
    if not rated or total <= 0:
        return Prediction(target, item, _clamp(stats.global_mean, p_max), "global_mean")
    value = sum(item_scores[j] * stats.group_item_mean(target, j) for j in rated) / total
    return Prediction(target, item, _clamp(value, p_max), "item_based")


# ---------------------------------------------------------------------------
# Non-private baseline graph
# ---------------------------------------------------------------------------


def build_personal_graph(
    ratings: Sequence[RatingRecord],
    catalog: Catalog,
    profiles: Optional[Mapping[int, Mapping[str, object]]] = None,
) -> RecommendationGraph:
    """Individual-rating baseline graph: users, items and profile attributes.

    User-item edges weight exp((r - mean)/l2_norm_of_deviations); users whose
    ratings never deviate from their mean get weight 1 on every edge.
    """
    if not ratings:
        raise ValueError("personal graph needs at least one rating")
    g = RecommendationGraph()
    by_user: Dict[int, List[RatingRecord]] = {}
    for rec in ratings:
        by_user.setdefault(rec.user, []).append(rec)
    for user in sorted(by_user):
        g.add_node(("user", user))
    for item in range(catalog.n_items):
        g.add_node(("item", item))

    for user in sorted(by_user):
        recs = by_user[user]
        mean = sum(r.rating for r in recs) / len(recs)
        norm = math.sqrt(sum((r.rating - mean) ** 2 for r in recs))
        for rec in recs:
            if norm == 0:
                w = 1.0
            else:
                w = math.exp((rec.rating - mean) / norm)
            g.add_symmetric(("user", user), ("item", rec.item), w)

    if profiles:
        attr_ids: Dict[Tuple[str, object], int] = {}
        for user in sorted(by_user):
            prof = profiles.get(user)
            if not prof:
                continue
            for attr_name in sorted(prof):
                key = (attr_name, prof[attr_name])
                if key not in attr_ids:
                    attr_ids[key] = len(attr_ids)
                    g.add_node(("attr", attr_ids[key]), label=f"{attr_name}={prof[attr_name]}")
                g.add_symmetric(("user", user), ("attr", attr_ids[key]), 1.0)
    return g
