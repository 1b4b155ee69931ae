"""Metrics and cross-validation orchestration over the full pipeline.

Two methods are compared: the privacy-preserving group pipeline (pairwise
matrices -> exchange -> aggregation -> group graph -> random walk) and the
non-private personal baseline (individual ratings graph -> random walk).
"""

from __future__ import annotations

import csv
import json
import random
import time
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple

from . import exchange as ex_mod
from .aggregate import AggregationConfig, aggregate_topk
from .data import DatasetBundle, GroupingStrategy, SplitPlan, group_users
from .model import Group, PairwiseComparisonMatrix, RatingRecord, pairwise_from_ratings
from .recgraph import (
    RankConfig,
    build_graph,
    build_personal_graph,
    personalize,
    rank_scores_batch,
    recommend,
)

DEFAULT_RECALL_KS = tuple(range(5, 55, 5))


def percentile_score(
    ranked: Sequence[int], test_items: Set[int], length: Optional[int] = None
) -> float:
    """Mean relative position of the test items in the ranked list.

    Items missing from the list are scored at the worst in-list position
    (1.0). Positions are 1-based and divided by the list length.
    """
    if not ranked:
        raise ValueError("ranked list must be nonempty")
    if not test_items:
        raise ValueError("test set must be nonempty")
    L = length if length is not None else len(ranked)
    pos = {item: i + 1 for i, item in enumerate(ranked)}
    return sum(pos.get(item, L) / L for item in test_items) / len(test_items)


def recall_at_k(ranked: Sequence[int], test_items: Set[int], k: int) -> float:
    """Fraction of test items appearing among the first k list entries."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not test_items:
        raise ValueError("test set must be nonempty")
    top = set(ranked[:k])
    return sum(1 for item in test_items if item in top) / len(test_items)


@dataclass(frozen=True)
class ExperimentConfig:
    agg_k: int = 500  # top-list length fed into the recommendation graph
    theta_scc: Optional[int] = None  # default: max(agg_k, 20)
    theta_p: float = 0.01
    damping: float = 0.85
    epsilon: float = 1e-8
    max_iterations: int = 200
    w_max: float = 1.0
    list_length: int = 900
    recall_ks: Tuple[int, ...] = DEFAULT_RECALL_KS
    # "analytic" uses the exact sum-invariance of the exchange protocol and
    # skips event simulation; "simulate" runs pad -> exchange -> cleanup
    # literally (small catalogs only).
    exchange_mode: str = "analytic"
    t_threshold: float = 10.0
    seed: int = 0

    def rank_config(self) -> RankConfig:
        return RankConfig(self.damping, self.epsilon, self.max_iterations)

    def aggregation_config(self) -> AggregationConfig:
        theta_scc = self.theta_scc if self.theta_scc is not None else max(self.agg_k, 20)
        return AggregationConfig(self.agg_k, theta_scc, self.theta_p)


@dataclass
class EvalReport:
    method: str
    fold_percentiles: List[float]
    mean_percentile: float
    recall: Dict[int, float]
    fold_recall: List[Dict[int, float]]
    list_length: int
    runtime_seconds: float
    users_evaluated: int
    users_skipped: int  # users with no relevant test items
    misses: int  # test items absent from the scored lists

    def to_json(self) -> str:
        payload = dict(self.__dict__)
        payload["recall"] = {str(k): v for k, v in self.recall.items()}
        payload["fold_recall"] = [
            {str(k): v for k, v in fr.items()} for fr in self.fold_recall
        ]
        return json.dumps(payload, indent=2)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["method", "fold", "metric", "k", "value"])
            for fold, p in enumerate(self.fold_percentiles):
                writer.writerow([self.method, fold, "percentile", "", repr(p)])
            writer.writerow([self.method, "mean", "percentile", "", repr(self.mean_percentile)])
            for fold, fr in enumerate(self.fold_recall):
                for k in sorted(fr):
                    writer.writerow([self.method, fold, "recall", k, repr(fr[k])])
            for k in sorted(self.recall):
                writer.writerow([self.method, "mean", "recall", k, repr(self.recall[k])])


def _train_ratings(bundle: DatasetBundle, plan: SplitPlan, fold: int) -> List[RatingRecord]:
    return [bundle.ratings[i] for i in plan.train_indices(fold)]


def _test_items_by_user(bundle: DatasetBundle, plan: SplitPlan, fold: int) -> Dict[int, Set[int]]:
    out: Dict[int, Set[int]] = {}
    for i in plan.test_sets[fold]:
        rec = bundle.ratings[i]
        out.setdefault(rec.user, set()).add(rec.item)
    return out


def _group_matrices(
    members: Sequence[int],
    ratings_by_user: Mapping[int, List[RatingRecord]],
    bundle: DatasetBundle,
) -> List[PairwiseComparisonMatrix]:
    return [
        pairwise_from_ratings(ratings_by_user.get(u, []), bundle.catalog, bundle.p_max, owner=u)
        for u in members
    ]


def _mixed_matrices(
    matrices: List[PairwiseComparisonMatrix],
    group: Group,
    t_threshold: float,
    seed: int,
) -> List[PairwiseComparisonMatrix]:
    """Literal pad -> exchange -> cleanup pipeline for one group."""
    rng = random.Random(seed)
    padded = {m.owner: ex_mod.pad_matrix(m, rng)[0] for m in matrices}
    if group.size < 2:
        return [ex_mod.cleanup(m) for m in padded.values()]
    cfg = ex_mod.ExchangeConfig(t_threshold, seed, group)
    result = ex_mod.simulate_exchange(padded, cfg)
    return [ex_mod.cleanup(result.matrices[u]) for u in sorted(result.matrices)]


def _fold_group_lists(
    bundle: DatasetBundle,
    groups: Mapping[int, Group],
    train: Sequence[RatingRecord],
    config: ExperimentConfig,
    fold_seed: int,
) -> Dict[int, List[int]]:
    """Aggregated top-k list per group for one training fold."""
    ratings_by_user: Dict[int, List[RatingRecord]] = {}
    raters_by_item: Dict[int, Dict[int, Set[int]]] = {gid: {} for gid in groups}
    member_group = {u: gid for gid, grp in groups.items() for u in grp.members}
    for rec in train:
        ratings_by_user.setdefault(rec.user, []).append(rec)
        gid = member_group.get(rec.user)
        if gid is not None:
            raters_by_item[gid].setdefault(rec.item, set()).add(rec.user)

    agg_config = config.aggregation_config()
    lists: Dict[int, List[int]] = {}
    for gid in sorted(groups):
        grp = groups[gid]
        members = sorted(grp.members)
        matrices = _group_matrices(members, ratings_by_user, bundle)
        if config.exchange_mode == "simulate":
            matrices = _mixed_matrices(matrices, grp, config.t_threshold, fold_seed + gid)
        pop = {
            item: len(users) / grp.size
            for item, users in raters_by_item[gid].items()
        }
        lists[gid] = aggregate_topk(matrices, agg_config, pop).items
    return lists


def run_experiment(
    bundle: DatasetBundle,
    strategy: GroupingStrategy,
    config: ExperimentConfig,
    method: str,
    plan: SplitPlan,
) -> EvalReport:
    """Cross-validated percentile and recall for one method.

    method is "group_private" or "personal_baseline". Scores are averaged
    over all (user, test item) pairs; users with no top-rated test records
    in a fold are skipped and counted.
    """
    if method not in {"group_private", "personal_baseline"}:
        raise ValueError(f"unknown method {method!r}")
    started = time.monotonic()
    rank_cfg = config.rank_config()
    L = config.list_length

    fold_percentiles: List[float] = []
    fold_recall: List[Dict[int, float]] = []
    users_evaluated = 0
    users_skipped = 0
    misses = 0

    for fold in range(plan.fold_count):
        train = _train_ratings(bundle, plan, fold)
        test_by_user = _test_items_by_user(bundle, plan, fold)
        rated_by_user: Dict[int, Set[int]] = {}
        for rec in train:
            rated_by_user.setdefault(rec.user, set()).add(rec.item)

        user_lists: Dict[int, List[int]] = {}
        if method == "group_private":
            groups = group_users(bundle, strategy)
            member_group = {u: gid for gid, grp in groups.items() for u in grp.members}
            topk = _fold_group_lists(bundle, groups, train, config, config.seed * 1000 + fold)
            graph = build_graph(topk, bundle.catalog, groups, config.w_max, k=config.agg_k)
            targets = [("group", gid) for gid in sorted(groups)]
            scores = rank_scores_batch(graph, targets, rank_cfg)
            group_lists = {
                gid: recommend(scores[("group", gid)], graph) for gid in sorted(groups)
            }
            for user in sorted(test_by_user):
                gid = member_group.get(user)
                if gid is None:
                    continue
                user_lists[user] = personalize(
                    group_lists[gid], rated_by_user.get(user, set())
                )[:L]
        else:
            graph = build_personal_graph(train, bundle.catalog, bundle.profiles)
            present = {u for u in test_by_user if ("user", u) in graph.index}
            targets = [("user", u) for u in sorted(present)]
            scores = rank_scores_batch(graph, targets, rank_cfg)
            for user in sorted(present):
                ranked = recommend(scores[("user", user)], graph)
                user_lists[user] = personalize(ranked, rated_by_user.get(user, set()))[:L]

        pct_sum, pct_n = 0.0, 0
        hits = {k: 0 for k in config.recall_ks}
        T = 0
        for user, test_items in sorted(test_by_user.items()):
            ranked = user_lists.get(user)
            if not ranked:
                users_skipped += 1
                continue
            users_evaluated += 1
            pos = {item: i + 1 for i, item in enumerate(ranked)}
            for item in test_items:
                p = pos.get(item)
                if p is None:
                    misses += 1
                    p = L
                pct_sum += p / L
                pct_n += 1
                T += 1
                for k in config.recall_ks:
                    if p <= k:
                        hits[k] += 1
        fold_percentiles.append(pct_sum / pct_n if pct_n else float("nan"))
        fold_recall.append({k: (hits[k] / T if T else float("nan")) for k in config.recall_ks})

    mean_pct = sum(fold_percentiles) / len(fold_percentiles)
    mean_recall = {
        k: sum(fr[k] for fr in fold_recall) / len(fold_recall) for k in config.recall_ks
    }
    return EvalReport(
        method=method,
        fold_percentiles=fold_percentiles,
        mean_percentile=mean_pct,
        recall=mean_recall,
        fold_recall=fold_recall,
        list_length=L,
        runtime_seconds=time.monotonic() - started,
        users_evaluated=users_evaluated,
        users_skipped=users_skipped,
        misses=misses,
    )
