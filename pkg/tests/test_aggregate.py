import itertools
import random

import pytest

from grouprec.aggregate import (
    AggregationConfig,
    ComparisonGraph,
    EXACT_KEMENY_CAP,
    KemenyCapacityError,
    aggregate_topk,
    borda,
    borda_scores_from_aggregate,
    borda_scores_from_ratings,
    build_comparison_graph,
    exact_kemeny,
    feedback_cost,
    kemeny_cost,
    kendall_tau,
    popularity,
    sum_matrices,
    tarjan_topk,
)
from grouprec.model import Catalog, pairwise_from_ranking

from conftest import WORKED_PROFILES


def matrices_from_profiles(profiles, n):
    catalog = Catalog(n, len(profiles))
    return [pairwise_from_ranking(p, catalog, owner=i) for i, p in enumerate(profiles)]


def graph_of(edges):
    g = ComparisonGraph()
    for (x, y), w in edges.items():
        g.edges[(x, y)] = w
        g.nodes.update((x, y))
    return g


class TestKendallTau:
    def test_worked_example(self):
        p1, p2, p3 = WORKED_PROFILES
        assert kendall_tau(p1, p2) == 1
        assert kendall_tau(p1, p3) == 2

    def test_identity_is_zero(self):
        assert kendall_tau([3, 1, 2], [3, 1, 2]) == 0

    def test_symmetric(self):
        rng = random.Random(0)
        for _ in range(20):
            a = rng.sample(range(8), 5)
            b = rng.sample(range(8), 6)
            assert kendall_tau(a, b) == kendall_tau(b, a)

    def test_full_reversal_upper_bound(self):
        n = 6
        a = list(range(n))
        assert kendall_tau(a, a[::-1]) == n * (n - 1) // 2

    def test_disjoint_rankings_contribute_nothing(self):
        assert kendall_tau([0, 1], [2, 3]) == 0


class TestKemenyCost:
    def test_worked_example_optimum(self):
        costs = {
            perm: kemeny_cost(list(perm), WORKED_PROFILES)
            for perm in itertools.permutations(range(3))
        }
        assert costs[(0, 1, 2)] == min(costs.values())

    def test_single_profile_zero(self):
        assert kemeny_cost([1, 0, 2], [[1, 0, 2]]) == 0

    def test_two_item_majority(self):
        profiles = [[0, 1], [0, 1], [1, 0]]
        assert kemeny_cost([0, 1], profiles) == 1
        assert kemeny_cost([1, 0], profiles) == 2


class TestComparisonGraph:
    def test_worked_example_edges(self):
        g = build_comparison_graph(matrices_from_profiles(WORKED_PROFILES, 3))
        assert g.edges == {(0, 1): 1, (0, 2): 1, (1, 2): 1}

    def test_perfect_cancellation(self):
        ms = matrices_from_profiles([[0, 1, 2], [2, 1, 0]], 3)
        g = build_comparison_graph(ms)
        assert g.edges == {}

    def test_single_member(self):
        g = build_comparison_graph(matrices_from_profiles([[0, 1]], 2))
        assert g.edges == {(0, 1): 1}

    def test_never_a_two_cycle(self):
        rng = random.Random(1)
        for _ in range(10):
            profiles = [rng.sample(range(6), rng.randint(2, 6)) for _ in range(5)]
            g = build_comparison_graph(matrices_from_profiles(profiles, 6))
            for x, y in g.edges:
                assert (y, x) not in g.edges
                assert g.edges[(x, y)] >= 1


class TestPopularity:
    def test_everyone(self):
        assert popularity(0, {0: {1, 2, 3}}, 3) == 1.0

    def test_nobody(self):
        assert popularity(9, {}, 3) == 0.0

    def test_fraction(self):
        assert popularity(0, {0: {1, 2, 3}}, 12) == 0.25

    def test_empty_group_rejected(self):
        with pytest.raises(ValueError):
            popularity(0, {}, 0)


class TestTarjanTopk:
    def test_dag_pops_in_topological_order(self):
        g = graph_of({(0, 1): 1, (1, 2): 1})
        ext = tarjan_topk(g, AggregationConfig(2, 5, 0.0), {0: 1, 1: 1, 2: 1})
        assert ext.components == [[0], [1]]
        assert ext.c == 2
        assert ext.beta_max == 1

    def test_cycle_is_one_component(self):
        g = graph_of({(0, 1): 1, (1, 2): 1, (2, 0): 1})
        ext = tarjan_topk(g, AggregationConfig(1, 5, 0.0), {0: 1, 1: 1, 2: 1})
        assert len(ext.components) == 1
        assert sorted(ext.components[0]) == [0, 1, 2]
        assert ext.c == 3
        assert ext.beta_max == 3

    def test_popularity_guard_skips_item(self):
        g = graph_of({(0, 1): 1, (1, 2): 1})
        ext = tarjan_topk(g, AggregationConfig(2, 5, 0.5), {0: 0.1, 1: 1.0, 2: 1.0})
        assert ext.components == [[1], [2]]
        assert ext.c == 2

    def test_linear_edge_scans(self):
        rng = random.Random(2)
        nodes = list(range(40))
        edges = {}
        for _ in range(150):
            x, y = rng.sample(nodes, 2)
            if (y, x) not in edges:
                edges[(x, y)] = 1
        g = graph_of(edges)
        ext = tarjan_topk(g, AggregationConfig(40, 40, 0.0), {v: 1.0 for v in nodes})
        assert ext.visited_ops <= len(g.edges)

    def test_empty_graph(self):
        ext = tarjan_topk(ComparisonGraph(), AggregationConfig(2, 5, 0.0), {})
        assert ext.components == []
        assert ext.c == 0


def brute_force_min_cost(graph, nodes):
    best = None
    for perm in itertools.permutations(sorted(nodes)):
        cost = feedback_cost(perm, graph)
        if best is None or cost < best:
            best = cost
    return best


class TestExactKemeny:
    def test_worked_example(self):
        g = build_comparison_graph(matrices_from_profiles(WORKED_PROFILES, 3))
        assert exact_kemeny(g) == [0, 1, 2]

    def test_single_node(self):
        g = ComparisonGraph(nodes={7})
        assert exact_kemeny(g) == [7]

    def test_matches_brute_force(self):
        rng = random.Random(4)
        for _ in range(30):
            s = rng.randint(2, 6)
            edges = {}
            for x, y in itertools.combinations(range(s), 2):
                w = rng.randint(-3, 3)
                if w > 0:
                    edges[(x, y)] = w
                elif w < 0:
                    edges[(y, x)] = -w
            g = graph_of(edges)
            g.nodes.update(range(s))
            order = exact_kemeny(g)
            assert sorted(order) == list(range(s))
            assert feedback_cost(order, g) == brute_force_min_cost(g, range(s))

    def test_tie_breaks_to_smallest_id_first(self):
        g = ComparisonGraph(nodes={3, 1, 2})  # no edges: every order optimal
        assert exact_kemeny(g) == [1, 2, 3]

    def test_capacity_error(self):
        g = ComparisonGraph(nodes=set(range(EXACT_KEMENY_CAP + 1)))
        with pytest.raises(KemenyCapacityError):
            exact_kemeny(g)


class TestBorda:
    def test_rating_sums(self):
        scores = borda_scores_from_ratings({0: 10, 1: 7}, 2)
        assert borda(scores, {}, [0, 1]) == [0, 1]

    def test_all_equal_breaks_by_id(self):
        scores = {i: 1.0 for i in range(4)}
        assert borda(scores, {}, [3, 1, 0, 2]) == [0, 1, 2, 3]

    def test_popularity_breaks_score_ties(self):
        scores = {0: 1.0, 1: 1.0}
        assert borda(scores, {0: 0.2, 1: 0.9}, [0, 1]) == [1, 0]

    def test_aggregate_row_sums_equal_borda_points(self):
        # for full rankings, out-weight sums are exactly Borda points
        profiles = [[2, 0, 1], [0, 2, 1], [2, 1, 0]]
        agg = sum_matrices(matrices_from_profiles(profiles, 3))
        scores = borda_scores_from_aggregate(agg, 3)
        expected = {i: 0 for i in range(3)}
        for p in profiles:
            for rank, item in enumerate(p):
                expected[item] += len(p) - 1 - rank
        assert scores == expected


class TestAggregateTopk:
    def test_worked_example(self):
        ms = matrices_from_profiles(WORKED_PROFILES, 3)
        tk = aggregate_topk(ms, AggregationConfig(3, 3, 0.0), {0: 1, 1: 1, 2: 1})
        assert tk.items == [0, 1, 2]
        assert tk.method == "kemeny"

    def test_unique_source_k1(self):
        ms = matrices_from_profiles([[0, 1, 2], [0, 2, 1]], 3)
        tk = aggregate_topk(ms, AggregationConfig(1, 3, 0.0), {0: 1, 1: 1, 2: 1})
        assert tk.items == [0]

    def test_giant_scc_falls_back_to_borda(self):
        # 4-cycle of pairwise wins with theta_scc=3 forces the heuristic
        profiles = [[0, 1], [1, 2], [2, 3], [3, 0]]
        ms = matrices_from_profiles(profiles, 4)
        pop = {i: 1.0 for i in range(4)}
        cfg = AggregationConfig(2, 3, 0.0)
        tk = aggregate_topk(ms, cfg, pop)
        assert tk.method == "borda"
        agg = sum_matrices(ms)
        expected = borda(borda_scores_from_aggregate(agg, 4), pop, range(4))[:2]
        assert tk.items == expected

    def test_respects_popularity_threshold(self):
        ms = matrices_from_profiles(WORKED_PROFILES, 3)
        tk = aggregate_topk(ms, AggregationConfig(3, 3, 0.5), {0: 1.0, 1: 0.1, 2: 1.0})
        assert 1 not in tk.items
        assert tk.short  # fewer than k eligible items

    def test_deterministic(self):
        ms = matrices_from_profiles(WORKED_PROFILES, 3)
        cfg = AggregationConfig(3, 3, 0.0)
        pop = {0: 1, 1: 1, 2: 1}
        assert aggregate_topk(ms, cfg, pop).items == aggregate_topk(ms, cfg, pop).items

    def test_components_exceeding_solver_cap_use_borda(self):
        # big cycle below theta_scc but above the exact-solver cap
        n = EXACT_KEMENY_CAP + 2
        profiles = [[i, (i + 1) % n] for i in range(n)]
        ms = matrices_from_profiles(profiles, n)
        cfg = AggregationConfig(2, n + 5, 0.0)
        tk = aggregate_topk(ms, cfg, {i: 1.0 for i in range(n)})
        assert tk.method == "borda"


class TestConfig:
    def test_k_le_theta_scc(self):
        with pytest.raises(ValueError):
            AggregationConfig(5, 3, 0.0)

    def test_theta_p_range(self):
        with pytest.raises(ValueError):
            AggregationConfig(1, 5, 1.5)
