"""Command-line driver.

Single entry point with subcommands for each pipeline slice. Every run
writes a manifest (config + seeds + version) sufficient to reproduce its
artifacts bit for bit; report paths render matplotlib figures next to the
CSV/JSON output.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import random
import sys
from typing import Dict, List, Optional

from . import __version__
from . import exchange as ex
from . import report as report_mod
from .aggregate import AggregationConfig, aggregate_topk
from .data import (
    DatasetBundle,
    GroupingStrategy,
    group_users,
    kfold_split,
    load_generic,
    load_movielens,
)
from .evaluation import DEFAULT_RECALL_KS, ExperimentConfig, run_experiment
from .model import Catalog, pairwise_from_ranking
from .recgraph import RankConfig, build_graph, rank_scores, recommend


class ConfigError(ValueError):
    pass


DEFAULT_CONFIG = {
    "dataset": {"path": None, "format": "movielens", "p_max": 5},
    "grouping": {"strategy": "by_occupation", "count": None, "seed": 0},
    "exchange": {"t_threshold": 10.0, "seed": 0},
    "aggregation": {"k": 500, "theta_scc": None, "theta_p": 0.01},
    "rank": {"damping": 0.85, "epsilon": 1e-8, "max_iterations": 200, "w_max": 1.0},
    "evaluation": {
        "folds": 5,
        "list_length": 900,
        "recall_ks": list(DEFAULT_RECALL_KS),
        "seed": 0,
        "exchange_mode": "analytic",
        "methods": ["group_private", "personal_baseline"],
    },
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key: {path}{key}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path}{key} must be a section")
            out[key] = _merge(base[key], value, f"{path}{key}.")
        else:
            out[key] = value
    return out


def _validate(cfg: dict) -> None:
    rank = cfg["rank"]
    if not 0.0 < rank["damping"] < 1.0:
        raise ConfigError("rank.damping must lie in (0, 1)")
    if rank["epsilon"] <= 0:
        raise ConfigError("rank.epsilon must be positive")
    if rank["max_iterations"] < 1:
        raise ConfigError("rank.max_iterations must be >= 1")
    agg = cfg["aggregation"]
    if not 0.0 <= agg["theta_p"] <= 1.0:
        raise ConfigError("aggregation.theta_p must lie in [0, 1]")
    if agg["k"] < 1:
        raise ConfigError("aggregation.k must be >= 1")
    if cfg["exchange"]["t_threshold"] < 0:
        raise ConfigError("exchange.t_threshold must be >= 0")
    if cfg["evaluation"]["folds"] < 2:
        raise ConfigError("evaluation.folds must be >= 2")
    if cfg["evaluation"]["exchange_mode"] not in {"analytic", "simulate"}:
        raise ConfigError("evaluation.exchange_mode must be analytic or simulate")


def parse_config(path: Optional[str], overrides: dict) -> dict:
    """Load defaults, then the JSON config file, then flag overrides."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        with open(path) as fh:
            cfg = _merge(cfg, json.load(fh))
    cfg = _merge(cfg, overrides)
    _validate(cfg)
    return cfg


def _collect_overrides(args: argparse.Namespace) -> dict:
    """Map set flags onto config keys; flags win over the config file."""
    mapping = {
        "dataset": ("dataset", "path"),
        "format": ("dataset", "format"),
        "p_max": ("dataset", "p_max"),
        "grouping": ("grouping", "strategy"),
        "group_count": ("grouping", "count"),
        "group_seed": ("grouping", "seed"),
        "t_threshold": ("exchange", "t_threshold"),
        "seed": ("exchange", "seed"),
        "k": ("aggregation", "k"),
        "theta_scc": ("aggregation", "theta_scc"),
        "theta_p": ("aggregation", "theta_p"),
        "damping": ("rank", "damping"),
        "epsilon": ("rank", "epsilon"),
        "max_iterations": ("rank", "max_iterations"),
        "w_max": ("rank", "w_max"),
        "folds": ("evaluation", "folds"),
        "list_length": ("evaluation", "list_length"),
        "eval_seed": ("evaluation", "seed"),
        "exchange_mode": ("evaluation", "exchange_mode"),
        "methods": ("evaluation", "methods"),
    }
    out: dict = {}
    for attr, (section, key) in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            out.setdefault(section, {})[key] = value
    return out


def _write_manifest(out_dir: str, command: str, cfg: dict, extra: Optional[dict] = None) -> None:
    manifest = {
        "tool": "grouprec",
        "version": __version__,
        "command": command,
        "config": cfg,
    }
    if extra:
        manifest.update(extra)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def _load_bundle(cfg: dict) -> DatasetBundle:
    ds = cfg["dataset"]
    if not ds["path"]:
        raise ConfigError("dataset.path is required for this command")
    if ds["format"] == "movielens":
        return load_movielens(ds["path"], p_max=ds["p_max"])
    if ds["format"] == "generic":
        groups_path = ds["path"] + ".groups" if os.path.exists(ds["path"] + ".groups") else None
        tags_path = ds["path"] + ".tags" if os.path.exists(ds["path"] + ".tags") else None
        return load_generic(ds["path"], groups_path, tags_path, {"p_max": ds["p_max"]})
    raise ConfigError(f"unknown dataset format {ds['format']!r}")


def _strategy(cfg: dict) -> GroupingStrategy:
    g = cfg["grouping"]
    return GroupingStrategy(g["strategy"], count=g["count"], seed=g["seed"])


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_simulate_exchange(args, cfg: dict) -> int:
    """Synthetic exchange run: random member rankings, pad, exchange, cleanup."""
    N, n = args.members, args.items
    seed = cfg["exchange"]["seed"]
    rng = random.Random(seed)
    catalog = Catalog(n_items=n, n_users=N)
    from .model import Group

    group = Group(0, frozenset(range(N)))
    matrices = {}
    for u in range(N):
        ranking = list(range(n))
        rng.shuffle(ranking)
        matrices[u], _p = ex.pad_matrix(pairwise_from_ranking(ranking, catalog, owner=u), rng)
    before = {u: sorted(m.entries) for u, m in matrices.items()}

    config = ex.ExchangeConfig(cfg["exchange"]["t_threshold"], seed, group)
    result = ex.simulate_exchange(matrices, config)
    cleaned = {u: ex.cleanup(m) for u, m in result.matrices.items()}

    os.makedirs(args.out, exist_ok=True)
    ex.events_to_csv(result.events, os.path.join(args.out, "events.csv"))
    with open(os.path.join(args.out, "matrices.json"), "w") as fh:
        json.dump(
            {
                "before": {str(u): e for u, e in before.items()},
                "mixed": {str(u): sorted(m.entries) for u, m in result.matrices.items()},
                "cleaned": {str(u): sorted(m.entries) for u, m in cleaned.items()},
            },
            fh,
        )
    _write_manifest(args.out, "simulate-exchange", cfg, {"members": N, "items": n})
    print(f"simulated {len(result.events)} exchange events for N={N}, n={n}")
    return 0


def cmd_anonymity_report(args, cfg: dict) -> int:
    model = ex.transition_model(args.members, args.items)
    step = args.step or max(1, args.t_max // 500)
    reports = ex.anonymity_series(model, args.t_max, step=step, origin=args.origin)
    os.makedirs(args.out, exist_ok=True)
    ex.anonymity_report_json(reports, os.path.join(args.out, "anonymity.json"))
    with open(os.path.join(args.out, "anonymity.csv"), "w") as fh:
        fh.write("t,effective_size\n")
        for r in reports:
            fh.write(f"{r['time']},{r['effective_size']!r}\n")
    report_mod.plot_anonymity_curve(
        reports, args.members, os.path.join(args.out, "anonymity.png")
    )
    _write_manifest(
        args.out, "anonymity-report", cfg,
        {"members": args.members, "items": args.items, "t_max": args.t_max},
    )
    print(f"effective anonymity at t={reports[-1]['time']}: {reports[-1]['effective_size']:.4f}")
    return 0


def _group_topk_lists(bundle, cfg) -> tuple:
    groups = group_users(bundle, _strategy(cfg))
    agg = cfg["aggregation"]
    k = min(agg["k"], bundle.catalog.n_items)
    theta_scc = agg["theta_scc"] if agg["theta_scc"] is not None else max(k, 20)
    config = AggregationConfig(k, theta_scc, agg["theta_p"])

    from .model import pairwise_from_ratings

    by_user: Dict[int, list] = {}
    for rec in bundle.ratings:
        by_user.setdefault(rec.user, []).append(rec)
    lists = {}
    for gid in sorted(groups):
        grp = groups[gid]
        matrices = [
            pairwise_from_ratings(by_user.get(u, []), bundle.catalog, bundle.p_max, owner=u)
            for u in sorted(grp.members)
        ]
        raters: Dict[int, set] = {}
        for u in grp.members:
            for rec in by_user.get(u, []):
                raters.setdefault(rec.item, set()).add(u)
        pop = {item: len(us) / grp.size for item, us in raters.items()}
        lists[gid] = aggregate_topk(matrices, config, pop)
    return groups, lists


def cmd_aggregate(args, cfg: dict) -> int:
    bundle = _load_bundle(cfg)
    groups, lists = _group_topk_lists(bundle, cfg)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "topk.json"), "w") as fh:
        json.dump(
            {
                str(gid): {"method": tk.method, "short": tk.short, "items": tk.items}
                for gid, tk in lists.items()
            },
            fh,
            indent=2,
        )
    _write_manifest(args.out, "aggregate", cfg)
    print(f"aggregated top-k lists for {len(groups)} groups")
    return 0


def _build_rec_graph(bundle, cfg):
    groups, lists = _group_topk_lists(bundle, cfg)
    k = min(cfg["aggregation"]["k"], bundle.catalog.n_items)
    graph = build_graph(
        {gid: tk.items for gid, tk in lists.items()},
        bundle.catalog,
        groups,
        w_max=cfg["rank"]["w_max"],
        k=k,
    )
    return groups, graph


def cmd_build_graph(args, cfg: dict) -> int:
    bundle = _load_bundle(cfg)
    _groups, graph = _build_rec_graph(bundle, cfg)
    os.makedirs(args.out, exist_ok=True)
    graph.to_edge_csv(os.path.join(args.out, "graph_edges.csv"))
    _write_manifest(args.out, "build-graph", cfg)
    print(f"graph with {graph.v} nodes and {len(graph.edges)} edges written")
    return 0


def cmd_recommend(args, cfg: dict) -> int:
    bundle = _load_bundle(cfg)
    groups, graph = _build_rec_graph(bundle, cfg)
    if args.group not in groups:
        raise ConfigError(f"group {args.group} not found; have {sorted(groups)}")
    rank = cfg["rank"]
    rsv = rank_scores(
        graph,
        ("group", args.group),
        RankConfig(rank["damping"], rank["epsilon"], rank["max_iterations"]),
    )
    ranked = recommend(rsv, graph)[: args.top]
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "recommendations.csv"), "w") as fh:
        fh.write("rank,item,raw_item_id,score\n")
        for pos, item in enumerate(ranked, start=1):
            raw = bundle.item_ids[item] if item < len(bundle.item_ids) else item
            fh.write(f"{pos},{item},{raw},{rsv.scores[graph.index[('item', item)]]!r}\n")
    report_mod.plot_score_distribution(
        rsv.scores, os.path.join(args.out, "scores.png"),
        title=f"rank scores, target group {args.group}",
    )
    _write_manifest(args.out, "recommend", cfg, {"group": args.group})
    print(f"wrote {len(ranked)} recommendations for group {args.group}")
    return 0


def cmd_evaluate(args, cfg: dict) -> int:
    bundle = _load_bundle(cfg)
    ev = cfg["evaluation"]
    plan = kfold_split(bundle, ev["folds"], ev["seed"])
    agg = cfg["aggregation"]
    rank = cfg["rank"]
    config = ExperimentConfig(
        agg_k=min(agg["k"], bundle.catalog.n_items),
        theta_scc=agg["theta_scc"],
        theta_p=agg["theta_p"],
        damping=rank["damping"],
        epsilon=rank["epsilon"],
        max_iterations=rank["max_iterations"],
        w_max=rank["w_max"],
        list_length=ev["list_length"],
        recall_ks=tuple(ev["recall_ks"]),
        exchange_mode=ev["exchange_mode"],
        t_threshold=cfg["exchange"]["t_threshold"],
        seed=cfg["exchange"]["seed"],
    )
    os.makedirs(args.out, exist_ok=True)
    reports = []
    for method in ev["methods"]:
        rep = run_experiment(bundle, _strategy(cfg), config, method, plan)
        reports.append(rep)
        rep.to_csv(os.path.join(args.out, f"report_{method}.csv"))
        with open(os.path.join(args.out, f"report_{method}.json"), "w") as fh:
            fh.write(rep.to_json())
        print(f"{method}: mean percentile {rep.mean_percentile:.4f}")
    report_mod.plot_recall_curves(reports, os.path.join(args.out, "recall_curve.png"))
    _write_manifest(args.out, "evaluate", cfg)
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--dataset", help="dataset path")
    parser.add_argument("--format", choices=["movielens", "generic"])
    parser.add_argument("--p-max", dest="p_max", type=int)
    parser.add_argument(
        "--grouping",
        choices=["by_gender", "by_age", "by_occupation", "random", "explicit"],
    )
    parser.add_argument("--group-count", dest="group_count", type=int)
    parser.add_argument("--group-seed", dest="group_seed", type=int)
    parser.add_argument("--t-threshold", dest="t_threshold", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--k", type=int)
    parser.add_argument("--theta-scc", dest="theta_scc", type=int)
    parser.add_argument("--theta-p", dest="theta_p", type=float)
    parser.add_argument("--damping", type=float)
    parser.add_argument("--epsilon", type=float)
    parser.add_argument("--max-iterations", dest="max_iterations", type=int)
    parser.add_argument("--w-max", dest="w_max", type=float)
    parser.add_argument("--folds", type=int)
    parser.add_argument("--list-length", dest="list_length", type=int)
    parser.add_argument("--eval-seed", dest="eval_seed", type=int)
    parser.add_argument("--exchange-mode", dest="exchange_mode", choices=["analytic", "simulate"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grouprec",
        description="Group-based privacy-preserving recommendation pipeline",
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("simulate-exchange", help="run the preference exchange on synthetic data")
    _add_common(p)
    p.add_argument("--members", type=int, default=10)
    p.add_argument("--items", type=int, default=5)
    p.set_defaults(func=cmd_simulate_exchange)

    p = sub.add_parser("anonymity-report", help="closed-form anonymity over time")
    _add_common(p)
    p.add_argument("--members", type=int, required=True)
    p.add_argument("--items", type=int, required=True)
    p.add_argument("--t-max", dest="t_max", type=int, required=True)
    p.add_argument("--step", type=int)
    p.add_argument("--origin", type=int, default=0)
    p.set_defaults(func=cmd_anonymity_report)

    p = sub.add_parser("aggregate", help="aggregate group top-k lists from a dataset")
    _add_common(p)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("build-graph", help="build and export the recommendation graph")
    _add_common(p)
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("recommend", help="rank items for one target group")
    _add_common(p)
    p.add_argument("--group", type=int, required=True)
    p.add_argument("--top", type=int, default=50)
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("evaluate", help="cross-validated percentile/recall experiment")
    _add_common(p)
    p.add_argument("--methods", nargs="+", choices=["group_private", "personal_baseline"])
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return 2
    try:
        cfg = parse_config(args.config, _collect_overrides(args))
        return args.func(args, cfg)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure -> exit 1 with a machine-readable record
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
