"""Dataset ingestion, grouping strategies and cross-validation splits.

Raw dataset identifiers are remapped to dense integer indices at load time;
the bundle keeps both directions of the mapping.
"""

from __future__ import annotations

import csv
import os
import random
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Set, Tuple

from .model import Catalog, DataIntegrityError, Group, RatingRecord

AGE_BUCKETS = ["below 21", "21 to 30", "31 to 40", "41 to 50", "above 50"]


class IngestionError(ValueError):
    pass


class StrategyError(ValueError):
    pass


class SplitError(ValueError):
    pass


@dataclass
class DatasetBundle:
    catalog: Catalog
    ratings: List[RatingRecord]
    p_max: int = 5
    # dense index -> raw dataset id
    user_ids: List[object] = field(default_factory=list)
    item_ids: List[object] = field(default_factory=list)
    tag_names: List[str] = field(default_factory=list)
    # dense user index -> {"gender":…, "age":…, "occupation":…}
    profiles: Optional[Dict[int, Dict[str, object]]] = None
    # dense user index -> explicit group label
    explicit_groups: Optional[Dict[int, object]] = None

    def user_index(self) -> Dict[object, int]:
        return {raw: i for i, raw in enumerate(self.user_ids)}

    def item_index(self) -> Dict[object, int]:
        return {raw: i for i, raw in enumerate(self.item_ids)}


@dataclass(frozen=True)
class GroupingStrategy:
    kind: str  # by_gender | by_age | by_occupation | random | explicit
    count: Optional[int] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.kind not in {"by_gender", "by_age", "by_occupation", "random", "explicit"}:
            raise StrategyError(f"unknown grouping strategy {self.kind!r}")
        if self.kind == "random" and (self.count is None or self.count < 1):
            raise StrategyError("random grouping needs a positive group count")


@dataclass
class SplitPlan:
    fold_count: int
    seed: int
    folds: List[List[int]]  # rating indices per fold
    test_sets: List[List[int]]  # per fold: indices with rating == p_max

    def train_indices(self, fold: int) -> List[int]:
        out: List[int] = []
        for f, idxs in enumerate(self.folds):
            if f != fold:
                out.extend(idxs)
        return out


def age_bucket(age: int) -> str:
    if age < 21:
        return AGE_BUCKETS[0]
    if age <= 30:
        return AGE_BUCKETS[1]
    if age <= 40:
        return AGE_BUCKETS[2]
    if age <= 50:
        return AGE_BUCKETS[3]
    return AGE_BUCKETS[4]


def _require_file(directory: str, name: str) -> str:
    path = os.path.join(directory, name)
    if not os.path.exists(path):
        raise IngestionError(f"missing dataset file: {path}")
    return path


def load_movielens(directory: str, p_max: int = 5) -> DatasetBundle:
    """Load an ML-100K style directory (u.data / u.item / u.user)."""
    data_path = _require_file(directory, "u.data")
    item_path = _require_file(directory, "u.item")
    user_path = _require_file(directory, "u.user")

    item_map: Dict[object, int] = {}
    item_ids: List[object] = []
    tags: Dict[int, frozenset] = {}
    n_tags = 0
    with open(item_path, encoding="latin-1") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("|")
            try:
                raw = int(fields[0])
                genre_flags = [int(f) for f in fields[5:]]
            except (ValueError, IndexError) as exc:
                raise IngestionError(f"{item_path}:{lineno}: malformed item line") from exc
            n_tags = max(n_tags, len(genre_flags))
            idx = len(item_ids)
            item_map[raw] = idx
            item_ids.append(raw)
            tags[idx] = frozenset(t for t, flag in enumerate(genre_flags) if flag)

    user_map: Dict[object, int] = {}
    user_ids: List[object] = []
    profiles: Dict[int, Dict[str, object]] = {}
    with open(user_path, encoding="latin-1") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("|")
            try:
                raw = int(fields[0])
                age = int(fields[1])
                gender = fields[2]
                occupation = fields[3]
            except (ValueError, IndexError) as exc:
                raise IngestionError(f"{user_path}:{lineno}: malformed user line") from exc
            idx = len(user_ids)
            user_map[raw] = idx
            user_ids.append(raw)
            profiles[idx] = {"gender": gender, "age": age, "occupation": occupation}

    ratings: List[RatingRecord] = []
    seen: Set[Tuple[int, int]] = set()
    with open(data_path, encoding="latin-1") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split("\t")
            try:
                u, i, r, ts = int(fields[0]), int(fields[1]), int(fields[2]), int(fields[3])
            except (ValueError, IndexError) as exc:
                raise IngestionError(f"{data_path}:{lineno}: malformed rating line") from exc
            if u not in user_map or i not in item_map:
                raise IngestionError(f"{data_path}:{lineno}: unknown user or item")
            if not 1 <= r <= p_max:
                raise IngestionError(f"{data_path}:{lineno}: rating {r} outside 1..{p_max}")
            key = (user_map[u], item_map[i])
            if key in seen:
                raise DataIntegrityError(f"{data_path}:{lineno}: duplicate (user, item) rating")
            seen.add(key)
            ratings.append(RatingRecord(user_map[u], item_map[i], r, ts))

    catalog = Catalog(len(item_ids), len(user_ids), n_tags, tags)
    return DatasetBundle(
        catalog,
        ratings,
        p_max=p_max,
        user_ids=user_ids,
        item_ids=item_ids,
        tag_names=[f"genre_{t}" for t in range(n_tags)],
        profiles=profiles,
    )


DEFAULT_SCHEMA = {
    "delimiter": ",",
    "user_col": 0,
    "item_col": 1,
    "rating_col": 2,
    "timestamp_col": None,
    "has_header": False,
    "p_max": 5,
}


def load_generic(
    ratings_path: str,
    groups_path: Optional[str] = None,
    tags_path: Optional[str] = None,
    schema: Optional[Mapping[str, object]] = None,
) -> DatasetBundle:
    """Load a delimited ratings file plus optional group labels and tags.

    The schema config gives the delimiter and column positions; unknown
    schema keys are rejected.
    """
    cfg = dict(DEFAULT_SCHEMA)
    if schema:
        unknown = set(schema) - set(DEFAULT_SCHEMA)
        if unknown:
            raise IngestionError(f"unknown schema keys: {sorted(unknown)}")
        cfg.update(schema)
    p_max = int(cfg["p_max"])

    user_map: Dict[object, int] = {}
    item_map: Dict[object, int] = {}
    user_ids: List[object] = []
    item_ids: List[object] = []
    ratings: List[RatingRecord] = []
    seen: Set[Tuple[int, int]] = set()

    def intern(raw, mapping, ids):
        if raw not in mapping:
            mapping[raw] = len(ids)
            ids.append(raw)
        return mapping[raw]

    with open(ratings_path, newline="") as fh:
        reader = csv.reader(fh, delimiter=str(cfg["delimiter"]))
        for lineno, row in enumerate(reader, start=1):
            if not row or (lineno == 1 and cfg["has_header"]):
                continue
            try:
                raw_u = row[int(cfg["user_col"])]
                raw_i = row[int(cfg["item_col"])]
                r = int(row[int(cfg["rating_col"])])
                ts_col = cfg["timestamp_col"]
                ts = int(row[int(ts_col)]) if ts_col is not None else None
            except (ValueError, IndexError) as exc:
                raise IngestionError(f"{ratings_path}:{lineno}: malformed rating line") from exc
            if not 1 <= r <= p_max:
                raise IngestionError(f"{ratings_path}:{lineno}: rating {r} outside 1..{p_max}")
            u = intern(raw_u, user_map, user_ids)
            i = intern(raw_i, item_map, item_ids)
            if (u, i) in seen:
                raise DataIntegrityError(f"{ratings_path}:{lineno}: duplicate (user, item) rating")
            seen.add((u, i))
            ratings.append(RatingRecord(u, i, r, ts))

    explicit = None
    if groups_path is not None:
        explicit = {}
        with open(groups_path, newline="") as fh:
            reader = csv.reader(fh)
            for lineno, row in enumerate(reader, start=1):
                if not row:
                    continue
                raw_u, label = row[0], row[1]
                if raw_u not in user_map:
                    raise IngestionError(f"{groups_path}:{lineno}: unknown user {raw_u}")
                explicit[user_map[raw_u]] = label

    tags: Dict[int, frozenset] = {}
    tag_names: List[str] = []
    if tags_path is not None:
        tag_map: Dict[str, int] = {}
        assign: Dict[int, Set[int]] = {}
        with open(tags_path, newline="") as fh:
            reader = csv.reader(fh)
            for lineno, row in enumerate(reader, start=1):
                if not row:
                    continue
                raw_i, tag = row[0], row[1]
                if raw_i not in item_map:
                    raise IngestionError(f"{tags_path}:{lineno}: unknown item {raw_i}")
                if tag not in tag_map:
                    tag_map[tag] = len(tag_names)
                    tag_names.append(tag)
                assign.setdefault(item_map[raw_i], set()).add(tag_map[tag])
        tags = {i: frozenset(ts) for i, ts in assign.items()}

    catalog = Catalog(len(item_ids), len(user_ids), len(tag_names), tags)
    return DatasetBundle(
        catalog,
        ratings,
        p_max=p_max,
        user_ids=user_ids,
        item_ids=item_ids,
        tag_names=tag_names,
        profiles=None,
        explicit_groups=explicit,
    )


def group_users(
    bundle: DatasetBundle,
    strategy: GroupingStrategy,
    associates: Optional[Mapping[object, Set[object]]] = None,
) -> Dict[int, Group]:
    """Partition all users into groups per the chosen strategy.

    Users missing the required profile attribute land in a dedicated
    "unknown" group so the result stays a partition.
    """
    users = range(bundle.catalog.n_users)
    labels: Dict[int, object] = {}

    if strategy.kind in {"by_gender", "by_age", "by_occupation"}:
        if bundle.profiles is None:
            raise StrategyError(f"{strategy.kind} requires user profiles")
        attr = {"by_gender": "gender", "by_age": "age", "by_occupation": "occupation"}[
            strategy.kind
        ]
        for u in users:
            value = bundle.profiles.get(u, {}).get(attr)
            if value is None:
                labels[u] = "unknown"
            elif strategy.kind == "by_age":
                labels[u] = age_bucket(int(value))
            else:
                labels[u] = value
    elif strategy.kind == "random":
        rng = random.Random(strategy.seed)
        for u in users:
            labels[u] = rng.randrange(strategy.count)
    elif strategy.kind == "explicit":
        if bundle.explicit_groups is None:
            raise StrategyError("explicit grouping requires precomputed group labels")
        for u in users:
            labels[u] = bundle.explicit_groups.get(u, "unknown")

    distinct = sorted({str(v): v for v in labels.values()}.items())
    label_to_gid = {value: gid for gid, (_s, value) in enumerate(distinct)}
    members: Dict[int, Set[int]] = {gid: set() for gid in label_to_gid.values()}
    for u, label in labels.items():
        members[label_to_gid[label]].add(u)

    assoc_sets: Dict[int, Set[int]] = {gid: set() for gid in members}
    if associates:
        for a, bs in associates.items():
            if a not in label_to_gid:
                raise StrategyError(f"associate label {a!r} matches no group")
            for b in bs:
                if b not in label_to_gid:
                    raise StrategyError(f"associate label {b!r} matches no group")
                ga, gb = label_to_gid[a], label_to_gid[b]
                if ga != gb:
                    assoc_sets[ga].add(gb)
                    assoc_sets[gb].add(ga)

    return {
        gid: Group(gid, frozenset(m), frozenset(assoc_sets[gid]))
        for gid, m in members.items()
    }


def kfold_split(bundle: DatasetBundle, fold_count: int, seed: int) -> SplitPlan:
    """Seeded shuffle of rating indices into disjoint folds.

    Each fold's test set keeps only maximum-rating records.
    """
    if fold_count < 2:
        raise SplitError("fold_count must be >= 2")
    n = len(bundle.ratings)
    if n < fold_count:
        raise SplitError(f"cannot split {n} ratings into {fold_count} folds")
    indices = list(range(n))
    random.Random(seed).shuffle(indices)
    folds: List[List[int]] = [[] for _ in range(fold_count)]
    for pos, idx in enumerate(indices):
        folds[pos % fold_count].append(idx)
    test_sets = [
        [i for i in fold if bundle.ratings[i].rating == bundle.p_max] for fold in folds
    ]
    return SplitPlan(fold_count, seed, folds, test_sets)
