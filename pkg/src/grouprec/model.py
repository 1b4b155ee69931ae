"""Core identifier and preference data types shared by all modules.

Ids are dense integer indices assigned at ingestion (see data module for the
mapping back to raw dataset ids). Items, users, tags and groups each live in
their own index namespace.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence


class DataIntegrityError(ValueError):
    """Raised when input records violate dataset invariants."""


@dataclass(frozen=True)
class Catalog:
    """Item/user/tag universe: counts plus per-item tag sets.

    ``tags[i]`` is the set of tag indices assigned to item ``i``; items
    without tags may be absent from the mapping.
    """

    n_items: int
    n_users: int
    n_tags: int = 0
    tags: Mapping[int, frozenset] = field(default_factory=dict)

    def __post_init__(self):
        if self.n_items < 1:
            raise ValueError("catalog needs at least one item")
        for item, tagset in self.tags.items():
            if not 0 <= item < self.n_items:
                raise DataIntegrityError(f"tag assignment references unknown item {item}")
            for t in tagset:
                if not 0 <= t < self.n_tags:
                    raise DataIntegrityError(f"item {item} references unknown tag {t}")

    def item_tags(self, item: int) -> frozenset:
        return self.tags.get(item, frozenset())


@dataclass(frozen=True)
class RatingRecord:
    """A single (user, item, rating) observation on a 1..p_max scale."""

    user: int
    item: int
    rating: int
    timestamp: Optional[int] = None


@dataclass(frozen=True)
class Group:
    """A group of users plus its associated groups in the social graph."""

    id: int
    members: frozenset
    associates: frozenset = frozenset()

    def __post_init__(self):
        if not self.members:
            raise ValueError(f"group {self.id} has no members")
        if self.id in self.associates:
            raise ValueError(f"group {self.id} lists itself as an associate")

    @property
    def size(self) -> int:
        return len(self.members)


class PairwiseComparisonMatrix:
    """Sparse 0/1 matrix of item-vs-item preferences for one user.

    Only the positions holding a 1 are stored, as ordered ``(x, y)`` pairs
    meaning "x preferred to y". Instances are immutable; the exchange
    simulator produces new instances rather than mutating.
    """

    __slots__ = ("owner", "n", "entries")

    def __init__(self, owner, n: int, entries: Iterable = ()):
        entries = frozenset(entries)
        for x, y in entries:
            if x == y:
                raise DataIntegrityError(f"diagonal entry ({x},{x}) not allowed")
            if not (0 <= x < n and 0 <= y < n):
                raise DataIntegrityError(f"entry ({x},{y}) outside item range 0..{n - 1}")
        object.__setattr__(self, "owner", owner)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "entries", entries)

    def __setattr__(self, name, value):
        raise AttributeError("PairwiseComparisonMatrix is immutable")

    def __contains__(self, pair) -> bool:
        return pair in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PairwiseComparisonMatrix)
            and self.n == other.n
            and self.entries == other.entries
        )

    def __hash__(self):
        return hash((self.n, self.entries))

    def __repr__(self) -> str:
        return f"PairwiseComparisonMatrix(owner={self.owner!r}, n={self.n}, ones={len(self.entries)})"

    def is_antisymmetric(self) -> bool:
        """True when no unordered pair has both directions set."""
        return all((y, x) not in self.entries for x, y in self.entries)


def validate_ranking(ranking: Sequence[int], n: int) -> None:
    seen = set()
    for item in ranking:
        if item in seen:
            raise DataIntegrityError(f"duplicate item {item} in ranking")
        if not 0 <= item < n:
            raise DataIntegrityError(f"ranking item {item} outside catalog of {n} items")
        seen.add(item)


def pairwise_from_ratings(
    ratings: Sequence[RatingRecord],
    catalog: Catalog,
    p_max: int = 5,
    owner=None,
) -> PairwiseComparisonMatrix:
    """Build a user's pairwise comparison matrix from their rating history.

    For every pair of items both rated, a 1 is placed at (x, y) exactly when
    the rating of x is strictly larger; equal ratings and unrated items
    leave both directions at 0.
    """
    by_item = {}
    for rec in ratings:
        if owner is None:
            owner = rec.user
        elif rec.user != owner:
            raise DataIntegrityError(
                f"ratings mix users {owner} and {rec.user}; one user expected"
            )
        if not 1 <= rec.rating <= p_max:
            raise DataIntegrityError(
                f"rating {rec.rating} for item {rec.item} outside 1..{p_max}"
            )
        if not 0 <= rec.item < catalog.n_items:
            raise DataIntegrityError(f"rating references unknown item {rec.item}")
        if rec.item in by_item:
            raise DataIntegrityError(f"duplicate rating for (user={rec.user}, item={rec.item})")
        by_item[rec.item] = rec.rating

    items = sorted(by_item)
    entries = []
    for i, x in enumerate(items):
        for y in items[i + 1:]:
            if by_item[x] > by_item[y]:
                entries.append((x, y))
            elif by_item[y] > by_item[x]:
                entries.append((y, x))
    return PairwiseComparisonMatrix(owner, catalog.n_items, entries)


def pairwise_from_ranking(
    ranking: Sequence[int],
    catalog: Catalog,
    owner=None,
) -> PairwiseComparisonMatrix:
    """Build a pairwise comparison matrix from an explicit (partial) ranking.

    (x, y) is set exactly when x precedes y in the ranking; items absent
    from the ranking stay uncompared.
    """
    validate_ranking(ranking, catalog.n_items)
    entries = [
        (ranking[i], ranking[j])
        for i in range(len(ranking))
        for j in range(i + 1, len(ranking))
    ]
    return PairwiseComparisonMatrix(owner, catalog.n_items, entries)
