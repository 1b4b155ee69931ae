import os
import random

import pytest

from grouprec.data import DatasetBundle
from grouprec.model import Catalog, RatingRecord

# Fig-style worked example: three members, three items (0-indexed).
# The third profile is (2, 0, 1) so that K(p1, p2) = 1, K(p1, p3) = 2 and the
# consensus ranking is (0, 1, 2).
WORKED_PROFILES = [[0, 1, 2], [1, 0, 2], [2, 0, 1]]


def ml100k_dir():
    """Path to a real ML-100K directory, or None when unavailable."""
    candidates = [os.environ.get("GROUPREC_ML100K_DIR"), "data/ml-100k", "/root/pkg/data/ml-100k"]
    for c in candidates:
        if c and os.path.exists(os.path.join(c, "u.data")):
            return c
    return None


def require_ml100k():
    path = ml100k_dir()
    if path is None:
        pytest.skip(
            "ML-100K dataset not available in this environment "
            "(set GROUPREC_ML100K_DIR or place it under data/ml-100k)"
        )
    return path


def synthetic_bundle(
    n_users=40, n_items=30, n_clusters=4, n_tags=5, seed=0, density=0.5
) -> DatasetBundle:
    """Clustered rating data: users in the same cluster share item affinities.

    Occupation encodes the latent cluster so profile-based grouping aligns
    with the preference structure.
    """
    rng = random.Random(seed)
    affinity = [
        [rng.uniform(1.0, 5.0) for _ in range(n_items)] for _ in range(n_clusters)
    ]
    ratings = []
    profiles = {}
    for u in range(n_users):
        cluster = u % n_clusters
        profiles[u] = {
            "gender": rng.choice(["M", "F"]),
            "age": rng.randint(15, 60),
            "occupation": f"job{cluster}",
        }
        for i in range(n_items):
            if rng.random() > density:
                continue
            value = affinity[cluster][i] + rng.gauss(0, 0.7)
            r = max(1, min(5, round(value)))
            ratings.append(RatingRecord(u, i, r))
    tags = {
        i: frozenset({i % n_tags, (i // n_tags) % n_tags}) for i in range(n_items)
    }
    catalog = Catalog(n_items, n_users, n_tags, tags)
    return DatasetBundle(
        catalog,
        ratings,
        p_max=5,
        user_ids=list(range(n_users)),
        item_ids=list(range(n_items)),
        tag_names=[f"t{t}" for t in range(n_tags)],
        profiles=profiles,
    )


def write_generic_csv(bundle: DatasetBundle, path) -> None:
    with open(path, "w") as fh:
        for rec in bundle.ratings:
            fh.write(f"{rec.user},{rec.item},{rec.rating}\n")


@pytest.fixture
def small_bundle():
    return synthetic_bundle()
