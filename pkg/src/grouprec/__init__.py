"""Group-based privacy-preserving recommendation toolkit."""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    Catalog,
    DataIntegrityError,
    Group,
    PairwiseComparisonMatrix,
    RatingRecord,
    pairwise_from_ranking,
    pairwise_from_ratings,
)
