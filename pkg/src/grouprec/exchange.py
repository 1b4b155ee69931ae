"""Peer-to-peer preference exchange simulator and anonymity analytics.

The exchange phase mixes the members' pairwise comparison matrices through
random entry swaps driven by Poisson clocks. The analytic side exposes the
closed-form transition matrix of the record random walk, its matrix powers,
and the effective anonymity-set size (exponential of the Shannon entropy of
the record-origin distribution).
"""

from __future__ import annotations

import csv
import json
import math
import random
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .model import Group, PairwiseComparisonMatrix


class ExchangeUsageError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExchangeConfig:
    """Parameters of one exchange run.

    t_threshold is the synchronized wall-time at which the phase ends; with
    per-member rate-1 clocks the global event rate is the group size N.
    """

    t_threshold: float
    seed: int
    group: Group
    track_provenance: bool = False

    def __post_init__(self):
        if self.t_threshold < 0:
            raise ValueError("t_threshold must be >= 0")


@dataclass(frozen=True)
class ExchangeEvent:
    time: float
    initiator: int
    partner: int
    x: int
    y: int


@dataclass
class ExchangeResult:
    matrices: Dict[int, PairwiseComparisonMatrix]
    events: List[ExchangeEvent]
    # provenance[u][(x, y)] = original owner of the record now held by u at (x, y)
    provenance: Optional[Dict[int, Dict[Tuple[int, int], int]]] = None


def pad_matrix(
    matrix: PairwiseComparisonMatrix, rng: random.Random
) -> Tuple[PairwiseComparisonMatrix, int]:
    """Insert symmetric 1-pairs so the matrix holds equally many 0s and 1s.

    p unordered fully-zero pairs are chosen uniformly at random and set to 1
    in both directions. p is floor of (n(n-1)/2 - c)/2 where c counts the
    unordered pairs with exactly one direction set; the floor covers the
    parity case where an exact balance is unattainable.
    """
    if not matrix.is_antisymmetric():
        raise ValueError("pad_matrix expects a pre-padding (antisymmetric) matrix")
    n = matrix.n
    c = len(matrix.entries)
    p = (n * (n - 1) // 2 - c) // 2
    if p == 0:
        return matrix, 0
    compared = {(min(x, y), max(x, y)) for x, y in matrix.entries}
    free = [
        (x, y)
        for x in range(n)
        for y in range(x + 1, n)
        if (x, y) not in compared
    ]
    assert len(free) >= p, "fewer fully-zero pairs than the padding count"
    chosen = rng.sample(free, p)
    entries = set(matrix.entries)
    for x, y in chosen:
        entries.add((x, y))
        entries.add((y, x))
    return PairwiseComparisonMatrix(matrix.owner, n, entries), p


def cleanup(matrix: PairwiseComparisonMatrix) -> PairwiseComparisonMatrix:
    """Reset every symmetric 1-pair (both directions set) back to 0."""
    entries = matrix.entries
    kept = [(x, y) for x, y in entries if (y, x) not in entries]
    return PairwiseComparisonMatrix(matrix.owner, matrix.n, kept)


def _decode_position(q: int, n: int) -> Tuple[int, int]:
    # q indexes the n(n-1) off-diagonal positions row by row
    x, r = divmod(q, n - 1)
    y = r if r < x else r + 1
    return x, y


def simulate_exchange(
    matrices: Mapping[int, PairwiseComparisonMatrix],
    config: ExchangeConfig,
) -> ExchangeResult:
    """Run the exchange phase for one group.

    Events arrive as a rate-N Poisson process until t_threshold. Each event
    picks a uniform initiator, a uniform partner among the other members and
    one uniform ordered off-diagonal position; the two parties swap the value
    (and, when tracked, the provenance label) at that single position. The
    total number of 1s across the group is conserved exactly.
    """
    members = sorted(config.group.members)
    N = len(members)
    if N < 2:
        raise ValueError("exchange needs a group of at least 2 members")
    if set(matrices) != set(members):
        raise ValueError("need exactly one matrix per group member")
    ns = {matrices[u].n for u in members}
    if len(ns) != 1:
        raise ValueError("all matrices must share one catalog")
    n = ns.pop()
    n_prime = n * (n - 1)

    state = {u: set(matrices[u].entries) for u in members}
    provenance = None
    if config.track_provenance:
        provenance = {
            u: {_decode_position(q, n): u for q in range(n_prime)} for u in members
        }

    rng = random.Random(config.seed)
    events: List[ExchangeEvent] = []
    t = rng.expovariate(N)
    while t <= config.t_threshold:
        i = rng.randrange(N)
        j = rng.randrange(N - 1)
        if j >= i:
            j += 1
        pos = _decode_position(rng.randrange(n_prime), n)
        a, b = members[i], members[j]
        events.append(ExchangeEvent(t, a, b, pos[0], pos[1]))
        in_a = pos in state[a]
        in_b = pos in state[b]
        if in_a != in_b:
            if in_a:
                state[a].discard(pos)
                state[b].add(pos)
            else:
                state[b].discard(pos)
                state[a].add(pos)
        if provenance is not None:
            provenance[a][pos], provenance[b][pos] = provenance[b][pos], provenance[a][pos]
        t += rng.expovariate(N)

    mixed = {
        u: PairwiseComparisonMatrix(u, n, state[u]) for u in members
    }
    return ExchangeResult(mixed, events, provenance)


# ---------------------------------------------------------------------------
# Analytic anonymity model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransitionModel:
    """Closed-form per-tick transition matrix of a record's random walk.

    Off-diagonal entries are (1/n')(1/N)(2/(N-1)); the spectrum is {1} plus
    1 - 2/(n'(N-1)) with multiplicity N-1.
    """

    N: int
    n_prime: int
    P: np.ndarray = field(repr=False)

    @property
    def lambda2(self) -> float:
        return 1.0 - 2.0 / (self.n_prime * (self.N - 1))


def transition_model(N: int, n: int) -> TransitionModel:
    if N < 2 or n < 2:
        raise ValueError("transition model needs N >= 2 and n >= 2")
    n_prime = n * (n - 1)
    off = (1.0 / n_prime) * (1.0 / N) * (2.0 / (N - 1))
    diag = 1.0 - (2.0 / N) * (1.0 / n_prime)
    P = np.full((N, N), off)
    np.fill_diagonal(P, diag)
    return TransitionModel(N, n_prime, P)


def distribution_at(model: TransitionModel, t: int, origin: int) -> np.ndarray:
    """Record-origin distribution after t global clock ticks.

    Uses the rank-one spectral form: P^t = (1/N) 11^T + lambda2^(t-1) (P - (1/N) 11^T)
    for t >= 1; t = 0 is the point mass at the origin.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if not 0 <= origin < model.N:
        raise ValueError("origin outside the group")
    N = model.N
    e = np.zeros(N)
    e[origin] = 1.0
    if t == 0:
        return e
    uniform = np.full(N, 1.0 / N)
    deviation = model.P[:, origin] - 1.0 / N
    return uniform + model.lambda2 ** (t - 1) * deviation


def effective_anonymity(distribution: np.ndarray) -> float:
    """Effective anonymity-set size: 2 to the Shannon entropy (bits)."""
    p = np.asarray(distribution, dtype=float)
    if np.any(p < 0):
        raise ValueError("probabilities must be non-negative")
    total = p.sum()
    if not math.isclose(total, 1.0, abs_tol=1e-9):
        raise ValueError("distribution must sum to 1")
    p = p / total
    nz = p[p > 0]
    entropy = -(nz * np.log2(nz)).sum()
    return float(2.0 ** entropy)


def ticks_for_time(t_threshold: float, N: int) -> int:
    """Expected global tick count for a wall-time horizon."""
    return int(round(N * t_threshold))


def mixing_ticks(model: TransitionModel, residual: float = 0.01) -> int:
    """Smallest t with lambda2^t below the residual."""
    return int(math.ceil(math.log(residual) / math.log(model.lambda2)))


def record_location(
    events: Sequence[ExchangeEvent], origin: int, entry: Tuple[int, int], time: float
) -> int:
    """Replay an event log and return the holder of one record at a time."""
    holder = origin
    for ev in events:
        if ev.time > time:
            break
        if (ev.x, ev.y) != entry:
            continue
        if holder == ev.initiator:
            holder = ev.partner
        elif holder == ev.partner:
            holder = ev.initiator
    return holder


def empirical_provenance(
    results: Sequence[ExchangeResult],
    origin: int,
    entry: Optional[Tuple[int, int]] = None,
) -> Dict[int, float]:
    """Empirical frequency with which a record starting at ``origin`` resides
    at each member, over independent exchange replicas.

    Aggregates over all matrix positions (each position's record is an
    independent sample of the same walk) unless a single ``entry`` is given.
    """
    counts: Dict[int, int] = {}
    total = 0
    for res in results:
        if res.provenance is None:
            raise ExchangeUsageError("simulation ran without track_provenance")
        for u, labels in res.provenance.items():
            if entry is not None:
                if labels.get(entry) == origin:
                    counts[u] = counts.get(u, 0) + 1
                    total += 1
            else:
                hits = sum(1 for o in labels.values() if o == origin)
                if hits:
                    counts[u] = counts.get(u, 0) + hits
                total += hits
    if total == 0:
        raise ExchangeUsageError("no records with the requested origin found")
    members = sorted(results[0].matrices)
    return {u: counts.get(u, 0) / total for u in members}


def provenance_replicas(
    N: int, n: int, ticks: int, replicas: int, seed: int, origin: int = 0
) -> np.ndarray:
    """Monte Carlo record-origin distribution after a fixed tick count.

    Lightweight sibling of simulate_exchange that tracks only record
    locations (matrix values are irrelevant to provenance), aggregated over
    all n(n-1) positions per replica for variance reduction.
    """
    n_prime = n * (n - 1)
    counts = np.zeros(N, dtype=np.int64)
    rng = np.random.default_rng(seed)
    for _ in range(replicas):
        initiators = rng.integers(0, N, size=ticks)
        offsets = rng.integers(1, N, size=ticks)
        partners = (initiators + offsets) % N
        positions = rng.integers(0, n_prime, size=ticks)
        loc = [origin] * n_prime
        for a, b, pos in zip(initiators, partners, positions):
            if loc[pos] == a:
                loc[pos] = b
            elif loc[pos] == b:
                loc[pos] = a
        counts += np.bincount(loc, minlength=N)
    return counts / counts.sum()


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def events_to_csv(events: Sequence[ExchangeEvent], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "initiator", "partner", "item_x", "item_y"])
        for ev in events:
            writer.writerow([repr(ev.time), ev.initiator, ev.partner, ev.x, ev.y])


def anonymity_report(model: TransitionModel, t: int, origin: int = 0) -> dict:
    dist = distribution_at(model, t, origin)
    return {
        "time": t,
        "distribution": [float(p) for p in dist],
        "effective_size": effective_anonymity(dist),
    }


def anonymity_series(model: TransitionModel, t_max: int, step: int = 1, origin: int = 0) -> list:
    return [anonymity_report(model, t, origin) for t in range(0, t_max + 1, step)]


def anonymity_report_json(reports, path) -> None:
    with open(path, "w") as fh:
        json.dump(reports, fh, indent=2)
