"""Semi-supervised label hypothesis via iterative cluster reassignment.

Cells live in the boolean feature space of the predicate matrix; the
distance between two cells is the size of the symmetric difference of
their predicate sets.  Observed examples are pinned to their format's
cluster and negative examples to the unformatted cluster; every other
cell starts in an "unknown" cluster and is iteratively pulled toward
the cluster minimizing min-distance + max-distance.  At the end each
cell takes its cluster's format, with the unknown cluster folded into
unformatted.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .column import Task
from .predicates import PredicateMatrix

# per-cell origin tags for downstream weighting
ORIGIN_OBSERVED = 0
ORIGIN_SOFT_NEGATIVE = 1
ORIGIN_CLUSTER = 2
ORIGIN_EXCLUDED = 3

COMBINERS = ("sum", "mean", "lexicographic")


@dataclass(frozen=True)
class Hypothesis:
    """Per-cell hypothesized format labels plus where each came from.

    ``labels[i]`` is a format id, or -1 for cells excluded from tree
    learning (only produced with clustering disabled).
    """

    labels: np.ndarray
    origin: np.ndarray


def cell_distance(a: int, b: int, matrix: PredicateMatrix) -> int:
    """Symmetric-difference size between two cells' predicate sets."""
    xor = matrix.packed_rows[a] ^ matrix.packed_rows[b]
    return int(np.bitwise_count(xor).sum())


def assign_score(
    i: int, cluster: Iterable[int], matrix: PredicateMatrix, combiner: str = "sum"
):
    """Score of moving cell i into a non-empty cluster of cell indices."""
    ds = [cell_distance(i, j, matrix) for j in cluster]
    if not ds:
        raise ValueError("cluster must be non-empty")
    if combiner == "lexicographic":
        return (min(ds), max(ds))
    return _combine(
        np.array(min(ds), dtype=float), np.array(max(ds), dtype=float), combiner, 0.0
    ).item()


def _signature_distances(matrix: PredicateMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Collapse identical rows; returns (per-cell signature index, u x u distances)."""
    packed = matrix.packed_rows
    if packed.shape[1] == 0:
        return np.zeros(packed.shape[0], dtype=np.intp), np.zeros((1, 1))
    uniq, sig = np.unique(packed, axis=0, return_inverse=True)
    sig = np.asarray(sig).reshape(-1)
    pad = (-uniq.shape[1]) % 8
    if pad:
        uniq = np.pad(uniq, ((0, 0), (0, pad)))
    words = np.ascontiguousarray(uniq).view(np.uint64)
    u = words.shape[0]
    dist = np.empty((u, u), dtype=np.float64)
    for a in range(u):
        dist[a] = np.bitwise_count(words ^ words[a]).sum(axis=1)
    return sig, dist


def _combine(dmin: np.ndarray, dmax: np.ndarray, combiner: str, big: float) -> np.ndarray:
    if combiner == "sum":
        return dmin + dmax
    if combiner == "mean":
        return (dmin + dmax) / 2.0
    if combiner == "lexicographic":
        return dmin * big + dmax
    raise ValueError(f"unknown combiner {combiner!r}; expected one of {COMBINERS}")


def cluster_labels(
    task: Task,
    matrix: PredicateMatrix,
    negatives: Iterable[int] = (),
    max_iter: int = 10,
    combiner: str = "sum",
    unknown_is_candidate: bool = True,
) -> np.ndarray:
    """Hypothesized per-cell format labels for a task.

    ``negatives`` are pinned to the unformatted cluster.  Sweeps are
    synchronous: every unpinned cell is scored against the previous
    sweep's memberships, ties resolve to the lowest cluster id with the
    unknown cluster ordered last.  Stops on a fixpoint or after
    ``max_iter`` sweeps.
    """
    if not task.observed:
        raise ValueError("clustering needs at least one observed example")
    n = len(task.column)
    observed = task.observed_formats
    formats = sorted(set(observed.values()))
    # cluster ids: 0 = unformatted, 1..k-1 = observed formats, k = unknown
    k = len(formats) + 1
    unknown = k
    fmt_of_cluster = np.array([0] + formats + [0], dtype=np.int64)
    cluster_of_fmt = {f: j + 1 for j, f in enumerate(formats)}

    assign = np.full(n, unknown, dtype=np.intp)
    pinned = np.zeros(n, dtype=bool)
    for i, f in observed.items():
        assign[i] = cluster_of_fmt[f]
        pinned[i] = True
    for i in negatives:
        assign[i] = 0
        pinned[i] = True

    if pinned.all():
        return fmt_of_cluster[assign]

    sig, dist = _signature_distances(matrix)
    u = dist.shape[0]
    big = float(matrix.truth.shape[1] + 2)
    candidates = list(range(k)) + ([unknown] if unknown_is_candidate else [])

    for _ in range(max_iter):
        scores = np.full((u, len(candidates)), np.inf)
        for pos, c in enumerate(candidates):
            members = sig[assign == c]
            if members.size == 0:
                continue
            sub = dist[:, np.unique(members)]
            scores[:, pos] = _combine(
                sub.min(axis=1), sub.max(axis=1), combiner, big
            )
        # argmin takes the first minimum, which is the tie-break order
        best = np.array(candidates, dtype=np.intp)[scores.argmin(axis=1)]
        new_assign = np.where(pinned, assign, best[sig])
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign

    return fmt_of_cluster[assign]


def hypothesize(
    task: Task,
    matrix: PredicateMatrix,
    negatives: Iterable[int] = (),
    clustering_enabled: bool = True,
    max_iter: int = 10,
    combiner: str = "sum",
    unknown_is_candidate: bool = True,
) -> Hypothesis:
    """Labels for tree learning, honoring the clustering ablation switch.

    With clustering off, only observed cells and pinned negatives carry
    labels; everything else is excluded from the label vector.
    """
    n = len(task.column)
    negatives = frozenset(negatives)
    origin = np.full(n, ORIGIN_CLUSTER, dtype=np.int8)
    for i in negatives:
        origin[i] = ORIGIN_SOFT_NEGATIVE
    for i in task.observed:
        origin[i] = ORIGIN_OBSERVED

    if clustering_enabled:
        labels = cluster_labels(
            task, matrix, negatives, max_iter, combiner, unknown_is_candidate
        )
    else:
        labels = np.full(n, -1, dtype=np.int64)
        for i, f in task.observed_formats.items():
            labels[i] = f
        for i in negatives:
            labels[i] = 0
        origin[(labels == -1)] = ORIGIN_EXCLUDED
    return Hypothesis(labels, origin)
