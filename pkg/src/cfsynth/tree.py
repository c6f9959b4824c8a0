"""Decision-tree rule enumeration: fit, convert to DNF, iterate for diversity.

Trees are binary classifiers over the predicate matrix (one-vs-all per
format).  Candidate rules come from an iterative loop that refits with
the previous root feature forbidden, so successive candidates are
structurally different.  A candidate is only emitted when its tree is
small enough and its DNF reproduces every observed example.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .column import Column
from .clustering import (
    Hypothesis,
    ORIGIN_EXCLUDED,
    ORIGIN_OBSERVED,
    ORIGIN_SOFT_NEGATIVE,
)
from .dsl import Clause, Dnf, Literal, dnf_matches
from .predicates import PredicateMatrix

DEFAULT_LAMBDA_A = 0.80
DEFAULT_LAMBDA_N = 7
DEFAULT_OBSERVED_WEIGHT = 2.0
DEFAULT_MAX_ITERATIONS = 32

NEGATIVES_MODES = ("soft", "none", "hard")


@dataclass(frozen=True)
class Leaf:
    label: bool


@dataclass(frozen=True)
class Split:
    feature: int
    true_branch: "Tree"
    false_branch: "Tree"


Tree = Union[Leaf, Split]


def node_count(tree: Tree) -> int:
    if isinstance(tree, Leaf):
        return 1
    return 1 + node_count(tree.true_branch) + node_count(tree.false_branch)


def root_feature(tree: Tree) -> Optional[int]:
    return tree.feature if isinstance(tree, Split) else None


def eval_tree(tree: Tree, row: np.ndarray) -> bool:
    while isinstance(tree, Split):
        tree = tree.true_branch if row[tree.feature] else tree.false_branch
    return tree.label


def predict_tree(tree: Tree, truth: np.ndarray) -> np.ndarray:
    """Vectorized per-cell prediction over a boolean feature matrix."""
    out = np.empty(truth.shape[0], dtype=bool)
    stack = [(tree, np.arange(truth.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if idx.size == 0:
            continue
        if isinstance(node, Leaf):
            out[idx] = node.label
            continue
        hit = truth[idx, node.feature]
        stack.append((node.true_branch, idx[hit]))
        stack.append((node.false_branch, idx[~hit]))
    return out


@dataclass(frozen=True)
class LabelVector:
    """One-vs-all targets with per-cell weights and origins."""

    target: np.ndarray  # bool
    weight: np.ndarray  # float, 0 excludes the cell entirely
    origin: np.ndarray


def one_vs_all_labels(
    hypothesis: Hypothesis,
    fmt: int,
    observed_weight: float = DEFAULT_OBSERVED_WEIGHT,
    negatives_mode: str = "soft",
    weight_soft_negatives: bool = False,
) -> LabelVector:
    """Targets for learning format ``fmt`` against everything else."""
    if negatives_mode not in NEGATIVES_MODES:
        raise ValueError(
            f"unknown negatives mode {negatives_mode!r}; expected one of {NEGATIVES_MODES}"
        )
    labels = hypothesis.labels
    origin = hypothesis.origin
    target = labels == fmt
    weight = np.ones(len(labels), dtype=np.float64)
    weight[origin == ORIGIN_OBSERVED] = observed_weight
    if weight_soft_negatives:
        weight[origin == ORIGIN_SOFT_NEGATIVE] = observed_weight
    weight[origin == ORIGIN_EXCLUDED] = 0.0
    weight[labels < 0] = 0.0
    return LabelVector(target, weight, origin)


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

def fit_tree(
    matrix: PredicateMatrix,
    labels: LabelVector,
    allowed: Optional[np.ndarray] = None,
    max_nodes: Optional[int] = None,
) -> Tree:
    """Greedy top-down induction with weighted Gini gain.

    Split choice is the gain argmax over allowed features that actually
    divide the node, ties to the lowest feature index; zero-gain splits
    are taken (they are what makes xor-shaped labels learnable).  The
    node budget is consumed depth-first, true branch first.  Leaf class
    is the weighted majority with ties falling to negative.
    """
    floats = matrix.floats
    truth = matrix.truth
    m = truth.shape[1]
    if allowed is None:
        allowed = np.arange(m)
    allowed = np.sort(np.asarray(allowed, dtype=np.intp))

    active = labels.weight > 0
    idx0 = np.flatnonzero(active)
    count = 1  # the root is allocated up front

    def grow(idx: np.ndarray, feats: np.ndarray) -> Tree:
        nonlocal count
        w = labels.weight[idx]
        y = labels.target[idx]
        total = w.sum()
        pos = w[y].sum()
        if pos == 0.0 or pos == total:
            return Leaf(bool(pos > 0.0))
        if feats.size == 0 or (max_nodes is not None and count + 2 > max_nodes):
            return Leaf(bool(pos > total - pos))
        sub = floats[idx][:, feats]
        wy = w * y
        w_true = sub.T @ w
        p_true = sub.T @ wy
        w_false = total - w_true
        p_false = pos - p_true
        valid = (w_true > 0.0) & (w_false > 0.0)
        if not valid.any():
            return Leaf(bool(pos > total - pos))
        with np.errstate(divide="ignore", invalid="ignore"):
            g_true = 1.0 - (p_true / w_true) ** 2 - ((w_true - p_true) / w_true) ** 2
            g_false = (
                1.0 - (p_false / w_false) ** 2 - ((w_false - p_false) / w_false) ** 2
            )
            child = (w_true * g_true + w_false * g_false) / total
        child[~valid] = np.inf
        best = int(np.argmin(child))  # first minimum = lowest feature index
        feat = int(feats[best])
        count += 2
        rest = feats[feats != feat]
        hit = truth[idx, feat]
        true_branch = grow(idx[hit], rest)
        false_branch = grow(idx[~hit], rest)
        return Split(feat, true_branch, false_branch)

    if idx0.size == 0:
        return Leaf(False)
    return grow(idx0, allowed)


def weighted_accuracy(tree: Tree, matrix: PredicateMatrix, labels: LabelVector) -> float:
    active = labels.weight > 0
    if not active.any():
        return 0.0
    pred = predict_tree(tree, matrix.truth)
    correct = (pred == labels.target) & active
    return float(labels.weight[correct].sum() / labels.weight[active].sum())


# ---------------------------------------------------------------------------
# DNF extraction
# ---------------------------------------------------------------------------

def tree_to_dnf(tree: Tree, matrix: PredicateMatrix) -> Dnf:
    """One clause per positive leaf: the (feature, polarity) path to it."""
    clauses: list[Clause] = []

    def walk(node: Tree, path: list[Literal]) -> None:
        if isinstance(node, Leaf):
            if node.label:
                if not path:
                    raise ValueError("tree is a single positive leaf, not a rule")
                clauses.append(Clause(tuple(path)))
            return
        pred = matrix.predicates[node.feature]
        walk(node.true_branch, path + [Literal(pred)])
        walk(node.false_branch, path + [Literal(pred, negated=True)])

    walk(tree, [])
    if not clauses:
        raise ValueError("empty rule: tree has no positive leaf")
    return Dnf(tuple(clauses))


# ---------------------------------------------------------------------------
# iterative enumeration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Candidate:
    dnf: Dnf
    format: int
    tree_accuracy: float
    node_count: int
    iteration: int


@dataclass(frozen=True)
class EnumerationResult:
    candidates: tuple[Candidate, ...]
    fallback: Optional[Candidate]


def _consistent_on(
    dnf: Dnf,
    column: Column,
    truth_by_render: dict[str, np.ndarray],
    idx: np.ndarray,
    want: np.ndarray,
    fold_case: bool,
) -> bool:
    hits = dnf_matches(dnf, column, truth_by_render, fold_case)
    return bool((hits[idx] == want).all())


def enumerate_rules(
    column: Column,
    matrix: PredicateMatrix,
    labels: LabelVector,
    fmt: int,
    lambda_a: float = DEFAULT_LAMBDA_A,
    lambda_n: int = DEFAULT_LAMBDA_N,
    hard_negatives: bool = False,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    fold_case: bool = False,
) -> EnumerationResult:
    """Iteratively fit trees, forbidding each root, and collect candidates.

    The first fit always runs; afterwards the loop continues while the
    latest tree's weighted accuracy stays at or above ``lambda_a`` and
    unforbidden features remain.  A candidate is emitted when its tree
    fits the node budget and its DNF reproduces every observed example
    (and leaves every pinned negative unformatted, in hard mode).
    """
    m = matrix.truth.shape[1]
    truth_by_render = {
        r: matrix.truth[:, j] for j, r in enumerate(matrix.renderings)
    }
    obs_idx = np.flatnonzero(labels.origin == ORIGIN_OBSERVED)
    neg_idx = np.flatnonzero(labels.origin == ORIGIN_SOFT_NEGATIVE)
    candidates: list[Candidate] = []
    forbidden: set[int] = set()

    iteration = 0
    while iteration < max_iterations:
        allowed = np.array([j for j in range(m) if j not in forbidden], dtype=np.intp)
        if allowed.size == 0:
            break
        tree = fit_tree(matrix, labels, allowed, lambda_n)
        acc = weighted_accuracy(tree, matrix, labels)
        accept = node_count(tree) <= lambda_n
        if accept:
            pred = predict_tree(tree, matrix.truth)
            accept = bool((pred[obs_idx] == labels.target[obs_idx]).all())
            if accept and hard_negatives:
                accept = not pred[neg_idx].any()
        if accept:
            try:
                dnf = tree_to_dnf(tree, matrix)
            except ValueError:
                dnf = None
            if dnf is not None:
                ok = _consistent_on(
                    dnf, column, truth_by_render,
                    obs_idx, labels.target[obs_idx], fold_case,
                )
                if ok and hard_negatives and neg_idx.size:
                    ok = _consistent_on(
                        dnf, column, truth_by_render,
                        neg_idx, np.zeros(neg_idx.size, dtype=bool), fold_case,
                    )
                if ok:
                    candidates.append(
                        Candidate(dnf, fmt, acc, node_count(tree), iteration)
                    )
        iteration += 1
        root = root_feature(tree)
        if root is None:
            break  # a bare leaf repeats forever, nothing left to forbid
        forbidden.add(root)
        if acc < lambda_a:
            break

    fallback = None
    if not candidates:
        tree = fit_tree(matrix, labels, None, None)
        try:
            dnf = tree_to_dnf(tree, matrix)
        except ValueError:
            dnf = None
        if dnf is not None and _consistent_on(
            dnf, column, truth_by_render, obs_idx, labels.target[obs_idx], fold_case
        ):
            fallback = Candidate(
                dnf, fmt, weighted_accuracy(tree, matrix, labels),
                node_count(tree), 0,
            )
    return EnumerationResult(tuple(candidates), fallback)
