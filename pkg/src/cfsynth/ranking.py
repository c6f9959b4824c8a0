"""Candidate scoring and cross-format combination.

Every enumerated candidate is summarized by a small hand-built feature
vector, scored with a logistic model after min-max normalization over
the task's own candidate pool, and the per-format winners are merged
into full rules whose branches never overlap on the column.  The model
is trained, when gold tasks are available, by plain full-batch gradient
descent on harvested candidates; a fixed default serves otherwise.
"""

from __future__ import annotations

import dataclasses
import heapq
import json
import warnings
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from cfsynth.clustering import ORIGIN_SOFT_NEGATIVE, Hypothesis
from cfsynth.column import Task
from cfsynth.dsl import Rule, dnf_matches, parse_rule, print_rule, rule_execution
from cfsynth.predicates import (
    COLUMN_VALUE,
    POPULAR,
    SUMMARY_STAT,
    TOKEN_DELIMITER,
    TOKEN_PREFIX,
)
from cfsynth.tree import Candidate

COMBINATION_BEAM = 1000  # product-lattice nodes examined before giving up

NORMALIZATION = "minmax-per-task"


@dataclass(frozen=True)
class RuleFeatures:
    """Shape and behaviour summary of one candidate DNF.

    ``matched_fraction`` is taken over the cells hypothesized to carry
    the candidate's format; ``observed_coverage`` is the same quantity
    over the observed examples alone and sits at 1.0 for anything the
    enumerator let through.
    """

    literal_count: int
    clause_count: int
    max_clause_len: int
    negation_count: int
    column_value_constants: int
    summary_stat_constants: int
    popular_constants: int
    token_constants: int
    matched_cell_count: int
    matched_fraction: float
    soft_negative_violations: int
    observed_coverage: float
    tree_accuracy: float
    iteration_index: int

    def as_vector(self) -> np.ndarray:
        return np.array(
            [float(getattr(self, name)) for name in FEATURE_NAMES], dtype=np.float64
        )


FEATURE_NAMES = tuple(f.name for f in dataclasses.fields(RuleFeatures))


@dataclass(frozen=True)
class RankerModel:
    """Logistic scorer over normalized RuleFeatures."""

    weights: Mapping[str, float]
    bias: float = 0.0

    def __post_init__(self) -> None:
        unknown = sorted(set(self.weights) - set(FEATURE_NAMES))
        if unknown:
            raise ValueError(f"unknown feature name(s): {', '.join(unknown)}")
        object.__setattr__(self, "weights", dict(self.weights))

    def weight_vector(self) -> np.ndarray:
        return np.array(
            [self.weights.get(name, 0.0) for name in FEATURE_NAMES], dtype=np.float64
        )


# Hand-set weights used when no trained model is supplied.  Signs: favor
# candidates that cover the cells the clustering thinks belong to the
# format, trust accurate trees, prefer constants read off the column
# over generic ones, and pay for every extra literal, negation, soft
# negative hit, and late enumeration round.
DEFAULT_WEIGHTS = {
    "matched_fraction": 2.0,
    "tree_accuracy": 1.0,
    "column_value_constants": 0.5,
    "literal_count": -1.0,
    "negation_count": -0.25,
    "soft_negative_violations": -2.0,
    "iteration_index": -0.25,
}

DEFAULT_MODEL = RankerModel(DEFAULT_WEIGHTS, 0.0)


def model_to_obj(model: RankerModel) -> dict:
    return {
        "weights": dict(model.weights),
        "bias": model.bias,
        "normalization": NORMALIZATION,
    }


def model_from_obj(obj: dict) -> RankerModel:
    if obj.get("normalization") != NORMALIZATION:
        raise ValueError(
            f"unsupported normalization {obj.get('normalization')!r}; "
            f"expected {NORMALIZATION!r}"
        )
    return RankerModel(dict(obj["weights"]), float(obj.get("bias", 0.0)))


def dump_model(model: RankerModel, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_obj(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path: str) -> RankerModel:
    with open(path) as fh:
        return model_from_obj(json.load(fh))


# ---------------------------------------------------------------------------
# feature extraction and scoring
# ---------------------------------------------------------------------------

def extract_features(
    candidate: Candidate,
    task: Task,
    hypothesis: Hypothesis,
    truth_by_render: Optional[dict[str, np.ndarray]] = None,
    fold_case: bool = False,
    matched: Optional[np.ndarray] = None,
) -> RuleFeatures:
    """Features of one candidate; pass ``matched`` to reuse a bitmap."""
    dnf = candidate.dnf
    lits = [lit for cl in dnf.clauses for lit in cl.literals]
    counts = {COLUMN_VALUE: 0, SUMMARY_STAT: 0, POPULAR: 0, "token": 0}
    for lit in lits:
        for tag in lit.predicate.provenance:
            if tag in (TOKEN_DELIMITER, TOKEN_PREFIX):
                counts["token"] += 1
            elif tag in counts:
                counts[tag] += 1
    if matched is None:
        matched = dnf_matches(dnf, task.column, truth_by_render, fold_case)
    positives = hypothesis.labels == candidate.format
    n_pos = int(positives.sum())
    fraction = float(matched[positives].sum() / n_pos) if n_pos else 0.0
    soft = hypothesis.origin == ORIGIN_SOFT_NEGATIVE
    obs = [i for i, f in task.observed_formats.items() if f == candidate.format]
    coverage = float(sum(matched[i] for i in obs) / len(obs)) if obs else 1.0
    return RuleFeatures(
        literal_count=len(lits),
        clause_count=len(dnf.clauses),
        max_clause_len=max(len(cl.literals) for cl in dnf.clauses),
        negation_count=sum(1 for lit in lits if lit.negated),
        column_value_constants=counts[COLUMN_VALUE],
        summary_stat_constants=counts[SUMMARY_STAT],
        popular_constants=counts[POPULAR],
        token_constants=counts["token"],
        matched_cell_count=int(matched.sum()),
        matched_fraction=fraction,
        soft_negative_violations=int(matched[soft].sum()),
        observed_coverage=coverage,
        tree_accuracy=candidate.tree_accuracy,
        iteration_index=candidate.iteration,
    )


def normalize_minmax(raw: np.ndarray) -> np.ndarray:
    """Per-column min-max scaling; constant columns collapse to zero."""
    if raw.size == 0:
        return raw.astype(np.float64)
    lo = raw.min(axis=0)
    rng = raw.max(axis=0) - lo
    rng = np.where(rng == 0.0, 1.0, rng)
    return (raw - lo) / rng


def sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True, eq=False)
class ScoredCandidate:
    candidate: Candidate
    features: RuleFeatures
    matched: np.ndarray
    score: float


def score_pool(
    candidates: Sequence[Candidate],
    task: Task,
    hypothesis: Hypothesis,
    model: RankerModel,
    truth_by_render: Optional[dict[str, np.ndarray]] = None,
    fold_case: bool = False,
) -> list[ScoredCandidate]:
    """Score candidates jointly; normalization spans the whole pool."""
    feats = []
    bitmaps = []
    for c in candidates:
        matched = dnf_matches(c.dnf, task.column, truth_by_render, fold_case)
        feats.append(extract_features(c, task, hypothesis, matched=matched))
        bitmaps.append(matched)
    if not feats:
        return []
    raw = np.stack([f.as_vector() for f in feats])
    norm = normalize_minmax(raw)
    scores = sigmoid(norm @ model.weight_vector() + model.bias)
    return [
        ScoredCandidate(c, f, m, float(s))
        for c, f, m, s in zip(candidates, feats, bitmaps, scores)
    ]


def score_candidates(
    candidates: Sequence[Candidate],
    task: Task,
    hypothesis: Hypothesis,
    model: RankerModel,
    truth_by_render: Optional[dict[str, np.ndarray]] = None,
    fold_case: bool = False,
) -> np.ndarray:
    pool = score_pool(candidates, task, hypothesis, model, truth_by_render, fold_case)
    return np.array([sc.score for sc in pool], dtype=np.float64)


# ---------------------------------------------------------------------------
# cross-format combination
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RankedRule:
    rule: Rule
    score: float
    execution: np.ndarray


def _branch_text(sc: ScoredCandidate, fmt: int) -> str:
    return f"IF {sc.candidate.dnf.render()} THEN {fmt}\n"


def _single_rule(sc: ScoredCandidate, fmt: int) -> RankedRule:
    execution = np.zeros(len(sc.matched), dtype=np.int64)
    execution[sc.matched] = fmt
    return RankedRule(Rule(((sc.candidate.dnf, fmt),)), sc.score, execution)


def combine_and_rank(
    per_format: Mapping[int, Sequence[Candidate]],
    task: Task,
    hypothesis: Hypothesis,
    model: RankerModel,
    top_k: int = 5,
    truth_by_render: Optional[dict[str, np.ndarray]] = None,
    fold_case: bool = False,
) -> list[RankedRule]:
    """Best-first search over the per-format candidate lattice.

    Combinations are visited in descending total-score order (ties to
    fewer literals, then rule text); one is kept iff its branches are
    pairwise disjoint on the column.  When the search finds nothing
    disjoint, each candidate falls back to a rule of its own.
    """
    if not per_format:
        return []
    for fmt, cands in per_format.items():
        if not cands:
            raise ValueError(f"empty candidate list for format {fmt}")
    formats = sorted(per_format)
    flat = [c for f in formats for c in per_format[f]]
    scored = score_pool(flat, task, hypothesis, model, truth_by_render, fold_case)

    lists: list[list[tuple[ScoredCandidate, str]]] = []
    pos = 0
    for f in formats:
        block = [(sc, _branch_text(sc, f)) for sc in scored[pos:pos + len(per_format[f])]]
        pos += len(per_format[f])
        block.sort(key=lambda e: (-e[0].score, e[0].features.literal_count, e[1]))
        lists.append(block)

    m = len(lists)

    def entry(idx: tuple[int, ...]):
        members = [lists[j][i] for j, i in enumerate(idx)]
        total = sum(e[0].score for e in members)
        literals = sum(e[0].features.literal_count for e in members)
        text = "".join(e[1] for e in members)
        return (-total, literals, text, idx)

    start = (0,) * m
    heap = [entry(start)]
    seen = {start}
    out: list[RankedRule] = []
    pops = 0
    while heap and pops < COMBINATION_BEAM and len(out) < top_k:
        neg_total, _, _, idx = heapq.heappop(heap)
        pops += 1
        members = [lists[j][i][0] for j, i in enumerate(idx)]
        disjoint = True
        for a in range(m):
            for b in range(a + 1, m):
                if (members[a].matched & members[b].matched).any():
                    disjoint = False
                    break
            if not disjoint:
                break
        if disjoint:
            rule = Rule(
                tuple((sc.candidate.dnf, f) for sc, f in zip(members, formats))
            )
            execution = np.zeros(len(task.column), dtype=np.int64)
            for sc, f in zip(members, formats):
                execution[sc.matched] = f
            out.append(RankedRule(rule, -neg_total, execution))
        for j in range(m):
            if idx[j] + 1 < len(lists[j]):
                nxt = idx[:j] + (idx[j] + 1,) + idx[j + 1:]
                if nxt not in seen:
                    seen.add(nxt)
                    heapq.heappush(heap, entry(nxt))

    if out or m == 1:
        return out

    # nothing disjoint: every candidate stands alone
    singles = [
        (e[0], formats[j]) for j, block in enumerate(lists) for e in block
    ]
    singles.sort(
        key=lambda p: (-p[0].score, p[0].features.literal_count, _branch_text(*p))
    )
    return [_single_rule(sc, f) for sc, f in singles[:top_k]]


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def loss_and_grad(
    params: np.ndarray, features: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean logistic loss and its gradient; params is weights then bias."""
    w, b = params[:-1], params[-1]
    z = features @ w + b
    loss = float(np.mean(np.logaddexp(0.0, z) - labels * z))
    g = (sigmoid(z) - labels) / len(labels)
    return loss, np.concatenate([features.T @ g, [g.sum()]])


def fit_logistic(
    features: np.ndarray,
    labels: np.ndarray,
    epochs: int = 800,
    lr: float = 0.5,
) -> tuple[np.ndarray, float, list[float]]:
    """Full-batch gradient descent from zero; returns (weights, bias, losses)."""
    params = np.zeros(features.shape[1] + 1, dtype=np.float64)
    losses = []
    for _ in range(epochs):
        loss, grad = loss_and_grad(params, features, labels)
        losses.append(loss)
        params = params - lr * grad
    return params[:-1], float(params[-1]), losses


def _reveals(task: Task, example_counts: Sequence[int]) -> list[tuple[int, ...]]:
    formatted = [i for i, c in enumerate(task.column.cells) if c.format != 0]
    out = []
    for k in example_counts:
        obs = tuple(formatted[: max(1, min(k, len(formatted)))])
        if obs and obs not in out:
            out.append(obs)
    return out


def _gold_vector(task: Task) -> np.ndarray:
    if task.gold_formats is not None:
        return np.asarray(task.gold_formats, dtype=np.int64)
    if task.gold_rule:
        return rule_execution(parse_rule(task.gold_rule), task.column)
    raise ValueError("training task needs gold_rule or gold_formats")


def harvest_training_rows(
    task: Task, config=None, example_counts: Sequence[int] = (1, 3, 5)
) -> tuple[np.ndarray, np.ndarray]:
    """Normalized candidate features and gold-match labels for one task.

    The task is replayed with the first 1/3/5 formatted cells revealed;
    each reveal runs the pipeline up to enumeration and labels every
    candidate by whether its match bitmap equals the gold cells of its
    format.  Normalization happens within each reveal's own pool, the
    same way scoring normalizes at suggestion time.
    """
    from cfsynth import engine  # deferred: engine imports this module
    from cfsynth.config import EngineConfig
    from cfsynth.predicates import generate_predicates

    config = config or EngineConfig()
    gold = _gold_vector(task)
    rows: list[np.ndarray] = []
    labels: list[float] = []
    for obs in _reveals(task, example_counts):
        sub = Task(task.column, obs)
        matrix = generate_predicates(
            sub.column, config.max_predicates, config.fold_case
        )
        if len(matrix) == 0:
            continue
        hyp = engine.pipeline_hypothesis(sub, matrix, config)
        pools = engine.candidate_pools(sub, matrix, hyp, config)
        flat = [c for f in sorted(pools) for c in pools[f]]
        if not flat:
            continue
        truth_by_render = dict(zip(matrix.renderings, matrix.truth.T))
        feats = []
        for c in flat:
            matched = dnf_matches(c.dnf, sub.column, truth_by_render, config.fold_case)
            feats.append(
                extract_features(c, sub, hyp, matched=matched).as_vector()
            )
            labels.append(float(np.array_equal(matched, gold == c.format)))
        rows.extend(normalize_minmax(np.stack(feats)))
    if not rows:
        return np.zeros((0, len(FEATURE_NAMES))), np.zeros(0)
    return np.stack(rows), np.array(labels, dtype=np.float64)


def train_ranker(
    training_tasks: Sequence[Task],
    config=None,
    example_counts: Sequence[int] = (1, 3, 5),
    epochs: int = 800,
    lr: float = 0.5,
) -> RankerModel:
    """Fit the logistic scorer on candidates harvested from gold tasks.

    A degenerate harvest (no rows, or a single class) falls back to the
    default model with a warning rather than fitting noise.
    """
    blocks = [
        harvest_training_rows(task, config, example_counts)
        for task in training_tasks
    ]
    xs = [x for x, _ in blocks if len(x)]
    ys = [y for _, y in blocks if len(y)]
    if not xs:
        warnings.warn("no candidates harvested; returning default ranker weights")
        return DEFAULT_MODEL
    features = np.vstack(xs)
    labels = np.concatenate(ys)
    if labels.min() == labels.max():
        warnings.warn(
            "single-class training set; returning default ranker weights"
        )
        return DEFAULT_MODEL
    w, b, _ = fit_logistic(features, labels, epochs, lr)
    return RankerModel(dict(zip(FEATURE_NAMES, w.tolist())), b)
