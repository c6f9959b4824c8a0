"""End-to-end pipeline: predicates -> labels -> trees -> ranked rules."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from cfsynth.clustering import Hypothesis, hypothesize
from cfsynth.column import Cell, Column, Task, soft_negatives
from cfsynth.config import EngineConfig
from cfsynth.dsl import Rule, canonicalize_dnf, print_rule, rule_execution
from cfsynth.predicates import PredicateMatrix, generate_predicates
from cfsynth.ranking import (
    DEFAULT_MODEL,
    RankedRule,
    RankerModel,
    combine_and_rank,
    load_model,
)
from cfsynth.tree import Candidate, enumerate_rules, one_vs_all_labels


@dataclass(frozen=True)
class Diagnostics:
    """What each stage produced, mainly for the no-rule case."""

    predicate_count: int
    soft_negative_count: int
    formats: tuple[int, ...]
    candidate_counts: dict[int, int]
    failure: Optional[str] = None


@dataclass(frozen=True, eq=False)
class LearnResult:
    rules: tuple[RankedRule, ...]
    diagnostics: Diagnostics


def ranker_for(config: EngineConfig) -> RankerModel:
    if config.ranker_model:
        return load_model(config.ranker_model)
    return DEFAULT_MODEL


def pipeline_hypothesis(
    task: Task, matrix: PredicateMatrix, config: EngineConfig
) -> Hypothesis:
    negatives = (
        soft_negatives(task) if config.negatives_mode != "none" else frozenset()
    )
    return hypothesize(
        task,
        matrix,
        negatives,
        config.clustering_enabled,
        config.max_iter,
        config.distance_combiner,
        config.unknown_cluster_candidate,
    )


def candidate_pools(
    task: Task,
    matrix: PredicateMatrix,
    hypothesis: Hypothesis,
    config: EngineConfig,
) -> dict[int, list[Candidate]]:
    """Canonicalized, deduplicated candidates per observed format.

    Formats whose enumeration comes back empty are simply absent from
    the result; the caller decides whether that sinks the whole task.
    """
    pools: dict[int, list[Candidate]] = {}
    max_iterations = (
        config.max_enum_iterations if config.iterative_enumeration_enabled else 1
    )
    for fmt in sorted(set(task.observed_formats.values())):
        labels = one_vs_all_labels(
            hypothesis,
            fmt,
            config.observed_weight,
            config.negatives_mode,
            config.weight_soft_negatives,
        )
        result = enumerate_rules(
            task.column,
            matrix,
            labels,
            fmt,
            config.lambda_a,
            config.lambda_n,
            config.negatives_mode == "hard",
            max_iterations,
            config.fold_case,
        )
        raw = list(result.candidates)
        if not raw and result.fallback is not None:
            raw = [result.fallback]
        seen: set[str] = set()
        pool: list[Candidate] = []
        for c in raw:
            dnf = canonicalize_dnf(c.dnf)
            if dnf is None:
                continue
            text = dnf.render()
            if text in seen:
                continue
            seen.add(text)
            pool.append(
                Candidate(dnf, c.format, c.tree_accuracy, c.node_count, c.iteration)
            )
        if pool:
            pools[fmt] = pool
    return pools


def _observed_consistent(execution: np.ndarray, task: Task) -> bool:
    return all(
        int(execution[i]) == f for i, f in task.observed_formats.items()
    )


def learn(task: Task, config: Optional[EngineConfig] = None) -> LearnResult:
    """Ranked rule suggestions for a task, or a diagnosed empty result."""
    config = config or EngineConfig()
    model = ranker_for(config)
    matrix = generate_predicates(task.column, config.max_predicates, config.fold_case)
    negatives = (
        soft_negatives(task) if config.negatives_mode != "none" else frozenset()
    )
    formats = tuple(sorted(set(task.observed_formats.values())))

    def diag(counts: dict[int, int], failure: Optional[str]) -> Diagnostics:
        return Diagnostics(
            predicate_count=len(matrix),
            soft_negative_count=len(negatives),
            formats=formats,
            candidate_counts=counts,
            failure=failure,
        )

    if len(matrix) == 0:
        return LearnResult((), diag({}, "predicate generation produced nothing"))
    hypothesis = pipeline_hypothesis(task, matrix, config)
    pools = candidate_pools(task, matrix, hypothesis, config)
    counts = {f: len(pools.get(f, [])) for f in formats}
    missing = [f for f in formats if f not in pools]
    if missing:
        names = ", ".join(str(f) for f in missing)
        return LearnResult((), diag(counts, f"no consistent candidate for format {names}"))
    truth_by_render = dict(zip(matrix.renderings, matrix.truth.T))
    ranked = combine_and_rank(
        pools, task, hypothesis, model, config.top_k, truth_by_render, config.fold_case
    )
    kept = tuple(
        r for r in ranked if _observed_consistent(r.execution, task)
    )
    failure = None if kept else "no observed-consistent combination of formats"
    return LearnResult(kept, diag(counts, failure))


def execution_match(rule: Rule, task: Task) -> bool:
    """Whether a rule reproduces the gold formatting up to format renaming.

    The renaming is anchored at the observed cells: each predicted
    format must map one-to-one onto the gold format of its exemplars.
    """
    if task.gold_formats is None:
        raise ValueError("task has no gold formats")
    predicted = rule_execution(rule, task.column)
    gold = np.asarray(task.gold_formats, dtype=np.int64)
    mapping: dict[int, int] = {}
    for i in task.observed:
        p, g = int(predicted[i]), int(gold[i])
        if p == 0:
            return False
        if mapping.setdefault(p, g) != g:
            return False
    if len(set(mapping.values())) != len(mapping):
        return False
    relabeled = np.array([mapping.get(int(v), int(v)) for v in predicted])
    return bool((relabeled == gold).all())


def simplify_against_column(
    rule: Rule, column: Column, config: Optional[EngineConfig] = None
) -> Rule:
    """A rule with at most as many literals and identical execution.

    The rule's own output becomes a fully-observed task, the pipeline
    relearns it, and the smallest relearned rule with byte-identical
    execution wins; anything else returns the input untouched.
    """
    config = config or EngineConfig()
    execution = rule_execution(rule, column, fold_case=config.fold_case)
    if not (execution != 0).any():
        return rule
    cells = tuple(
        Cell(c.value, c.cell_type, int(execution[i]))
        for i, c in enumerate(column.cells)
    )
    relearn_col = Column(cells)
    observed = tuple(int(i) for i in np.flatnonzero(execution != 0))
    result = learn(Task(relearn_col, observed), config)
    best = rule
    best_key = (rule.literal_count(), print_rule(rule))
    for ranked in result.rules:
        if not np.array_equal(ranked.execution, execution):
            continue
        key = (ranked.rule.literal_count(), print_rule(ranked.rule))
        if key[0] < best_key[0]:
            best, best_key = ranked.rule, key
    return best
