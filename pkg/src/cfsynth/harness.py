"""Synthetic task generation, benchmark running, and convergence studies.

Gold rules are sampled from the predicate pool of the very column they
format, which keeps every generated task expressible in the engine's
own grammar; the interesting question the benchmark answers is whether
the pipeline re-finds the rule from a handful of examples, not whether
the rule exists.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import date, timedelta
from typing import Optional, Sequence

import numpy as np

from cfsynth.column import Cell, CellType, Column, Task
from cfsynth.config import EngineConfig, config_hash
from cfsynth.dsl import (
    Clause,
    Dnf,
    Literal,
    Rule,
    exact_match,
    parse_rule,
    print_rule,
    rule_execution,
)
from cfsynth.engine import execution_match, learn
from cfsynth.predicates import generate_predicates

RESAMPLE_BUDGET = 200
NEGATION_P = 0.15

_CONSONANTS = "bcdfglmnprstvz"
_VOWELS = "aeiou"
_SEPARATORS = ("-", " ", "_")


@dataclass(frozen=True)
class GenSpec:
    """What kind of task to synthesize."""

    column_type: CellType
    n_cells: int = 60
    rule_depth: int = 2
    n_formats: int = 1

    def __post_init__(self) -> None:
        if self.n_cells < 5:
            raise ValueError("n_cells must be at least 5")
        if not 1 <= self.rule_depth <= 3:
            raise ValueError("rule_depth must be 1, 2, or 3")
        if self.n_formats < 1:
            raise ValueError("n_formats must be at least 1")


def spec_from_obj(obj: dict) -> GenSpec:
    kinds = {t.value: t for t in CellType}
    if obj.get("column_type") not in kinds:
        raise ValueError(
            f"column_type must be one of {sorted(kinds)}, got {obj.get('column_type')!r}"
        )
    return GenSpec(
        column_type=kinds[obj["column_type"]],
        n_cells=int(obj.get("n_cells", 60)),
        rule_depth=int(obj.get("rule_depth", 2)),
        n_formats=int(obj.get("n_formats", 1)),
    )


# ---------------------------------------------------------------------------
# column sampling
# ---------------------------------------------------------------------------

def _word(rng: np.random.Generator) -> str:
    n = int(rng.integers(2, 4))
    return "".join(
        _CONSONANTS[rng.integers(len(_CONSONANTS))] + _VOWELS[rng.integers(len(_VOWELS))]
        for _ in range(n)
    )


def _text_vocab(rng: np.random.Generator) -> list[str]:
    vocab = [_word(rng) for _ in range(int(rng.integers(2, 5)))]
    # one shared-prefix family so token and prefix constants have bite
    head = _word(rng)
    sep = _SEPARATORS[rng.integers(len(_SEPARATORS))]
    for _ in range(int(rng.integers(2, 4))):
        vocab.append(f"{head}{sep}{_word(rng)}")
    return vocab


def _weighted_pool(rng: np.random.Generator, pool: np.ndarray, n: int) -> np.ndarray:
    # uneven draw frequencies give columns the clumpy look of real sheets
    w = rng.dirichlet(np.ones(len(pool)))
    return rng.choice(pool, size=n, p=w)


def _numeric_values(rng: np.random.Generator, n: int) -> list[float]:
    style = rng.choice(4, p=[0.35, 0.25, 0.3, 0.1])
    if style == 0:  # small set of repeating integers
        lo = int(rng.integers(-20, 50))
        pool = rng.choice(np.arange(lo, lo + int(rng.integers(15, 80))),
                          size=int(rng.integers(3, 11)), replace=False)
        return [float(v) for v in _weighted_pool(rng, pool, n)]
    if style == 1:  # round numbers (prices, quotas)
        step = int(rng.choice([5, 10, 25, 100]))
        pool = step * rng.choice(np.arange(1, 40),
                                 size=int(rng.integers(4, 13)), replace=False)
        return [float(v) for v in _weighted_pool(rng, pool, n)]
    if style == 2:  # two separated value clusters, each with repeats
        a = int(rng.integers(-50, 0))
        b = int(rng.integers(100, 400))
        lows = rng.choice(np.arange(a, a + 30), size=int(rng.integers(2, 6)), replace=False)
        highs = rng.choice(np.arange(b, b + 50), size=int(rng.integers(2, 6)), replace=False)
        pick = rng.random(n) < rng.uniform(0.25, 0.75)
        lo_draw = _weighted_pool(rng, lows, n)
        hi_draw = _weighted_pool(rng, highs, n)
        return [float(h if p else l) for p, l, h in zip(pick, lo_draw, hi_draw)]
    # wide spread, few repeats: the hard tail
    lo = int(rng.integers(-100, 50))
    return [float(v) for v in rng.integers(lo, lo + int(rng.integers(100, 300)), n)]


def _date_values(rng: np.random.Generator, n: int) -> list[date]:
    base = date(2019, 1, 6)
    style = rng.choice(3, p=[0.4, 0.35, 0.25])
    if style == 0:  # a handful of recurring dates (deadlines, events)
        pool = rng.choice(np.arange(0, int(rng.integers(180, 720))),
                          size=int(rng.integers(3, 9)), replace=False)
        return [base + timedelta(days=int(d)) for d in _weighted_pool(rng, pool, n)]
    if style == 1:  # activity concentrated in a few months
        months = rng.choice(np.arange(24), size=int(rng.integers(2, 5)), replace=False)
        days = rng.choice(np.arange(28), size=int(rng.integers(2, 6)), replace=False)
        out = []
        for _ in range(n):
            m = int(rng.choice(months))
            start = date(2019 + m // 12, m % 12 + 1, 1)
            out.append(start + timedelta(days=int(rng.choice(days))))
        return out
    # spread across a span: the hard tail
    span = 365 if rng.random() < 0.5 else 4 * 365
    return [base + timedelta(days=int(d)) for d in rng.integers(0, span, n)]


def _sample_values(rng: np.random.Generator, spec: GenSpec) -> list:
    n = spec.n_cells
    if spec.column_type is CellType.NUMBER:
        return _numeric_values(rng, n)
    if spec.column_type is CellType.TEXT:
        vocab = _text_vocab(rng)
        return [vocab[i] for i in rng.integers(len(vocab), size=n)]
    return _date_values(rng, n)


# ---------------------------------------------------------------------------
# rule sampling
# ---------------------------------------------------------------------------

def _sample_depth(rng: np.random.Generator, max_depth: int) -> int:
    # weighted toward max_depth; rejection sampling later skews shallow,
    # and flat-uniform drifts the corpus mean below the 1.5 floor
    weights = np.array((1.0, 2.0, 2.0)[:max_depth])
    return int(rng.choice(np.arange(1, max_depth + 1), p=weights / weights.sum()))


def _sample_dnf(rng: np.random.Generator, predicates, depth: int) -> Optional[Dnf]:
    picks = [predicates[rng.integers(len(predicates))] for _ in range(depth)]
    lits = [Literal(p, bool(rng.random() < NEGATION_P)) for p in picks]
    try:
        if depth == 1 or rng.random() < 0.5:
            # one clause per literal, joined by OR
            clauses = tuple(Clause((lit,)) for lit in lits)
        else:
            cut = int(rng.integers(1, depth))
            clauses = (Clause(tuple(lits[:cut])), *(Clause((l,)) for l in lits[cut:]))
        return Dnf(clauses)
    except ValueError:
        return None  # duplicate or contradictory picks


def generate_task(seed: int, spec: GenSpec) -> Task:
    """One reproducible synthetic task with gold rule and gold formats.

    Rejection-samples until the gold rule formats at least two cells,
    leaves at least one unformatted, and uses every branch format.
    """
    for attempt in range(RESAMPLE_BUDGET):
        rng = np.random.default_rng([seed, attempt])
        values = _sample_values(rng, spec)
        bare = Column(
            tuple(Cell(v, spec.column_type) for v in values)
        )
        matrix = generate_predicates(bare)
        if len(matrix) == 0:
            continue
        branches = []
        for f in range(1, spec.n_formats + 1):
            depth = _sample_depth(rng, spec.rule_depth)
            dnf = _sample_dnf(rng, matrix.predicates, depth)
            if dnf is None:
                break
            branches.append((dnf, f))
        if len(branches) < spec.n_formats:
            continue
        try:
            rule = Rule(tuple(branches))
        except ValueError:
            continue
        execution = rule_execution(rule, bare)
        formatted = int((execution != 0).sum())
        # both classes need real mass or the task is unlearnable noise
        if formatted < 2 or len(values) - formatted < max(1, len(values) // 5):
            continue
        # the first five formatted cells must witness every distinct
        # (value, format) pair: a rule whose effect shows kinds no early
        # example covers cannot be recovered from examples by anyone
        fmt_idx = np.flatnonzero(execution)
        kinds = {(values[i], int(execution[i])) for i in fmt_idx}
        early = {(values[i], int(execution[i])) for i in fmt_idx[:5]}
        if kinds != early:
            continue
        if set(np.unique(execution[execution != 0]).tolist()) != set(
            range(1, spec.n_formats + 1)
        ):
            continue
        cells = tuple(
            Cell(v, spec.column_type, int(execution[i])) for i, v in enumerate(values)
        )
        first = int(np.flatnonzero(execution)[0])
        return Task(
            Column(cells),
            (first,),
            gold_rule=print_rule(rule),
            gold_formats=tuple(int(x) for x in execution),
        )
    raise RuntimeError(
        f"resample budget exhausted for seed {seed} and spec {spec}"
    )


def reveal(task: Task, k: int, mode: str = "first", seed: int = 0) -> Task:
    """The same task with the observed set reduced to k formatted cells.

    ``first`` picks them top-down in column order, matching how people
    annotate; ``random`` draws them with the given seed.
    """
    formatted = [i for i, c in enumerate(task.column.cells) if c.format != 0]
    if not formatted:
        raise ValueError("task has no formatted cells to reveal")
    k = max(1, min(k, len(formatted)))
    if mode == "first":
        obs = tuple(formatted[:k])
    elif mode == "random":
        rng = np.random.default_rng(seed)
        obs = tuple(sorted(rng.choice(formatted, size=k, replace=False).tolist()))
    else:
        raise ValueError(f"unknown reveal mode {mode!r}")
    return Task(task.column, obs, task.gold_rule, task.gold_formats)


# ---------------------------------------------------------------------------
# benchmark
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkRow:
    task_index: int
    column_type: str
    example_count: int
    found: bool
    execution_match: bool
    exact_match: bool
    hit_depth: Optional[int]
    runtime_s: float


@dataclass(frozen=True)
class BenchmarkReport:
    rows: tuple[BenchmarkRow, ...]
    example_counts: tuple[int, ...]
    config_digest: str

    def aggregate(self, by_type: bool = False) -> dict:
        """Mean metrics recomputed from the rows, keyed by example count
        (or by "type/count" when ``by_type``)."""
        groups: dict[str, list[BenchmarkRow]] = {}
        for row in self.rows:
            key = (
                f"{row.column_type}/{row.example_count}"
                if by_type
                else str(row.example_count)
            )
            groups.setdefault(key, []).append(row)
        out = {}
        for key, rows in sorted(groups.items()):
            n = len(rows)
            out[key] = {
                "n": n,
                "execution_match": sum(r.execution_match for r in rows) / n,
                "exact_match": sum(r.exact_match for r in rows) / n,
                "found": sum(r.found for r in rows) / n,
                "mean_runtime_s": sum(r.runtime_s for r in rows) / n,
            }
        return out

    def to_obj(self) -> dict:
        return {
            "config_hash": self.config_digest,
            "example_counts": list(self.example_counts),
            "rows": [vars(r) for r in self.rows],
            "by_examples": self.aggregate(),
            "by_type_and_examples": self.aggregate(by_type=True),
        }


def _evaluate(task: Task, k: int, config: EngineConfig, index: int) -> BenchmarkRow:
    sub = reveal(task, k)
    start = time.perf_counter()
    result = learn(sub, config)
    elapsed = time.perf_counter() - start
    gold = parse_rule(task.gold_rule) if task.gold_rule else None
    hit_depth = None
    top_match = False
    top_exact = False
    for rank, ranked in enumerate(result.rules, start=1):
        if execution_match(ranked.rule, sub):
            hit_depth = rank
            break
    if result.rules:
        top_match = execution_match(result.rules[0].rule, sub)
        if gold is not None:
            top_exact = exact_match(result.rules[0].rule, gold)
    return BenchmarkRow(
        task_index=index,
        column_type=task.column.dominant_type.value,
        example_count=k,
        found=bool(result.rules),
        execution_match=top_match,
        exact_match=top_exact,
        hit_depth=hit_depth,
        runtime_s=elapsed,
    )


def run_benchmark(
    tasks: Sequence[Task],
    example_counts: Sequence[int] = (1, 3, 5),
    config: Optional[EngineConfig] = None,
    workers: int = 0,
) -> BenchmarkReport:
    """Learn every task at every reveal size and collect per-run metrics.

    Tasks must carry gold_formats; gold_rule is optional (exact match is
    reported false without it).  ``workers`` > 1 fans runs out to a
    process pool; rows come back keyed by task index, so the report is
    identical to a serial run apart from runtimes.
    """
    config = config or EngineConfig()
    for i, task in enumerate(tasks):
        if task.gold_formats is None:
            raise ValueError(f"task {i} has no gold_formats")
    jobs = [(task, k, config, i) for i, task in enumerate(tasks) for k in example_counts]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_evaluate_job, jobs, chunksize=8))
        rows.sort(key=lambda r: (r.task_index, r.example_count))
    else:
        rows = [_evaluate(*job) for job in jobs]
    return BenchmarkReport(tuple(rows), tuple(example_counts), config_hash(config))


def _evaluate_job(job) -> BenchmarkRow:
    return _evaluate(*job)


# ---------------------------------------------------------------------------
# convergence studies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StudyRow:
    axis_value: int
    column_type: str
    mean_execution_match: float
    n: int


def _truncate_unformatted(task: Task, keep: int) -> Task:
    """Drop all but the first ``keep`` unformatted cells, keeping order."""
    chosen = []
    seen_unformatted = 0
    for i, cell in enumerate(task.column.cells):
        if cell.format != 0:
            chosen.append(i)
        elif seen_unformatted < keep:
            chosen.append(i)
            seen_unformatted += 1
    cells = tuple(task.column.cells[i] for i in chosen)
    gold = (
        tuple(task.gold_formats[i] for i in chosen)
        if task.gold_formats is not None
        else None
    )
    first = next(j for j, c in enumerate(cells) if c.format != 0)
    return Task(Column(cells), (first,), task.gold_rule, gold)


def convergence_study(
    tasks: Sequence[Task],
    axis: str,
    values: Sequence[int],
    config: Optional[EngineConfig] = None,
    examples: int = 3,
) -> list[StudyRow]:
    """Mean execution match by column type along one difficulty axis.

    ``axis`` is "examples" (reveal budget sweeps over ``values``) or
    "unformatted" (available unformatted cells sweep, with a fixed
    ``examples`` reveal).  On the unformatted axis the learner sees only
    the truncated window but the learned rule is scored against the full
    column, so the metric measures generalization from the window rather
    than fit to a test set that shrinks with the axis.
    """
    if list(values) != sorted(values):
        raise ValueError("axis values must be sorted ascending")
    if axis not in ("examples", "unformatted"):
        raise ValueError(f"unknown axis {axis!r}")
    config = config or EngineConfig()
    out: list[StudyRow] = []
    for v in values:
        hits: dict[str, list[bool]] = {}
        for task in tasks:
            if axis == "examples":
                sub = scored_on = reveal(task, v)
            else:
                sub = reveal(_truncate_unformatted(task, v), examples)
                scored_on = task
            result = learn(sub, config)
            ok = bool(result.rules) and execution_match(
                result.rules[0].rule, scored_on
            )
            hits.setdefault(sub.column.dominant_type.value, []).append(ok)
        for ctype, flags in sorted(hits.items()):
            out.append(
                StudyRow(int(v), ctype, sum(flags) / len(flags), len(flags))
            )
    return out


def write_plot_data(rows: Sequence[StudyRow], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["axis_value", "column_type", "mean_execution_match", "n"])
        for row in rows:
            writer.writerow(
                [row.axis_value, row.column_type, row.mean_execution_match, row.n]
            )
