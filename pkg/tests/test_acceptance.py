"""Acceptance gate: every shipped guarantee, one printed verdict line each.

Each test prints `[acceptance] <name>: PASS|FAIL (<measurements>)` before
asserting, so the full ledger of guarantees is visible in one place even
when a criterion fails.  Seeds are frozen; thresholds live in the
constants below and are not tuned per run.

Known honest failure: `unformatted_convergence_flatness`.  Top-1 accuracy
on number columns declines as the unformatted window grows, because the
cluster-assignment score's max-distance term grows with value coverage
while candidate pools are label-determined, so window-induced label noise
evicts the true rule.  Measured around 4 points from 30 to 100 cells
against a 2-point flatness budget; see README "Known limitations".

The interactive-client loop is exercised end to end by the frontend
package's own test suite, not here.
"""

import time
from datetime import date, timedelta

import numpy as np
import pytest

from cfsynth.column import Cell, CellType, Column, Task, soft_negatives
from cfsynth.config import ABLATIONS, EngineConfig, apply_ablation
from cfsynth.clustering import cluster_labels, hypothesize
from cfsynth.dsl import (
    Clause,
    Dnf,
    Literal,
    Rule,
    canonicalize,
    exact_match,
    parse_rule,
    print_rule,
    rule_execution,
)
from cfsynth.engine import learn
from cfsynth.harness import GenSpec, convergence_study, generate_task, reveal, run_benchmark
from cfsynth.predicates import PredicateMatrix, generate_predicates
from cfsynth.ranking import FEATURE_NAMES, RankerModel, combine_and_rank, loss_and_grad, score_pool
from cfsynth.tree import Candidate, Leaf, Split, eval_tree, tree_to_dnf

from oracles import brute_cluster, brute_combinations

FUZZ_TASKS = 10_000
FUZZ_BUDGET_S = 300.0
TREE_COUNT = 1_000
COLUMN_COUNT = 1_000
RULE_COUNT = 1_000
CLUSTER_FUZZ = 1_000
CLUSTER_BRUTE = 100
BENCH_FLOOR = 0.80
MONOTONE_TOL = 0.02
ABLATION_TOL = 0.02
FLATNESS_TOL = 0.02
RANKER_INSTANCES = 80
GRAD_RTOL = 1e-5
PERF_BUDGET_S = 2.0

TYPES = (CellType.NUMBER, CellType.TEXT, CellType.DATE)


def _report(capsys, name, ok, detail):
    with capsys.disabled():
        print(f"[acceptance] {name}: {'PASS' if ok else 'FAIL'} ({detail})", flush=True)
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# shared fuzzers
# ---------------------------------------------------------------------------

_WORDS = ("alpha", "beta", "gamma", "delta-1", "delta-2", "ok", "n/a", "todo")


def random_column(rng, n=None):
    n = n or int(rng.integers(6, 25))
    kind = int(rng.integers(0, 3))
    if kind == 0:
        pool = rng.integers(-20, 200, size=int(rng.integers(2, 9)))
        vals = [float(rng.choice(pool)) for _ in range(n)]
        ctype = CellType.NUMBER
    elif kind == 1:
        hi = int(rng.integers(2, len(_WORDS) + 1))
        vals = [_WORDS[int(rng.integers(0, hi))] for _ in range(n)]
        ctype = CellType.TEXT
    else:
        base = date(2021, 3, 1)
        offs = rng.integers(0, 400, size=int(rng.integers(2, 7)))
        vals = [base + timedelta(days=int(rng.choice(offs))) for _ in range(n)]
        ctype = CellType.DATE
    return vals, ctype


def random_task(rng):
    """Unconstrained task: any column, any format split, any observed subset."""
    vals, ctype = random_column(rng)
    n = len(vals)
    n_fmt = int(rng.integers(1, 3))
    k = int(rng.integers(n_fmt, max(n_fmt + 1, n // 2)))
    idx = rng.permutation(n)[:k]
    fmts = {int(i): 1 + (pos % n_fmt) for pos, i in enumerate(idx)}
    cells = tuple(Cell(v, ctype, fmts.get(i, 0)) for i, v in enumerate(vals))
    formatted = sorted(fmts)
    n_obs = int(rng.integers(1, len(formatted) + 1))
    observed = tuple(sorted(int(i) for i in rng.permutation(formatted)[:n_obs]))
    return Task(Column(cells), observed)


# ---------------------------------------------------------------------------
# 1. every returned rule reproduces every observed example
# ---------------------------------------------------------------------------

def test_observed_consistency(capsys):
    rng = np.random.default_rng(20260822)
    cfg = EngineConfig()
    violations = 0
    rules_checked = 0
    t0 = time.perf_counter()
    for _ in range(FUZZ_TASKS):
        task = random_task(rng)
        for rr in learn(task, cfg).rules:
            rules_checked += 1
            ex = rule_execution(rr.rule, task.column)
            for i in task.observed:
                if ex[i] != task.column.cells[i].format:
                    violations += 1
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and elapsed < FUZZ_BUDGET_S
    _report(
        capsys,
        "observed_consistency",
        ok,
        f"{FUZZ_TASKS} tasks, {rules_checked} rules, {violations} violations, {elapsed:.0f}s",
    )


# ---------------------------------------------------------------------------
# 2. DNF extraction agrees with tree evaluation on every input
# ---------------------------------------------------------------------------

def _random_tree(rng, depth, used=frozenset()):
    avail = [f for f in range(10) if f not in used]
    if depth == 0 or not avail or rng.random() < 0.25:
        return Leaf(bool(rng.integers(0, 2)))
    f = int(rng.choice(avail))
    nxt = used | {f}
    return Split(f, _random_tree(rng, depth - 1, nxt), _random_tree(rng, depth - 1, nxt))


def _has_positive_leaf(node):
    if isinstance(node, Leaf):
        return node.label
    return _has_positive_leaf(node.true_branch) or _has_positive_leaf(node.false_branch)


def test_tree_rule_extraction_oracle(capsys):
    base = generate_predicates(
        Column(tuple(Cell(float(v), CellType.NUMBER, 0) for v in range(12)))
    )
    matrix = PredicateMatrix(base.predicates[:10], base.truth[:, :10])
    index_of = {p: j for j, p in enumerate(matrix.predicates)}
    rows = np.array([[(i >> j) & 1 for j in range(10)] for i in range(1024)], dtype=bool)

    def dnf_truth(dnf):
        out = np.zeros(1024, dtype=bool)
        for clause in dnf.clauses:
            acc = np.ones(1024, dtype=bool)
            for lit in clause.literals:
                col = rows[:, index_of[lit.predicate]]
                acc &= ~col if lit.negated else col
            out |= acc
        return out

    rng = np.random.default_rng(7)
    mismatches = 0
    made = 0
    while made < TREE_COUNT:
        tree = _random_tree(rng, int(rng.integers(1, 7)))
        if isinstance(tree, Leaf) or not _has_positive_leaf(tree):
            continue
        made += 1
        dnf = tree_to_dnf(tree, matrix)
        expected = np.array([eval_tree(tree, r) for r in rows])
        if not (dnf_truth(dnf) == expected).all():
            mismatches += 1
    _report(
        capsys,
        "tree_rule_extraction_oracle",
        mismatches == 0,
        f"{TREE_COUNT} trees x 1024 inputs, {mismatches} mismatches",
    )


# ---------------------------------------------------------------------------
# 3. predicate matrix: strict subsets, unique truth columns
# ---------------------------------------------------------------------------

def test_predicate_matrix_invariants(capsys):
    rng = np.random.default_rng(99)
    trivial = 0
    duplicated = 0
    for _ in range(COLUMN_COUNT):
        vals, ctype = random_column(rng)
        matrix = generate_predicates(Column(tuple(Cell(v, ctype, 0) for v in vals)))
        truth = matrix.truth
        if truth.shape[1] == 0:
            continue
        if truth.all(axis=0).any() or (~truth).all(axis=0).any():
            trivial += 1
        if len({truth[:, j].tobytes() for j in range(truth.shape[1])}) != truth.shape[1]:
            duplicated += 1
    _report(
        capsys,
        "predicate_matrix_invariants",
        trivial == 0 and duplicated == 0,
        f"{COLUMN_COUNT} columns, {trivial} trivial-column violations, {duplicated} duplicate-column violations",
    )


# ---------------------------------------------------------------------------
# 4. clustering: pins never move, bounded loop, equals brute-force replay
# ---------------------------------------------------------------------------

def _cluster_instance(rng, max_n):
    n = int(rng.integers(3, max_n + 1))
    m = int(rng.integers(0, 7))
    truth = rng.random((n, m)) < 0.5
    obs = sorted(int(i) for i in rng.permutation(n)[: int(rng.integers(1, min(3, n) + 1))])
    fmts = {i: int(rng.integers(1, 4)) for i in obs}
    rest = [i for i in range(n) if i not in fmts]
    n_neg = int(rng.integers(0, len(rest) + 1)) if rest else 0
    negs = tuple(sorted(int(i) for i in rng.permutation(rest)[:n_neg]))
    cells = tuple(Cell(float(i), CellType.NUMBER, fmts.get(i, 0)) for i in range(n))
    task = Task(Column(cells), tuple(obs))
    combiner = ("sum", "mean", "lexicographic")[int(rng.integers(0, 3))]
    return task, PredicateMatrix((), truth), negs, combiner, bool(rng.integers(0, 2))


def test_clustering_constraints(capsys):
    rng = np.random.default_rng(11)
    pin_moves = 0
    for _ in range(CLUSTER_FUZZ):
        task, matrix, negs, combiner, uc = _cluster_instance(rng, 20)
        labels = cluster_labels(
            task, matrix, negs, combiner=combiner, unknown_is_candidate=uc
        )
        for i in task.observed:
            if labels[i] != task.column.cells[i].format:
                pin_moves += 1
        for i in negs:
            if labels[i] != 0:
                pin_moves += 1
    brute_mismatches = 0
    for _ in range(CLUSTER_BRUTE):
        task, matrix, negs, combiner, uc = _cluster_instance(rng, 12)
        fast = cluster_labels(
            task, matrix, negs, combiner=combiner, unknown_is_candidate=uc
        )
        slow = brute_cluster(
            task, matrix, negs, combiner=combiner, unknown_is_candidate=uc
        )
        if fast.tolist() != slow.tolist():
            brute_mismatches += 1
    ok = pin_moves == 0 and brute_mismatches == 0
    _report(
        capsys,
        "clustering_constraints",
        ok,
        f"{CLUSTER_FUZZ} fuzzed runs (all returned within the iteration cap), "
        f"{pin_moves} pin moves; {CLUSTER_BRUTE} brute replays, {brute_mismatches} mismatches",
    )


# ---------------------------------------------------------------------------
# 5. canonicalization never changes execution; between == bound pair
# ---------------------------------------------------------------------------

def _random_rule(rng, matrix):
    lits = [
        Literal(
            matrix.predicates[int(rng.integers(0, len(matrix)))],
            bool(rng.random() < 0.3),
        )
        for _ in range(int(rng.integers(1, 5)))
    ]
    clauses = []
    pos = 0
    while pos < len(lits):
        size = int(rng.integers(1, min(3, len(lits) - pos) + 1))
        clauses.append(Clause(tuple(lits[pos:pos + size])))
        pos += size
    return Rule(((Dnf(tuple(clauses)), 1),))


def test_canonicalizer_preserves_execution(capsys):
    rng = np.random.default_rng(3)
    drift = 0
    made = 0
    while made < RULE_COUNT:
        vals, ctype = random_column(rng)
        column = Column(tuple(Cell(v, ctype, 0) for v in vals))
        matrix = generate_predicates(column)
        if len(matrix) == 0:
            continue
        try:
            rule = _random_rule(rng, matrix)
        except ValueError:  # contradictory draw
            continue
        made += 1
        before = rule_execution(rule, column)
        after = rule_execution(canonicalize(rule), column)
        if not (before == after).all():
            drift += 1

    pair_failures = 0
    for _ in range(200):
        a = int(rng.integers(-20, 190))
        b = a + int(rng.integers(1, 40))
        wide = parse_rule(f"IF between(c, {a}, {b}) THEN 1\n")
        pair = parse_rule(f"IF greaterEquals(c, {a}) AND lessEquals(c, {b}) THEN 1\n")
        if not exact_match(wide, pair):
            pair_failures += 1
        lo = int(rng.integers(1, 20))
        hi = lo + int(rng.integers(1, 8))
        wide_d = parse_rule(f"IF between(c, {lo}, {hi}, day) THEN 1\n")
        pair_d = parse_rule(
            f"IF greaterEquals(c, {lo}, day) AND lessEquals(c, {hi}, day) THEN 1\n"
        )
        if not exact_match(wide_d, pair_d):
            pair_failures += 1
    ok = drift == 0 and pair_failures == 0
    _report(
        capsys,
        "canonicalizer_preserves_execution",
        ok,
        f"{RULE_COUNT} rules pointwise stable ({drift} drifted); "
        f"400 between/bound pairs, {pair_failures} not exact-equal",
    )


# ---------------------------------------------------------------------------
# 6 + 7. benchmark floor, example monotonicity, ablation direction
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def bench_tasks():
    tasks = []
    i = 0
    while len(tasks) < 200:
        spec = GenSpec(
            TYPES[i % 3], n_cells=60, rule_depth=2, n_formats=2 if i % 6 == 5 else 1
        )
        try:
            tasks.append(generate_task(5000 + i, spec))
        except RuntimeError:
            pass  # a rare seed cannot satisfy the task filters; skip it
        i += 1
    return tasks


@pytest.fixture(scope="module")
def bench_aggregate(bench_tasks):
    return run_benchmark(bench_tasks, example_counts=(1, 3, 5)).aggregate()


def test_benchmark_execution_match(capsys, bench_aggregate):
    e1 = bench_aggregate["1"]["execution_match"]
    e3 = bench_aggregate["3"]["execution_match"]
    e5 = bench_aggregate["5"]["execution_match"]
    ok = (
        e5 >= BENCH_FLOOR
        and e5 >= e3 - MONOTONE_TOL
        and e3 >= e1 - MONOTONE_TOL
    )
    _report(
        capsys,
        "benchmark_execution_match",
        ok,
        f"200 tasks: match@1={e1:.3f} @3={e3:.3f} @5={e5:.3f}, floor {BENCH_FLOOR:.2f}",
    )


def test_ablation_direction(capsys, bench_tasks, bench_aggregate):
    full = bench_aggregate["5"]["execution_match"]
    scores = {}
    worst_gap = 0.0
    for name in ABLATIONS:
        rep = run_benchmark(
            bench_tasks, example_counts=(5,), config=apply_ablation(EngineConfig(), name)
        )
        scores[name] = rep.aggregate()["5"]["execution_match"]
        worst_gap = max(worst_gap, scores[name] - full)
    ok = worst_gap <= ABLATION_TOL
    detail = ", ".join(f"{k}={v:.3f}" for k, v in scores.items())
    _report(
        capsys,
        "ablation_direction",
        ok,
        f"full={full:.3f} vs {detail} (worst gap {worst_gap*100:.1f}pts)",
    )


# ---------------------------------------------------------------------------
# 8. combination search equals exhaustive argmax; analytic gradient
# ---------------------------------------------------------------------------

def _scored_lists(per_format, task, hyp, model):
    formats = sorted(per_format)
    flat = [c for f in formats for c in per_format[f]]
    pool = score_pool(flat, task, hyp, model)
    lists, pos = [], 0
    for f in formats:
        block = []
        for sc in pool[pos:pos + len(per_format[f])]:
            text = f"IF {sc.candidate.dnf.render()} THEN {f}\n"
            block.append((sc.score, sc.features.literal_count, text, sc.matched))
        pos += len(per_format[f])
        lists.append(block)
    return lists


def test_ranker_combination_oracle_and_gradient(capsys):
    rng = np.random.default_rng(17)
    top1_mismatches = 0
    checked = 0
    while checked < RANKER_INSTANCES:
        values = rng.permutation(60)[:8].tolist()
        n_formats = int(rng.integers(1, 4))
        cells = tuple(
            Cell(float(v), CellType.NUMBER, i + 1 if i < n_formats else 0)
            for i, v in enumerate(values)
        )
        task = Task(Column(cells), tuple(range(n_formats)))
        matrix = generate_predicates(task.column)
        hyp = hypothesize(task, matrix, soft_negatives(task))
        per_format = {}
        for f in range(1, n_formats + 1):
            block = {}
            for _ in range(int(rng.integers(1, 5))):
                j = int(rng.integers(0, len(matrix)))
                dnf = Dnf((Clause((Literal(matrix.predicates[j], bool(rng.integers(0, 2))),)),))
                if dnf.render() not in block:
                    block[dnf.render()] = Candidate(
                        dnf, f, float(rng.uniform(0.5, 1.0)), 3, len(block)
                    )
            per_format[f] = list(block.values())
        combos = int(np.prod([len(b) for b in per_format.values()]))
        assert combos <= 100
        names = list(FEATURE_NAMES)
        picks = rng.permutation(len(names))[: int(rng.integers(1, 5))]
        model = RankerModel(
            {names[i]: float(rng.uniform(-2, 2)) for i in picks},
            float(rng.uniform(-1, 1)),
        )
        checked += 1
        ranked = combine_and_rank(per_format, task, hyp, model, top_k=5)
        expected = brute_combinations(_scored_lists(per_format, task, hyp, model), 5)
        if expected:
            got = (ranked[0].score, ranked[0].rule.literal_count(), print_rule(ranked[0].rule))
            if got != expected[0]:
                top1_mismatches += 1
        elif any(len(r.rule.branches) > 1 for r in ranked):
            top1_mismatches += 1  # nothing disjoint: fallbacks must be single-format

    rng = np.random.default_rng(23)
    X = rng.normal(size=(40, 5))
    y = rng.integers(0, 2, 40).astype(np.float64)
    eps = 1e-6
    grad_bad = 0
    for _ in range(20):
        params = rng.normal(size=6)
        _, grad = loss_and_grad(params, X, y)
        num = np.zeros_like(params)
        for i in range(len(params)):
            up, down = params.copy(), params.copy()
            up[i] += eps
            down[i] -= eps
            num[i] = (loss_and_grad(up, X, y)[0] - loss_and_grad(down, X, y)[0]) / (2 * eps)
        if not np.allclose(grad, num, rtol=GRAD_RTOL, atol=1e-8):
            grad_bad += 1
    ok = top1_mismatches == 0 and grad_bad == 0
    _report(
        capsys,
        "ranker_combination_oracle_and_gradient",
        ok,
        f"{RANKER_INSTANCES} instances (<=100 combos each), {top1_mismatches} top-1 mismatches; "
        f"20 gradient checks at rtol {GRAD_RTOL:g}, {grad_bad} off",
    )


# ---------------------------------------------------------------------------
# 9. accuracy flat as the unformatted window grows (honest FAIL, see module
#    docstring)
# ---------------------------------------------------------------------------

def test_unformatted_convergence_flatness(capsys):
    tasks = []
    i = 0
    while len(tasks) < 105:
        spec = GenSpec(TYPES[i % 3], n_cells=140, rule_depth=2)
        i += 1
        try:
            task = generate_task(9000 + i, spec)
        except RuntimeError:
            continue
        if sum(1 for c in task.column.cells if c.format == 0) >= 100:
            tasks.append(task)
    rows = convergence_study(tasks, "unformatted", (30, 100), examples=3)
    means = {}
    for v in (30, 100):
        sel = [r for r in rows if r.axis_value == v]
        means[v] = sum(r.mean_execution_match * r.n for r in sel) / sum(r.n for r in sel)
    delta = abs(means[100] - means[30])
    ok = delta <= FLATNESS_TOL
    _report(
        capsys,
        "unformatted_convergence_flatness",
        ok,
        f"105 tasks: match@30cells={means[30]:.3f} match@100cells={means[100]:.3f} "
        f"delta={delta*100:.2f}pts, budget {FLATNESS_TOL*100:.0f}pts"
        + ("" if ok else "; number-column label noise grows with window value coverage"),
    )


# ---------------------------------------------------------------------------
# 10. wall-clock budget on a large column
# ---------------------------------------------------------------------------

def test_learn_runtime_1000_cells(capsys):
    task = generate_task(31, GenSpec(CellType.NUMBER, n_cells=1000, rule_depth=2))
    view = reveal(task, 5)
    t0 = time.perf_counter()
    result = learn(view, EngineConfig())
    elapsed = time.perf_counter() - t0
    ok = elapsed < PERF_BUDGET_S and bool(result.rules)
    _report(
        capsys,
        "learn_runtime_1000_cells",
        ok,
        f"{elapsed*1000:.0f}ms for 1000 cells (budget {PERF_BUDGET_S:.0f}s), "
        f"{len(result.rules)} rules",
    )
