"""Predicate enumeration: concrete boolean cell properties over a column.

Every predicate compares one cell against constants harvested from the
column itself (values, summary statistics, popular thresholds, string
tokens).  The output is a bit matrix, one row per cell and one column
per retained predicate, which downstream stages treat as the feature
space for clustering and tree learning.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass
from datetime import date
from enum import Enum
from functools import cached_property
from itertools import combinations
from typing import Optional, Sequence, Union

import numpy as np

from .column import Cell, CellType, Column

# provenance tags for generated constants
COLUMN_VALUE = "column-value"
SUMMARY_STAT = "summary-stat"
POPULAR = "popular"
TOKEN_DELIMITER = "token-delimiter"
TOKEN_PREFIX = "token-prefix"

POPULAR_NUMBERS = (0.0, 1.0, -1.0, 10.0, 100.0, 1000.0, 0.5)

_TOKEN_SPLIT = re.compile(r"[^0-9A-Za-z]+")
_MAX_PREFIX_LEN = 100  # bound on prefix-trie depth, keeps pathological strings cheap

DEFAULT_MAX_PREDICATES = 5000


class PredicateKind(Enum):
    GREATER = "greater"
    GREATER_EQUALS = "greaterEquals"
    LESS = "less"
    LESS_EQUALS = "lessEquals"
    BETWEEN = "between"
    EQUALS = "equals"
    CONTAINS = "contains"
    STARTS_WITH = "startsWith"
    ENDS_WITH = "endsWith"


ORDER_KINDS = (
    PredicateKind.GREATER,
    PredicateKind.GREATER_EQUALS,
    PredicateKind.LESS,
    PredicateKind.LESS_EQUALS,
)
TEXT_KINDS = (
    PredicateKind.EQUALS,
    PredicateKind.CONTAINS,
    PredicateKind.STARTS_WITH,
    PredicateKind.ENDS_WITH,
)


class DatePart(Enum):
    DAY = "day"
    MONTH = "month"
    YEAR = "year"
    WEEKDAY = "weekday"  # ISO: Monday=1 .. Sunday=7


def date_part_value(v: date, part: DatePart) -> int:
    if part is DatePart.DAY:
        return v.day
    if part is DatePart.MONTH:
        return v.month
    if part is DatePart.YEAR:
        return v.year
    return v.isoweekday()


def render_number(v: float) -> str:
    """Shortest decimal that round-trips back to the same float."""
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def render_string(s: str) -> str:
    return json.dumps(s, ensure_ascii=False)


@dataclass(frozen=True)
class ConcretePredicate:
    """A predicate with all free arguments bound to constants.

    ``args`` holds the constants: one float (or two, ascending, for
    between) for number and date kinds, one non-empty string for text
    kinds.  Date kinds additionally carry the date part the comparison
    applies to.  ``provenance`` records, per constant, which generator
    produced it.
    """

    kind: PredicateKind
    cell_type: CellType
    args: tuple[Union[float, str], ...]
    date_part: Optional[DatePart] = None
    provenance: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind in TEXT_KINDS:
            if self.cell_type is not CellType.TEXT:
                raise ValueError(f"{self.kind.value} applies to text cells only")
            if len(self.args) != 1 or not isinstance(self.args[0], str):
                raise ValueError(f"{self.kind.value} takes one string argument")
            if not self.args[0]:
                raise ValueError(f"{self.kind.value} argument must be non-empty")
        else:
            if self.cell_type not in (CellType.NUMBER, CellType.DATE):
                raise ValueError(f"{self.kind.value} applies to number or date cells")
            want = 2 if self.kind is PredicateKind.BETWEEN else 1
            if len(self.args) != want or not all(
                isinstance(a, (int, float)) and not isinstance(a, bool)
                for a in self.args
            ):
                raise ValueError(f"{self.kind.value} takes {want} numeric argument(s)")
            object.__setattr__(self, "args", tuple(float(a) for a in self.args))
            if self.kind is PredicateKind.BETWEEN and not self.args[0] < self.args[1]:
                raise ValueError("between requires n1 < n2")
        if (self.date_part is not None) != (self.cell_type is CellType.DATE):
            raise ValueError("date part present iff the predicate is over dates")
        object.__setattr__(self, "provenance", tuple(self.provenance))

    def render(self) -> str:
        parts = ["c"]
        for a in self.args:
            parts.append(render_string(a) if isinstance(a, str) else render_number(a))
        if self.date_part is not None:
            parts.append(self.date_part.value)
        return f"{self.kind.value}({', '.join(parts)})"


def eval_predicate(p: ConcretePredicate, cell: Cell, fold_case: bool = False) -> bool:
    """Evaluate one predicate on one cell; false on any type mismatch."""
    if cell.cell_type is not p.cell_type:
        return False
    if p.cell_type is CellType.TEXT:
        s, t = cell.value, p.args[0]
        if fold_case:
            s, t = s.lower(), t.lower()
        if p.kind is PredicateKind.EQUALS:
            return s == t
        if p.kind is PredicateKind.CONTAINS:
            return t in s
        if p.kind is PredicateKind.STARTS_WITH:
            return s.startswith(t)
        return s.endswith(t)
    if p.cell_type is CellType.NUMBER:
        v = float(cell.value)
    else:
        v = float(date_part_value(cell.value, p.date_part))
    if p.kind is PredicateKind.GREATER:
        return v > p.args[0]
    if p.kind is PredicateKind.GREATER_EQUALS:
        return v >= p.args[0]
    if p.kind is PredicateKind.LESS:
        return v < p.args[0]
    if p.kind is PredicateKind.LESS_EQUALS:
        return v <= p.args[0]
    return p.args[0] <= v <= p.args[1]


# ---------------------------------------------------------------------------
# constant generators
# ---------------------------------------------------------------------------

def summary_stats(values: Sequence[float]) -> list[float]:
    """Mean, min, max and quartiles (linear interpolation) of a series."""
    arr = np.asarray(values, dtype=np.float64)
    q = np.percentile(arr, (25.0, 50.0, 75.0))
    return [float(arr.mean()), float(arr.min()), float(arr.max()), *map(float, q)]


def numeric_constants(values: Sequence[float]) -> dict[float, str]:
    """Threshold candidates for a numeric series, value -> provenance.

    A value reachable from several generators keeps the highest-priority
    tag: column-value, then summary-stat, then popular.
    """
    out: dict[float, str] = {}
    for v in values:
        out.setdefault(float(v), COLUMN_VALUE)
    for s in summary_stats(values):
        out.setdefault(s, SUMMARY_STAT)
    for p in POPULAR_NUMBERS:
        out.setdefault(p, POPULAR)
    return out


def _shared_prefixes(distinct: set[str]) -> list[str]:
    """Maximal prefixes (length >= 2) shared by >= 2 distinct values.

    Maximal means no one-character extension is shared by the same number
    of values, so only the deepest branch points of the prefix trie come
    out.
    """
    counts: Counter[str] = Counter()
    for v in distinct:
        for end in range(1, min(len(v), _MAX_PREFIX_LEN) + 1):
            counts[v[:end]] += 1
    deepest: dict[str, int] = {}
    for q, n in counts.items():
        if len(q) >= 2:
            parent = q[:-1]
            if deepest.get(parent, 0) < n:
                deepest[parent] = n
    return sorted(
        p
        for p, n in counts.items()
        if n >= 2 and len(p) >= 2 and deepest.get(p, 0) < n
    )


def text_constants(values: Sequence[str]) -> dict[str, str]:
    """String constants for a text series, value -> provenance.

    Full distinct values, then tokens split on non-alphanumeric runs,
    then prefix-trie tokens; earlier sources win the provenance tag.
    """
    out: dict[str, str] = {}
    distinct = set(values)
    for v in sorted(distinct):
        if v:
            out.setdefault(v, COLUMN_VALUE)
    for v in sorted(distinct):
        for tok in _TOKEN_SPLIT.split(v):
            if tok:
                out.setdefault(tok, TOKEN_DELIMITER)
    for p in _shared_prefixes(distinct):
        out.setdefault(p, TOKEN_PREFIX)
    return out


# ---------------------------------------------------------------------------
# matrix construction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PredicateMatrix:
    """Retained predicates plus their truth table over the column.

    ``truth[i, j]`` says whether predicate j holds on cell i.  Every
    column of ``truth`` is a strict subset of the cells (never all-true
    or all-false) and no two columns are identical.
    """

    predicates: tuple[ConcretePredicate, ...]
    truth: np.ndarray

    def __len__(self) -> int:
        return len(self.predicates)

    @property
    def n_cells(self) -> int:
        return self.truth.shape[0]

    @cached_property
    def renderings(self) -> tuple[str, ...]:
        return tuple(p.render() for p in self.predicates)

    @cached_property
    def packed_rows(self) -> np.ndarray:
        """Per-cell predicate rows packed to uint8 bitsets, for distances."""
        if self.truth.shape[1] == 0:
            return np.zeros((self.truth.shape[0], 0), dtype=np.uint8)
        return np.packbits(self.truth, axis=1)

    @cached_property
    def floats(self) -> np.ndarray:
        return self.truth.astype(np.float64)


def _scatter(n: int, idx: np.ndarray, mask: np.ndarray) -> np.ndarray:
    col = np.zeros(n, dtype=bool)
    col[idx] = mask
    return col


def _comparison_candidates(
    cell_type: CellType,
    part: Optional[DatePart],
    series: np.ndarray,
    idx: np.ndarray,
    n: int,
) -> list[tuple[ConcretePredicate, np.ndarray]]:
    consts = numeric_constants(series.tolist())
    cvals = np.array(sorted(consts), dtype=np.float64)
    out: list[tuple[ConcretePredicate, np.ndarray]] = []
    ops = {
        PredicateKind.GREATER: np.greater,
        PredicateKind.GREATER_EQUALS: np.greater_equal,
        PredicateKind.LESS: np.less,
        PredicateKind.LESS_EQUALS: np.less_equal,
    }
    for kind in ORDER_KINDS:
        sub = ops[kind](series[:, None], cvals[None, :])
        for j, cv in enumerate(cvals):
            p = ConcretePredicate(kind, cell_type, (float(cv),), part, (consts[cv],))
            out.append((p, _scatter(n, idx, sub[:, j])))
    # between draws pairs from summary/popular cross product plus adjacent
    # distinct column values, never the full value cross product
    pool = set(summary_stats(series.tolist())) | set(POPULAR_NUMBERS)
    pairs = set(combinations(sorted(pool), 2))
    distinct = sorted(set(series.tolist()))
    pairs.update(zip(distinct, distinct[1:]))
    for a, b in sorted(pairs):
        p = ConcretePredicate(
            PredicateKind.BETWEEN,
            cell_type,
            (a, b),
            part,
            (consts.get(a, SUMMARY_STAT), consts.get(b, SUMMARY_STAT)),
        )
        out.append((p, _scatter(n, idx, (series >= a) & (series <= b))))
    return out


def _text_candidates(
    values: list[str], idx: np.ndarray, n: int, fold_case: bool
) -> list[tuple[ConcretePredicate, np.ndarray]]:
    consts = text_constants(values)
    arr = np.asarray(values, dtype=str)
    if fold_case:
        arr = np.char.lower(arr)
    out: list[tuple[ConcretePredicate, np.ndarray]] = []
    for s in sorted(consts):
        prov = (consts[s],)
        t = s.lower() if fold_case else s
        masks = (
            (PredicateKind.EQUALS, arr == t),
            (PredicateKind.CONTAINS, np.char.find(arr, t) != -1),
            (PredicateKind.STARTS_WITH, np.char.startswith(arr, t)),
            (PredicateKind.ENDS_WITH, np.char.endswith(arr, t)),
        )
        for kind, mask in masks:
            p = ConcretePredicate(kind, CellType.TEXT, (s,), None, prov)
            out.append((p, _scatter(n, idx, mask)))
    return out


def _cap_rank(p: ConcretePredicate) -> int:
    if p.kind is PredicateKind.BETWEEN:
        return 2
    if POPULAR in p.provenance:
        return 1
    return 0


def generate_predicates(
    column: Column,
    max_predicates: int = DEFAULT_MAX_PREDICATES,
    fold_case: bool = False,
) -> PredicateMatrix:
    """Enumerate, filter and dedupe concrete predicates for a column.

    Keeps only predicates true on a strict subset of cells, collapses
    identical truth columns to the lexicographically smallest rendering,
    and caps the total by dropping between pairs first and then
    popular-constant predicates.  Output order is by rendered text, so
    the matrix is a pure function of the column.
    """
    n = len(column)
    cand: list[tuple[ConcretePredicate, np.ndarray]] = []

    num_idx = np.array(
        [i for i, c in enumerate(column.cells) if c.cell_type is CellType.NUMBER],
        dtype=np.intp,
    )
    if num_idx.size:
        series = np.array([column.cells[i].value for i in num_idx], dtype=np.float64)
        cand.extend(_comparison_candidates(CellType.NUMBER, None, series, num_idx, n))

    date_idx = np.array(
        [i for i, c in enumerate(column.cells) if c.cell_type is CellType.DATE],
        dtype=np.intp,
    )
    if date_idx.size:
        for part in DatePart:
            series = np.array(
                [date_part_value(column.cells[i].value, part) for i in date_idx],
                dtype=np.float64,
            )
            cand.extend(_comparison_candidates(CellType.DATE, part, series, date_idx, n))

    text_idx = np.array(
        [i for i, c in enumerate(column.cells) if c.cell_type is CellType.TEXT],
        dtype=np.intp,
    )
    if text_idx.size:
        values = [column.cells[i].value for i in text_idx]
        cand.extend(_text_candidates(values, text_idx, n, fold_case))

    by_truth: dict[bytes, tuple[ConcretePredicate, str, np.ndarray]] = {}
    for p, col in cand:
        pop = int(col.sum())
        if not 0 < pop < n:
            continue
        key = col.tobytes()
        text = p.render()
        prev = by_truth.get(key)
        if prev is None or text < prev[1]:
            by_truth[key] = (p, text, col)

    kept = sorted(by_truth.values(), key=lambda it: (_cap_rank(it[0]), it[1]))
    kept = kept[:max_predicates]
    kept.sort(key=lambda it: it[1])

    preds = tuple(it[0] for it in kept)
    if kept:
        truth = np.stack([it[2] for it in kept], axis=1)
    else:
        truth = np.zeros((n, 0), dtype=bool)
    return PredicateMatrix(preds, truth)
