"""Typed column model: cells, columns, tasks and their file formats.

A column is an ordered list of typed cells; each cell carries an opaque
format identifier (0 = unformatted).  A task bundles a column with the
set of observed formatted example cells and, optionally, gold labels
for evaluation.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, datetime
from enum import Enum
from typing import Iterable, Optional, Union


class CellType(Enum):
    NUMBER = "number"
    DATE = "date"
    TEXT = "text"


CellValue = Union[float, date, datetime, str]

_NUMBER_RE = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


@dataclass(frozen=True)
class Cell:
    """One cell: a typed value plus an opaque format identifier.

    The runtime kind of ``value`` must match ``cell_type``; ints are
    coerced to float for NUMBER cells.  ``format`` 0 means unformatted.
    """

    value: CellValue
    cell_type: CellType
    format: int = 0

    def __post_init__(self) -> None:
        if self.format < 0:
            raise ValueError("format id must be >= 0")
        if self.cell_type is CellType.NUMBER:
            if isinstance(self.value, bool) or not isinstance(self.value, (int, float)):
                raise TypeError(f"NUMBER cell holds {type(self.value).__name__}")
            object.__setattr__(self, "value", float(self.value))
        elif self.cell_type is CellType.DATE:
            if not isinstance(self.value, date):
                raise TypeError(f"DATE cell holds {type(self.value).__name__}")
        elif self.cell_type is CellType.TEXT:
            if not isinstance(self.value, str):
                raise TypeError(f"TEXT cell holds {type(self.value).__name__}")


@dataclass(frozen=True)
class Column:
    """An ordered, non-empty list of cells in on-sheet top-to-bottom order."""

    cells: tuple[Cell, ...]
    dominant_type: CellType = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "cells", tuple(self.cells))
        if not self.cells:
            raise ValueError("empty column")
        counts = Counter(c.cell_type for c in self.cells)
        top = max(counts.values())
        winners = [t for t, n in counts.items() if n == top]
        dom = winners[0] if len(winners) == 1 else CellType.TEXT
        object.__setattr__(self, "dominant_type", dom)

    def __len__(self) -> int:
        return len(self.cells)

    def values_of_type(self, t: CellType) -> list[CellValue]:
        return [c.value for c in self.cells if c.cell_type is t]

    def has_type(self, t: CellType) -> bool:
        return any(c.cell_type is t for c in self.cells)


@dataclass(frozen=True)
class Task:
    """A column plus the observed formatted examples and optional gold labels.

    ``observed`` holds indices into the column; the format of an observed
    cell is the cell's own format id (never 0).  ``gold_rule`` is rule text
    in the rule DSL, ``gold_formats`` the full gold per-cell format vector.
    """

    column: Column
    observed: tuple[int, ...]
    gold_rule: Optional[str] = None
    gold_formats: Optional[tuple[int, ...]] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "observed", tuple(sorted(set(self.observed))))
        n = len(self.column)
        for i in self.observed:
            if not 0 <= i < n:
                raise ValueError(f"observed index {i} out of range for {n} cells")
            if self.column.cells[i].format == 0:
                raise ValueError("examples must be formatted")
        if self.gold_formats is not None:
            object.__setattr__(self, "gold_formats", tuple(self.gold_formats))
            if len(self.gold_formats) != n:
                raise ValueError("gold_formats length must equal column length")
            if any(f < 0 for f in self.gold_formats):
                raise ValueError("gold format ids must be >= 0")
            for i in self.observed:
                if self.gold_formats[i] == 0:
                    raise ValueError(f"observed cell {i} is unformatted in gold_formats")

    @property
    def observed_formats(self) -> dict[int, int]:
        """Map of observed cell index -> format id."""
        return {i: self.column.cells[i].format for i in self.observed}


def soft_negatives(task: Task) -> frozenset[int]:
    """Unobserved cells positionally bracketed by two observed examples.

    Returns exactly { i | i not observed, exists observed j, k with j < i < k }.
    Fewer than two observed examples yield the empty set.
    """
    obs = task.observed
    if len(obs) < 2:
        return frozenset()
    lo, hi = obs[0], obs[-1]
    return frozenset(i for i in range(lo + 1, hi) if i not in set(obs))


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def _parse_number(raw: str) -> Optional[float]:
    s = raw.strip()
    if not s or not _NUMBER_RE.fullmatch(s):
        return None
    v = float(s)
    return v if math.isfinite(v) else None


def _parse_date(raw: str) -> Optional[Union[date, datetime]]:
    s = raw.strip()
    if not s:
        return None
    for parser in (date.fromisoformat, datetime.fromisoformat):
        try:
            return parser(s)
        except ValueError:
            continue
    return None


def _infer_cell(raw: str, type_hint: Optional[CellType]) -> Cell:
    order = [CellType.NUMBER, CellType.DATE, CellType.TEXT]
    if type_hint is not None:
        order = [type_hint] + [t for t in order if t is not type_hint]
    for t in order:
        if t is CellType.NUMBER:
            v = _parse_number(raw)
            if v is not None:
                return Cell(v, CellType.NUMBER)
        elif t is CellType.DATE:
            d = _parse_date(raw)
            if d is not None:
                return Cell(d, CellType.DATE)
        else:
            return Cell(raw, CellType.TEXT)
    return Cell(raw, CellType.TEXT)


def ingest_csv(raw: str, column_index: int, type_hint: Optional[CellType] = None) -> Column:
    """Parse one column out of RFC-4180-style CSV text.

    Each cell gets per-cell type inference (number, then ISO date, then
    text); ``type_hint`` forces parse attempts of that type first.  Raises
    ValueError for an empty column, a malformed row, or a row missing the
    requested column (with its line number).
    """
    if column_index < 0:
        raise ValueError("column_index must be >= 0")
    reader = csv.reader(io.StringIO(raw))
    cells: list[Cell] = []
    try:
        for row in reader:
            if not row:
                continue
            if column_index >= len(row):
                raise ValueError(
                    f"line {reader.line_num}: row has {len(row)} columns, "
                    f"need index {column_index}"
                )
            cells.append(_infer_cell(row[column_index], type_hint))
    except csv.Error as e:
        raise ValueError(f"line {reader.line_num}: malformed CSV: {e}") from e
    if not cells:
        raise ValueError("empty column")
    return Column(tuple(cells))


# ---------------------------------------------------------------------------
# Task JSON
# ---------------------------------------------------------------------------

def _cell_from_json(obj: dict, pos: int) -> Cell:
    if not isinstance(obj, dict) or "value" not in obj or "type" not in obj:
        raise ValueError(f"cell {pos}: expected object with 'value' and 'type'")
    tname = obj["type"]
    try:
        ctype = CellType(tname)
    except ValueError:
        raise ValueError(f"cell {pos}: unknown type {tname!r}") from None
    fmt = obj.get("format", 0)
    if not isinstance(fmt, int) or isinstance(fmt, bool) or fmt < 0:
        raise ValueError(f"cell {pos}: format must be a non-negative integer")
    value = obj["value"]
    if ctype is CellType.NUMBER:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"cell {pos}: number cell needs a numeric value")
        return Cell(float(value), ctype, fmt)
    if not isinstance(value, str):
        raise ValueError(f"cell {pos}: {tname} cell needs a string value")
    if ctype is CellType.DATE:
        d = _parse_date(value)
        if d is None:
            raise ValueError(f"cell {pos}: unparseable date {value!r}")
        return Cell(d, ctype, fmt)
    return Cell(value, ctype, fmt)


def _cell_to_json(c: Cell) -> dict:
    if c.cell_type is CellType.DATE:
        value = c.value.isoformat()
    else:
        value = c.value
    return {"value": value, "type": c.cell_type.value, "format": c.format}


def load_task(text: str) -> Task:
    """Load a Task from its JSON representation, validating all invariants."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValueError(f"invalid JSON: {e}") from e
    return task_from_obj(obj)


def task_from_obj(obj: object) -> Task:
    if not isinstance(obj, dict):
        raise ValueError("task must be a JSON object")
    col = obj.get("column")
    if not isinstance(col, list) or not col:
        raise ValueError("'column' must be a non-empty array")
    cells = [_cell_from_json(c, i) for i, c in enumerate(col)]
    observed = obj.get("observed", [])
    if not isinstance(observed, list) or not all(
        isinstance(i, int) and not isinstance(i, bool) for i in observed
    ):
        raise ValueError("'observed' must be an array of cell indices")
    gold_rule = obj.get("gold_rule")
    if gold_rule is not None and not isinstance(gold_rule, str):
        raise ValueError("'gold_rule' must be rule text or null")
    gold_formats = obj.get("gold_formats")
    if gold_formats is not None:
        if not isinstance(gold_formats, list) or not all(
            isinstance(f, int) and not isinstance(f, bool) for f in gold_formats
        ):
            raise ValueError("'gold_formats' must be an array of format ids or null")
        gold_formats = tuple(gold_formats)
    return Task(Column(tuple(cells)), tuple(observed), gold_rule, gold_formats)


def task_to_obj(task: Task) -> dict:
    return {
        "column": [_cell_to_json(c) for c in task.column.cells],
        "observed": list(task.observed),
        "gold_rule": task.gold_rule,
        "gold_formats": list(task.gold_formats) if task.gold_formats is not None else None,
    }


def dump_task(task: Task) -> str:
    return json.dumps(task_to_obj(task), indent=2)
