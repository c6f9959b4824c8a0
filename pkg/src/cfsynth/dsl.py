"""The rule language: DNF formulas per format id.

A rule is a list of branches `IF <dnf> THEN <format-id>`, one line per
branch.  Branches are evaluated in ascending format-id order; the first
matching branch wins and cells matching no branch stay unformatted
(format 0).  This module owns evaluation, parsing, printing,
canonicalization and Excel-formula export; simplification lives with
the synthesis engine because it re-runs the whole pipeline.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .column import Cell, CellType, Column
from .predicates import (
    ConcretePredicate,
    DatePart,
    PredicateKind,
    TEXT_KINDS,
    eval_predicate,
    render_number,
)


@dataclass(frozen=True)
class Literal:
    """A predicate or its negation.

    Negation is type-guarded: `NOT p` holds only on cells of p's own
    type where p is false, so off-type cells match neither a literal
    nor its negation.
    """

    predicate: ConcretePredicate
    negated: bool = False

    def render(self) -> str:
        text = self.predicate.render()
        return f"NOT {text}" if self.negated else text

    def complement(self) -> "Literal":
        return Literal(self.predicate, not self.negated)


@dataclass(frozen=True)
class Clause:
    """A conjunction of literals; duplicates collapse at construction."""

    literals: tuple[Literal, ...]

    def __post_init__(self) -> None:
        seen: dict[str, Literal] = {}
        for lit in self.literals:
            seen.setdefault(lit.render(), lit)
        if not seen:
            raise ValueError("empty clause")
        rendered = set(seen)
        for lit in seen.values():
            if lit.complement().render() in rendered:
                raise ValueError(f"contradictory clause: {lit.render()} and its negation")
        object.__setattr__(self, "literals", tuple(seen.values()))

    def render(self) -> str:
        return " AND ".join(lit.render() for lit in self.literals)


@dataclass(frozen=True)
class Dnf:
    clauses: tuple[Clause, ...]

    def __post_init__(self) -> None:
        if not self.clauses:
            raise ValueError("empty dnf")
        object.__setattr__(self, "clauses", tuple(self.clauses))

    def render(self) -> str:
        return " OR ".join(c.render() for c in self.clauses)

    def literal_count(self) -> int:
        return sum(len(c.literals) for c in self.clauses)


@dataclass(frozen=True)
class Rule:
    """Branches in canonical ascending-format order, all formats > 0."""

    branches: tuple[tuple[Dnf, int], ...]

    def __post_init__(self) -> None:
        branches = tuple(sorted(self.branches, key=lambda b: b[1]))
        fmts = [f for _, f in branches]
        if any(f <= 0 for f in fmts):
            raise ValueError("branch format ids must be positive")
        if len(set(fmts)) != len(fmts):
            raise ValueError("branch format ids must be distinct")
        object.__setattr__(self, "branches", branches)

    def literal_count(self) -> int:
        return sum(d.literal_count() for d, _ in self.branches)

    def formats(self) -> tuple[int, ...]:
        return tuple(f for _, f in self.branches)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def eval_literal(lit: Literal, cell: Cell, fold_case: bool = False) -> bool:
    hit = eval_predicate(lit.predicate, cell, fold_case)
    if lit.negated:
        return cell.cell_type is lit.predicate.cell_type and not hit
    return hit


def eval_dnf(dnf: Dnf, cell: Cell, fold_case: bool = False) -> bool:
    return any(
        all(eval_literal(lit, cell, fold_case) for lit in cl.literals)
        for cl in dnf.clauses
    )


def eval_rule(rule: Rule, cell: Cell, fold_case: bool = False) -> int:
    for dnf, fmt in rule.branches:
        if eval_dnf(dnf, cell, fold_case):
            return fmt
    return 0


def dnf_matches(
    dnf: Dnf,
    column: Column,
    truth_by_render: Optional[dict[str, np.ndarray]] = None,
    fold_case: bool = False,
) -> np.ndarray:
    """Boolean match vector of a DNF over a column.

    ``truth_by_render`` can carry precomputed predicate truth columns
    keyed by rendered text; anything missing is evaluated cell by cell.
    """
    n = len(column)
    type_masks = {
        t: np.array([c.cell_type is t for c in column.cells]) for t in CellType
    }
    out = np.zeros(n, dtype=bool)
    for cl in dnf.clauses:
        acc = np.ones(n, dtype=bool)
        for lit in cl.literals:
            key = lit.predicate.render()
            base = truth_by_render.get(key) if truth_by_render else None
            if base is None:
                base = np.array(
                    [eval_predicate(lit.predicate, c, fold_case) for c in column.cells]
                )
            if lit.negated:
                acc &= type_masks[lit.predicate.cell_type] & ~base
            else:
                acc &= base
            if not acc.any():
                break
        out |= acc
    return out


def rule_execution(
    rule: Rule,
    column: Column,
    truth_by_render: Optional[dict[str, np.ndarray]] = None,
    fold_case: bool = False,
) -> np.ndarray:
    """Per-cell format ids produced by a rule (0 where nothing matches)."""
    out = np.zeros(len(column), dtype=np.int64)
    for dnf, fmt in rule.branches:
        hit = dnf_matches(dnf, column, truth_by_render, fold_case)
        out[(out == 0) & hit] = fmt
    return out


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_KIND_BY_NAME = {k.value: k for k in PredicateKind}
_PART_BY_NAME = {p.value: p for p in DatePart}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t]+)
  | (?P<newline>\r?\n)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<number>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z][A-Za-z0-9]*)
  | (?P<punct>[(),])
    """,
    re.VERBOSE,
)

_KEYWORDS = {"IF", "THEN", "OR", "AND", "NOT"}


@dataclass
class _Token:
    kind: str
    text: str
    line: int
    col: int


class RuleSyntaxError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {message}")
        self.line = line
        self.col = col


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col, pos = 1, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise RuleSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        tok = m.group()
        if kind == "newline":
            tokens.append(_Token("newline", tok, line, col))
            line += 1
            col = 1
        else:
            if kind != "ws":
                if kind == "ident" and tok in _KEYWORDS:
                    kind = tok
                tokens.append(_Token(kind, tok, line, col))
            col += len(tok)
        pos = m.end()
    tokens.append(_Token("eof", "", line, col))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def take(self, kind: str, what: Optional[str] = None) -> _Token:
        tok = self.peek()
        if tok.kind != kind:
            want = what or kind
            got = tok.text or "end of input"
            raise RuleSyntaxError(f"expected {want}, got {got!r}", tok.line, tok.col)
        self.pos += 1
        return tok

    def skip_newlines(self) -> None:
        while self.peek().kind == "newline":
            self.pos += 1

    def parse_rule(self) -> Rule:
        branches: list[tuple[Dnf, int]] = []
        self.skip_newlines()
        while self.peek().kind != "eof":
            branches.append(self.parse_branch())
            self.skip_newlines()
        tok = self.peek()
        try:
            return Rule(tuple(branches))
        except ValueError as e:
            raise RuleSyntaxError(str(e), tok.line, tok.col) from None

    def parse_branch(self) -> tuple[Dnf, int]:
        self.take("IF")
        dnf = self.parse_dnf()
        self.take("THEN")
        tok = self.take("number", "format id")
        try:
            fmt = int(tok.text)
        except ValueError:
            raise RuleSyntaxError(f"format id must be an integer, got {tok.text!r}",
                                  tok.line, tok.col) from None
        if fmt <= 0:
            raise RuleSyntaxError("format id must be positive", tok.line, tok.col)
        if self.peek().kind not in ("newline", "eof"):
            t = self.peek()
            raise RuleSyntaxError(f"expected end of line, got {t.text!r}", t.line, t.col)
        return dnf, fmt

    def parse_dnf(self) -> Dnf:
        clauses = [self.parse_clause()]
        while self.peek().kind == "OR":
            self.pos += 1
            clauses.append(self.parse_clause())
        return Dnf(tuple(clauses))

    def parse_clause(self) -> Clause:
        tok = self.peek()
        lits = [self.parse_literal()]
        while self.peek().kind == "AND":
            self.pos += 1
            lits.append(self.parse_literal())
        try:
            return Clause(tuple(lits))
        except ValueError as e:
            raise RuleSyntaxError(str(e), tok.line, tok.col) from None

    def parse_literal(self) -> Literal:
        negated = False
        if self.peek().kind == "NOT":
            self.pos += 1
            negated = True
        return Literal(self.parse_predicate(), negated)

    def parse_predicate(self) -> ConcretePredicate:
        name = self.take("ident", "predicate name")
        kind = _KIND_BY_NAME.get(name.text)
        if kind is None:
            raise RuleSyntaxError(f"unknown predicate {name.text!r}", name.line, name.col)
        opener = self.take("punct", "'('")
        if opener.text != "(":
            raise RuleSyntaxError(f"expected '(', got {opener.text!r}",
                                  opener.line, opener.col)
        cell = self.take("ident", "'c'")
        if cell.text != "c":
            raise RuleSyntaxError(f"expected 'c', got {cell.text!r}", cell.line, cell.col)
        args: list = []
        part: Optional[DatePart] = None
        while self.peek().text == ",":
            self.pos += 1
            tok = self.peek()
            if tok.kind == "number":
                self.pos += 1
                args.append(float(tok.text))
            elif tok.kind == "string":
                self.pos += 1
                try:
                    args.append(json.loads(tok.text))
                except json.JSONDecodeError:
                    raise RuleSyntaxError(f"bad string literal {tok.text}",
                                          tok.line, tok.col) from None
            elif tok.kind == "ident" and tok.text in _PART_BY_NAME:
                self.pos += 1
                if part is not None:
                    raise RuleSyntaxError("duplicate date part", tok.line, tok.col)
                part = _PART_BY_NAME[tok.text]
                if self.peek().text == ",":
                    t = self.peek()
                    raise RuleSyntaxError("date part must be the last argument",
                                          t.line, t.col)
            else:
                raise RuleSyntaxError(
                    f"expected argument, got {tok.text or 'end of input'!r}",
                    tok.line, tok.col,
                )
        close = self.take("punct", "')'")
        if close.text != ")":
            raise RuleSyntaxError(f"expected ')', got {close.text!r}",
                                  close.line, close.col)
        if kind in TEXT_KINDS:
            cell_type = CellType.TEXT
        elif part is not None:
            cell_type = CellType.DATE
        else:
            cell_type = CellType.NUMBER
        try:
            return ConcretePredicate(kind, cell_type, tuple(args), part)
        except (ValueError, TypeError) as e:
            raise RuleSyntaxError(str(e), name.line, name.col) from None


def parse_rule(text: str) -> Rule:
    return _Parser(text).parse_rule()


def parse_dnf(text: str) -> Dnf:
    """Parse a bare DNF (no IF/THEN wrapper); used by tests and tools."""
    parser = _Parser(text)
    parser.skip_newlines()
    dnf = parser.parse_dnf()
    parser.skip_newlines()
    parser.take("eof", "end of input")
    return dnf


def print_rule(rule: Rule) -> str:
    return "".join(
        f"IF {dnf.render()} THEN {fmt}\n" for dnf, fmt in rule.branches
    )


# ---------------------------------------------------------------------------
# canonicalization
# ---------------------------------------------------------------------------

_NEGATION_FLIP = {
    PredicateKind.GREATER: PredicateKind.LESS_EQUALS,
    PredicateKind.GREATER_EQUALS: PredicateKind.LESS,
    PredicateKind.LESS: PredicateKind.GREATER_EQUALS,
    PredicateKind.LESS_EQUALS: PredicateKind.GREATER,
}


def _flip_negations(lits: list[Literal]) -> list[Literal]:
    out = []
    for lit in lits:
        kind = lit.predicate.kind
        if lit.negated and kind in _NEGATION_FLIP:
            p = lit.predicate
            out.append(
                Literal(
                    ConcretePredicate(
                        _NEGATION_FLIP[kind], p.cell_type, p.args, p.date_part,
                        p.provenance,
                    )
                )
            )
        else:
            out.append(lit)
    return out


def _pair_bounds(lits: list[Literal]) -> list[Literal]:
    """Merge greaterEquals/lessEquals pairs into between, strongest first."""
    lits = list(lits)
    while True:
        groups: dict[tuple, dict[str, list[int]]] = {}
        for i, lit in enumerate(lits):
            if lit.negated:
                continue
            kind = lit.predicate.kind
            if kind in (PredicateKind.GREATER_EQUALS, PredicateKind.LESS_EQUALS):
                key = (lit.predicate.cell_type, lit.predicate.date_part)
                groups.setdefault(key, {"ge": [], "le": []})[
                    "ge" if kind is PredicateKind.GREATER_EQUALS else "le"
                ].append(i)
        merged = False
        for key, g in sorted(groups.items(), key=lambda kv: str(kv[0])):
            if not g["ge"] or not g["le"]:
                continue
            gi = max(g["ge"], key=lambda i: lits[i].predicate.args[0])
            li = min(g["le"], key=lambda i: lits[i].predicate.args[0])
            lo = lits[gi].predicate
            hi = lits[li].predicate
            if lo.args[0] < hi.args[0]:
                prov = ()
                if len(lo.provenance) == 1 and len(hi.provenance) == 1:
                    prov = (lo.provenance[0], hi.provenance[0])
                between = ConcretePredicate(
                    PredicateKind.BETWEEN, lo.cell_type,
                    (lo.args[0], hi.args[0]), lo.date_part, prov,
                )
                lits = [l for i, l in enumerate(lits) if i not in (gi, li)]
                lits.append(Literal(between))
                merged = True
                break
        if not merged:
            return lits


def _empty_interval(lits: list[Literal]) -> bool:
    """True when the conjoined order constraints admit no real value."""
    bounds: dict[tuple, list] = {}
    for lit in lits:
        if lit.negated:
            continue
        p = lit.predicate
        if p.kind in TEXT_KINDS:
            continue
        lo, hi = bounds.setdefault(
            (p.cell_type, p.date_part), [(-np.inf, False), (np.inf, False)]
        )
        if p.kind is PredicateKind.GREATER:
            lo = max(lo, (p.args[0], True))
        elif p.kind is PredicateKind.GREATER_EQUALS:
            lo = max(lo, (p.args[0], False))
        elif p.kind is PredicateKind.LESS:
            hi = min(hi, (p.args[0], True), key=lambda b: (b[0], not b[1]))
        elif p.kind is PredicateKind.LESS_EQUALS:
            hi = min(hi, (p.args[0], False), key=lambda b: (b[0], not b[1]))
        else:
            lo = max(lo, (p.args[0], False))
            hi = min(hi, (p.args[1], False), key=lambda b: (b[0], not b[1]))
        bounds[(p.cell_type, p.date_part)] = [lo, hi]
    for (lo, lo_open), (hi, hi_open) in bounds.values():
        if lo > hi or (lo == hi and (lo_open or hi_open)):
            return True
    return False


def _canonical_clause(cl: Clause) -> Optional[Clause]:
    """One clause rewritten to normal form; None when contradictory."""
    lits = _pair_bounds(_flip_negations(list(cl.literals)))
    by_text: dict[str, Literal] = {}
    for lit in lits:
        by_text.setdefault(lit.render(), lit)
    for lit in by_text.values():
        if lit.complement().render() in by_text:
            return None
    if _empty_interval(list(by_text.values())):
        return None
    ordered = tuple(by_text[t] for t in sorted(by_text))
    return Clause(ordered)


def canonicalize_dnf(dnf: Dnf) -> Optional[Dnf]:
    """Normal form of a DNF; None when every clause is contradictory."""
    clauses = [c for c in map(_canonical_clause, dnf.clauses) if c is not None]
    if not clauses:
        return None
    # subsumption: a clause whose literal set contains another clause's is
    # redundant; identical clauses collapse to one
    sets = {}
    for cl in clauses:
        sets.setdefault(frozenset(l.render() for l in cl.literals), cl)
    kept: list[tuple[frozenset, Clause]] = []
    for key, cl in sorted(sets.items(), key=lambda kv: (len(kv[0]), kv[1].render())):
        if not any(prev < key for prev, _ in kept):
            kept.append((key, cl))
    ordered = sorted((cl for _, cl in kept), key=lambda c: c.render())
    return Dnf(tuple(ordered))


def canonicalize(rule: Rule) -> Rule:
    branches = []
    for dnf, fmt in rule.branches:
        canon = canonicalize_dnf(dnf)
        if canon is not None:
            branches.append((canon, fmt))
    return Rule(tuple(branches))


def exact_match(a: Rule, b: Rule) -> bool:
    return print_rule(canonicalize(a)) == print_rule(canonicalize(b))


# ---------------------------------------------------------------------------
# Excel export
# ---------------------------------------------------------------------------

_DATE_FN = {
    DatePart.DAY: "DAY({ref})",
    DatePart.MONTH: "MONTH({ref})",
    DatePart.YEAR: "YEAR({ref})",
    DatePart.WEEKDAY: "WEEKDAY({ref},2)",  # return type 2: Monday=1..Sunday=7
}

_CMP = {
    PredicateKind.GREATER: ">",
    PredicateKind.GREATER_EQUALS: ">=",
    PredicateKind.LESS: "<",
    PredicateKind.LESS_EQUALS: "<=",
}


def _excel_string(s: str) -> str:
    return '"' + s.replace('"', '""') + '"'


def _excel_literal(lit: Literal, anchor: str) -> str:
    p = lit.predicate
    if p.cell_type is CellType.TEXT:
        s = _excel_string(p.args[0])
        if p.kind is PredicateKind.EQUALS:
            cond = f"{anchor}={s}"
        elif p.kind is PredicateKind.CONTAINS:
            cond = f"ISNUMBER(SEARCH({s},{anchor}))"
        elif p.kind is PredicateKind.STARTS_WITH:
            cond = f"LEFT({anchor},{len(p.args[0])})={s}"
        else:
            cond = f"RIGHT({anchor},{len(p.args[0])})={s}"
    else:
        ref = anchor
        if p.cell_type is CellType.DATE:
            ref = _DATE_FN[p.date_part].format(ref=anchor)
        if p.kind is PredicateKind.BETWEEN:
            a, b = (render_number(v) for v in p.args)
            cond = f"AND({ref}>={a},{ref}<={b})"
        else:
            cond = f"{ref}{_CMP[p.kind]}{render_number(p.args[0])}"
    return f"NOT({cond})" if lit.negated else cond


def to_excel_formula(dnf: Dnf, anchor: str) -> str:
    """Render a DNF as an Excel boolean formula anchored at one cell."""
    clause_texts = []
    for cl in dnf.clauses:
        parts = [_excel_literal(lit, anchor) for lit in cl.literals]
        clause_texts.append(parts[0] if len(parts) == 1 else f"AND({','.join(parts)})")
    body = clause_texts[0] if len(clause_texts) == 1 else f"OR({','.join(clause_texts)})"
    return f"={body}"
