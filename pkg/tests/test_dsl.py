from datetime import date

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cfsynth.column import Cell, CellType, Column
from cfsynth.dsl import (
    Clause,
    Dnf,
    Literal,
    Rule,
    RuleSyntaxError,
    canonicalize,
    eval_rule,
    exact_match,
    parse_dnf,
    parse_rule,
    print_rule,
    rule_execution,
    to_excel_formula,
)
from cfsynth.predicates import (
    ConcretePredicate,
    DatePart,
    PredicateKind,
    generate_predicates,
)


def lit(kind, *args, part=None, negated=False):
    if kind in (PredicateKind.EQUALS, PredicateKind.CONTAINS,
                PredicateKind.STARTS_WITH, PredicateKind.ENDS_WITH):
        ct = CellType.TEXT
    elif part is not None:
        ct = CellType.DATE
    else:
        ct = CellType.NUMBER
    return Literal(ConcretePredicate(kind, ct, args, part), negated)


def rule_of(*branches):
    return Rule(tuple((Dnf((Clause(tuple(lits)),)), fmt) for lits, fmt in branches))


# --- evaluation ------------------------------------------------------------

def test_first_matching_branch_in_format_order():
    r = rule_of(([lit(PredicateKind.LESS, 5.0)], 1))
    assert eval_rule(r, Cell(2.0, CellType.NUMBER)) == 1
    assert eval_rule(r, Cell(7.0, CellType.NUMBER)) == 0


def test_empty_rule_always_unformatted():
    r = Rule(())
    assert eval_rule(r, Cell(2.0, CellType.NUMBER)) == 0


def test_tautology_split_never_unformatted():
    p = lit(PredicateKind.LESS, 5.0)
    r = rule_of(([p], 1), ([p.complement()], 2))
    for v in (0.0, 5.0, 9.0):
        assert eval_rule(r, Cell(v, CellType.NUMBER)) in (1, 2)


def test_negation_is_type_guarded():
    r = rule_of(([lit(PredicateKind.GREATER, 5.0, negated=True)], 1))
    assert eval_rule(r, Cell(3.0, CellType.NUMBER)) == 1
    assert eval_rule(r, Cell("abc", CellType.TEXT)) == 0


def test_branch_order_is_ascending_format():
    text = "IF greater(c, 5) THEN 3\nIF greater(c, 1) THEN 2\n"
    r = parse_rule(text)
    assert eval_rule(r, Cell(9.0, CellType.NUMBER)) == 2
    assert [f for _, f in r.branches] == [2, 3]


def test_rule_execution_matches_scalar():
    col = Column(
        (
            Cell(1.0, CellType.NUMBER),
            Cell(6.0, CellType.NUMBER),
            Cell("x", CellType.TEXT),
        )
    )
    r = parse_rule('IF lessEquals(c, 5) THEN 1\nIF equals(c, "x") THEN 2\n')
    assert rule_execution(r, col).tolist() == [eval_rule(r, c) for c in col.cells]


# --- parsing / printing ----------------------------------------------------

@pytest.mark.parametrize(
    "text",
    [
        "IF less(c, 5) THEN 1\n",
        'IF contains(c, "in") AND NOT endsWith(c, "w") THEN 2\n',
        "IF greater(c, 2, month) THEN 1\n",
        "IF between(c, 2, 5) OR greater(c, 100) THEN 4\n",
        'IF equals(c, "a\\"b") THEN 1\n',
        "IF between(c, 0.5, 2.25, day) THEN 9\n",
    ],
)
def test_round_trip(text):
    assert print_rule(parse_rule(text)) == text


def test_parse_normalizes_whitespace():
    a = parse_rule("IF   less(c,5)    THEN  1")
    assert print_rule(a) == "IF less(c, 5) THEN 1\n"


@pytest.mark.parametrize(
    "text,msg",
    [
        ("IF between(c, 5, 2) THEN 1\n", "between requires n1 < n2"),
        ("IF less(c, 5) THEN 0\n", "format id must be positive"),
        ("IF wibble(c, 5) THEN 1\n", "unknown predicate"),
        ("IF less(c) THEN 1\n", "1 numeric"),
        ('IF less(c, "x") THEN 1\n', "numeric"),
        ("IF less(c, 5 THEN 1\n", "expected"),
        ("less(c, 5) THEN 1\n", "expected IF"),
        ("IF less(c, 5) THEN 1\nIF greater(c, 9) THEN 1\n", "distinct"),
        ("IF less(c, 5) AND NOT less(c, 5) THEN 1\n", "contradictory"),
        ("IF equals(c, 5, day) THEN 1\n", "one string"),
    ],
)
def test_parse_errors(text, msg):
    with pytest.raises(RuleSyntaxError, match=msg):
        parse_rule(text)


def test_parse_error_carries_position():
    with pytest.raises(RuleSyntaxError, match="line 2"):
        parse_rule("IF less(c, 5) THEN 1\nIF wibble(c, 5) THEN 2\n")


def test_duplicate_literals_collapse():
    r = parse_rule("IF less(c, 5) AND less(c, 5) THEN 1\n")
    assert print_rule(r) == "IF less(c, 5) THEN 1\n"


# --- canonicalization ------------------------------------------------------

def canon_text(text):
    return print_rule(canonicalize(parse_rule(text)))


def test_bounds_pair_into_between():
    assert canon_text("IF greaterEquals(c, 2) AND lessEquals(c, 5) THEN 1\n") == (
        "IF between(c, 2, 5) THEN 1\n"
    )


def test_negation_flip():
    assert canon_text("IF NOT greater(c, 5) THEN 1\n") == "IF lessEquals(c, 5) THEN 1\n"
    assert canon_text("IF NOT lessEquals(c, 5) THEN 1\n") == "IF greater(c, 5) THEN 1\n"


def test_subsumed_clause_dropped():
    got = canon_text('IF contains(c, "a") OR contains(c, "a") AND contains(c, "b") THEN 1\n')
    assert got == 'IF contains(c, "a") THEN 1\n'


def test_contradictory_clause_dropped_after_flip():
    # NOT greaterEquals(5) flips to less(5), contradicting greaterEquals(5)
    # is not constructible directly, so feed the contradiction via two bounds
    got = canon_text(
        'IF greater(c, 5) AND NOT greaterEquals(c, 5) OR contains(c, "x") THEN 1\n'
    )
    assert got == 'IF contains(c, "x") THEN 1\n'


def test_strongest_bounds_pair_first():
    got = canon_text(
        "IF greaterEquals(c, 2) AND greaterEquals(c, 3) AND lessEquals(c, 10) THEN 1\n"
    )
    assert got == "IF between(c, 3, 10) AND greaterEquals(c, 2) THEN 1\n"


def test_exact_match_examples():
    a = parse_rule("IF between(c, 2, 5) THEN 1\n")
    b = parse_rule("IF lessEquals(c, 5) AND greaterEquals(c, 2) THEN 1\n")
    c = parse_rule("IF lessEquals(c, 5) THEN 1\n")
    assert exact_match(a, b)
    assert not exact_match(a, c)
    assert exact_match(a, parse_rule("IF   between(c,2,5)   THEN 1"))


def test_canonicalize_idempotent():
    text = (
        "IF NOT less(c, 3) AND lessEquals(c, 9) OR greater(c, 100) THEN 1\n"
        'IF startsWith(c, "ab") THEN 2\n'
    )
    once = canonicalize(parse_rule(text))
    twice = canonicalize(once)
    assert print_rule(once) == print_rule(twice)


# --- excel export ----------------------------------------------------------

@pytest.mark.parametrize(
    "dnf_text,anchor,want",
    [
        ("less(c, 5)", "A1", "=A1<5"),
        ('contains(c, "in")', "B2", '=ISNUMBER(SEARCH("in",B2))'),
        ("greater(c, 2, month)", "A1", "=MONTH(A1)>2"),
        ("between(c, 2, 5)", "A1", "=AND(A1>=2,A1<=5)"),
        ('equals(c, "do\\"ne")', "C3", '=C3="do""ne"'),
        ('startsWith(c, "ab") AND NOT endsWith(c, "z")', "A1",
         '=AND(LEFT(A1,2)="ab",NOT(RIGHT(A1,1)="z"))'),
        ("less(c, 3, weekday) OR greater(c, 5)", "D4",
         "=OR(WEEKDAY(D4,2)<3,D4>5)"),
    ],
)
def test_excel_formulas(dnf_text, anchor, want):
    assert to_excel_formula(parse_dnf(dnf_text), anchor) == want


# --- semantics preservation ------------------------------------------------

cells = st.one_of(
    st.integers(-20, 20).map(lambda v: Cell(float(v), CellType.NUMBER)),
    st.sampled_from(["alpha", "beta", "al-gamma", "delta"]).map(
        lambda s: Cell(s, CellType.TEXT)
    ),
    st.dates(date(2021, 1, 1), date(2021, 12, 31)).map(
        lambda d: Cell(d, CellType.DATE)
    ),
)


@st.composite
def column_and_rule(draw):
    col = Column(tuple(draw(st.lists(cells, min_size=3, max_size=12))))
    matrix = generate_predicates(col)
    if len(matrix) == 0:
        return col, Rule(())
    pred = st.sampled_from(list(matrix.predicates))
    literal = st.builds(Literal, pred, st.booleans())
    n_branches = draw(st.integers(0, 3))
    branches = []
    for fmt in range(1, n_branches + 1):
        clauses = []
        for _ in range(draw(st.integers(1, 3))):
            lits = draw(st.lists(literal, min_size=1, max_size=3))
            try:
                clauses.append(Clause(tuple(lits)))
            except ValueError:
                continue
        if clauses:
            branches.append((Dnf(tuple(clauses)), fmt))
    return col, Rule(tuple(branches))


@settings(max_examples=120, deadline=None)
@given(column_and_rule())
def test_canonicalize_preserves_pointwise_semantics(pair):
    col, rule = pair
    canon = canonicalize(rule)
    for c in col.cells:
        assert eval_rule(rule, c) == eval_rule(canon, c)


@settings(max_examples=60, deadline=None)
@given(column_and_rule())
def test_print_parse_round_trip_is_exact_match(pair):
    _, rule = pair
    again = parse_rule(print_rule(rule)) if rule.branches else Rule(())
    assert exact_match(rule, again)
    assert print_rule(canonicalize(canonicalize(rule))) == print_rule(canonicalize(rule))
