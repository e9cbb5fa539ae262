from fractions import Fraction

import pytest
from hypothesis import given, settings as hyp_settings, strategies as st

from stlenforce.services.stl import (
    TRUE,
    AffineExpr,
    And,
    Comparison,
    FormulaSyntaxError,
    Interval,
    IntervalError,
    Lit,
    MissingVariableError,
    NestedTemporalError,
    NonAffineError,
    Or,
    Predicate,
    Release,
    Until,
    eval_lit,
    eval_predicate,
    format_formula,
    horizon,
    make_predicate,
    negate,
    parse_formula,
    predicates,
    relevant_points,
    temporal_terms,
    variable_valuations,
)


def _pred(pid, coefficients, constant, op=Comparison.GE):
    return Predicate(pid, AffineExpr.of(coefficients, constant), op)


def test_parse_safe_stopping_normalizes_le_to_ge():
    phi = parse_formula("(v <= 30) U[5,10] (v == 0)")
    assert isinstance(phi, Until)
    assert phi.interval == Interval(5, 10)
    left, right = phi.left.predicate, phi.right.predicate
    assert left.op is Comparison.GE
    assert left.expr == AffineExpr.of({"v": -1}, 30)
    assert right.op is Comparison.EQ
    assert right.expr == AffineExpr.of({"v": 1}, 0)
    assert (left.id, right.id) == ("p1", "p2")


def test_parse_safe_charging_release_strict():
    phi = parse_formula("(V == 4.2) R[2,10] (I < 10)")
    assert isinstance(phi, Release)
    assert phi.left.predicate.expr == AffineExpr.of({"V": 1}, "-4.2")
    assert phi.right.predicate.op is Comparison.GT
    assert phi.right.predicate.expr == AffineExpr.of({"I": -1}, 10)


def test_parse_true_and_eventually_sugar():
    assert parse_formula("true") == TRUE
    phi = parse_formula("F[1,2] (x >= 1)")
    assert isinstance(phi, Until)
    assert phi.left == TRUE
    assert phi.interval == Interval(1, 2)


def test_parse_rational_and_negated_operands():
    phi = parse_formula("(!(2*x - y > 1/3)) U[0,3/2] (x + y >= 1)")
    assert phi.interval.hi == Fraction(3, 2)
    assert phi.left.polarity is False
    assert phi.left.predicate.expr == AffineExpr.of({"x": 2, "y": -1}, "-1/3")


def test_parse_top_level_conjunction_and_disjunction():
    phi = parse_formula("(a >= 0) U[0,1] (b >= 0) and (c >= 0) R[1,2] (d >= 0) & (e > 0) U[0,3] (a >= 0)")
    assert isinstance(phi, And)
    assert [p.id for p in predicates(phi)] == ["p1", "p2", "p3", "p4", "p5"]
    assert len(temporal_terms(phi)) == 3
    phi = parse_formula("((a >= 0) U[0,1] (b >= 0)) or ((a >= 1) U[0,1] (b >= 1))")
    assert isinstance(phi, Or)


def test_predicates_merge_structural_duplicates():
    phi = parse_formula("(x >= 1) U[4,5] (y >= 0) and (x >= 1) U[1,2] (z >= 0)")
    assert [str(p) for p in predicates(phi)] == ["x - 1 >= 0", "y >= 0", "z >= 0"]
    assert predicates(TRUE) == ()


@pytest.mark.parametrize(
    "text, message_type",
    [
        ("((x >= 1) U[0,1] (y >= 1)) U[0,2] (z >= 0)", NestedTemporalError),
        ("(x >= 1) U[3,2] (y >= 1)", IntervalError),
        ("(x >= 1) U[-1,2] (y >= 1)", IntervalError),
        ("(x*y >= 1) U[0,1] (y >= 1)", NonAffineError),
        ("(x^2 >= 1) U[0,1] (y >= 1)", NonAffineError),
    ],
)
def test_parse_rejects_invalid_formulas(text, message_type):
    with pytest.raises(message_type):
        parse_formula(text)


def test_syntax_error_reports_position():
    with pytest.raises(FormulaSyntaxError) as info:
        parse_formula("(x >= 1) U[0,1] (y >= 1) and")
    assert info.value.position is not None


def test_mixed_connectives_need_parentheses():
    with pytest.raises(FormulaSyntaxError):
        parse_formula("(a >= 0) U[0,1] (b >= 0) and (c >= 0) U[0,1] (d >= 0) or (e >= 0) U[0,1] (a >= 0)")


def test_relevant_points_examples(running_formula):
    assert relevant_points(running_formula) == (0, 4, 5)
    assert relevant_points(TRUE) == ()
    phi = parse_formula("(a >= 0) U[4,5] (b >= 0) and (c >= 0) R[2,10] (d >= 0)")
    assert relevant_points(phi) == (0, 2, 4, 5, 10)
    assert horizon(phi) == 10
    assert horizon(TRUE) == 0


def test_variable_valuations_thresholds():
    phi = parse_formula("(x1 >= 0.7) U[0,1] (2*x - 2 >= 0) and (x + y >= 1) U[0,1] (z >= 0)")
    zero_sets = {str(p): z for p, z in variable_valuations(phi).items()}
    assert zero_sets["x1 - 0.7 >= 0"].threshold == Fraction(7, 10)
    assert zero_sets["2*x - 2 >= 0"].threshold == 1
    assert zero_sets["x + y - 1 >= 0"].threshold is None
    assert str(zero_sets["x + y - 1 >= 0"]) == "x + y - 1 = 0"


def test_eval_predicate_boundaries():
    p1 = make_predicate("p1", AffineExpr.of({"x1": 1}), Comparison.GE, Fraction(7, 10))
    assert eval_predicate(p1, {"x1": Fraction(7, 10)})
    p2 = make_predicate("p2", AffineExpr.of({"x2": 1}), Comparison.GE, Fraction(1, 2))
    assert not eval_predicate(p2, {"x2": Fraction(3, 10)})
    stop = make_predicate("p3", AffineExpr.of({"v": 1}), Comparison.EQ, 0)
    assert eval_predicate(stop, {"v": Fraction(0)})
    with pytest.raises(MissingVariableError):
        eval_predicate(stop, {"w": Fraction(0)})


def test_negate_is_nnf_dual():
    a = Lit(_pred("p1", {"x": 1}, 0))
    b = Lit(_pred("p2", {"y": 1}, 0), polarity=False)
    assert negate(And(a, b)) == Or(Lit(a.predicate, False), Lit(b.predicate, True))
    point = {"x": Fraction(1), "y": Fraction(-1)}
    formula = Or(a, b)
    assert eval_lit(negate(formula), point) == (not eval_lit(formula, point))


_ATOMS = [
    "x >= 1",
    "y < 2/3",
    "x - y > 0.5",
    "3*z == 2",
    "!(x + z <= 4)",
    "true",
]


@st.composite
def _formulas(draw):
    def operand():
        first = draw(st.sampled_from(_ATOMS))
        if first != "true" and draw(st.booleans()):
            second = draw(st.sampled_from(_ATOMS[:-1]))
            return f"({first}) {draw(st.sampled_from(['&&', '||']))} ({second})"
        return first

    def term():
        lo = draw(st.integers(0, 5))
        hi = lo + draw(st.integers(0, 5))
        op = draw(st.sampled_from(["U", "R"]))
        return f"({operand()}) {op}[{lo},{hi}] ({operand()})"

    terms = [term() for _ in range(draw(st.integers(1, 3)))]
    joiner = draw(st.sampled_from([" and ", " or "]))
    return joiner.join(terms)


@hyp_settings(max_examples=80, deadline=None)
@given(_formulas())
def test_print_parse_round_trip(text):
    phi = parse_formula(text)
    assert parse_formula(format_formula(phi)) == phi


@hyp_settings(max_examples=80, deadline=None)
@given(_formulas())
def test_relevant_points_follow_structure(text):
    phi = parse_formula(text)
    expected = set()
    for term in temporal_terms(phi):
        expected |= {term.interval.lo, term.interval.hi}
        if any(isinstance(op, (Lit, And, Or)) for op in (term.left, term.right)):
            expected.add(Fraction(0))
    assert set(relevant_points(phi)) == expected
    assert list(relevant_points(phi)) == sorted(expected)
