import math
import pickle
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from periodnorm import expr as ex
from periodnorm.errors import DifferentiationError, EvaluationDomainError, ParseError, UnknownIdentifierError

from exprgen import central_difference, random_expr, sample_pairs

X, Y = ex.Var("x"), ex.Var("y")


# parsing

def test_precedence_of_sum_of_powers():
    assert ex.parse("x^2+y^2") == ex.BinOp("+", ex.BinOp("^", X, ex.Const(2.0)), ex.BinOp("^", Y, ex.Const(2.0)))


def test_unary_minus_binds_looser_than_power():
    e = ex.parse("-x^2")
    assert e == ex.Neg(ex.BinOp("^", X, ex.Const(2.0)))
    assert ex.evaluate(e, (2.0, 0.0)) == -4.0


def test_scientific_literal_and_call():
    e = ex.parse("sin(x*y) + 1e-3")
    assert e == ex.BinOp("+", ex.Call("sin", ex.BinOp("*", X, Y)), ex.Const(0.001))


def test_power_is_right_associative():
    assert ex.evaluate(ex.parse("2^3^2"), (0, 0)) == 512.0


def test_double_star_is_power():
    assert ex.parse("x**3") == ex.parse("x^3")


def test_whitespace_insensitive():
    assert ex.parse(" x *\t( y+1 ) ") == ex.parse("x*(y+1)")


def test_constants_pi_and_e():
    assert ex.evaluate(ex.parse("pi"), (0, 0)) == math.pi
    assert ex.evaluate(ex.parse("e^x"), (1, 0)) == pytest.approx(math.e)


@pytest.mark.parametrize("text, offset", [("x + ", 4), ("(x", 2), ("x y", 2), ("", 0), ("2*)", 2)])
def test_syntax_error_reports_offset(text, offset):
    with pytest.raises(ParseError) as info:
        ex.parse(text)
    assert info.value.offset == offset
    assert info.value.expected


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifierError) as info:
        ex.parse("x + zz")
    assert info.value.name == "zz"
    assert info.value.offset == 4


def test_offsets_are_bytes():
    with pytest.raises(ParseError) as info:
        ex.parse("x + é")
    assert info.value.offset == 4


def test_custom_variables():
    e = ex.parse("2*h + 1", variables=("h",))
    assert ex.evaluate(e, {"h": 3.0}, variables=("h",)) == 7.0
    with pytest.raises(UnknownIdentifierError):
        ex.parse("x", variables=("h",))


# evaluation

def test_evaluate_examples():
    assert ex.evaluate(ex.parse("x^2+y^2"), (3, 4)) == 25.0
    assert ex.evaluate(ex.parse("exp(x)*y"), (1, 2)) == pytest.approx(2 * math.e, rel=1e-15)


@pytest.mark.parametrize("text, p, culprit", [
    ("ln(x)", (-1, 0), "ln(x)"),
    ("1 + sqrt(y)", (0, -1), "sqrt(y)"),
    ("x/y", (1, 0), "x/y"),
    ("(x-1)^0.5", (0, 0), "(x - 1)^0.5"),
])
def test_domain_errors_name_the_subtree(text, p, culprit):
    with pytest.raises(EvaluationDomainError) as info:
        ex.evaluate(ex.parse(text), p)
    assert str(info.value.subtree) == culprit


def test_integer_power_of_negative_base():
    assert ex.evaluate(ex.parse("x^3"), (-2, 0)) == -8.0
    assert ex.evaluate(ex.parse("x^-2"), (-2, 0)) == 0.25


def test_compiled_matches_tree_evaluator():
    for e, p in sample_pairs(40, 7):
        f = ex.compile_expr(e)
        assert f(*p) == ex.evaluate(e, p)


def test_compiled_raises_domain_error():
    f = ex.compile_expr(ex.parse("ln(x)"))
    with pytest.raises(EvaluationDomainError):
        f(-1.0, 0.0)


def test_expr_is_picklable_and_hashable():
    e = ex.parse("sin(x)*y^2")
    assert pickle.loads(pickle.dumps(e)) == e
    assert hash(e) == hash(ex.parse("sin(x)*y^2"))


# differentiation

def test_power_rule_prints_folded():
    d = ex.differentiate(ex.parse("x^2"), "x")
    assert str(d) == "2*x"


def test_derivative_of_independent_variable():
    assert str(ex.differentiate(ex.parse("y"), "x")) == "0"


def test_chain_rule_matches_finite_difference():
    d = ex.differentiate(ex.parse("sin(x*y)"), "x")
    value = ex.evaluate(d, (1, 2))
    assert value == pytest.approx(2 * math.cos(2), abs=1e-12)
    assert value == pytest.approx(central_difference(ex.parse("sin(x*y)"), "x", (1, 2)), abs=1e-8)


def test_sum_of_squares_derivative_is_small():
    d = ex.fold(ex.differentiate(ex.parse("x^2+y^2"), "x"))
    assert str(d) == "2*x"
    assert ex.node_count(d) <= 3


def test_abs_is_not_differentiable():
    assert ex.evaluate(ex.parse("abs(x)"), (-2, 0)) == 2.0
    with pytest.raises(DifferentiationError):
        ex.differentiate(ex.parse("abs(x) + y"), "x")


@pytest.mark.parametrize("text, p, expected", [
    ("x^y", (2.0, 3.0), 3 * 4.0),
    ("tan(x)", (0.3, 0.0), 1 / math.cos(0.3) ** 2),
    ("tanh(x)", (0.3, 0.0), 1 - math.tanh(0.3) ** 2),
    ("ln(x)", (0.5, 0.0), 2.0),
    ("sqrt(x)", (4.0, 0.0), 0.25),
    ("1/x", (2.0, 0.0), -0.25),
])
def test_elementary_rules(text, p, expected):
    assert ex.evaluate(ex.differentiate(ex.parse(text), "x"), p) == pytest.approx(expected, rel=1e-14)


def test_random_derivatives_against_central_differences():
    for e, p in sample_pairs(60, 2024):
        for var in "xy":
            s = ex.evaluate(ex.differentiate(e, var), p)
            assert abs(s - central_difference(e, var, p)) <= 1e-5 * (1 + abs(s)), (str(e), p, var)


# folding

@pytest.mark.parametrize("text, folded", [
    ("x*1 + 0*y", "x"),
    ("2*3 + x", "6 + x"),
    ("x^1", "x"),
    ("x^0", "1"),
    ("0 - x", "-x"),
    ("x/1 - 0", "x"),
    ("sin(0) + y", "y"),
])
def test_fold_examples(text, folded):
    assert str(ex.fold(ex.parse(text))) == folded


def test_fold_keeps_failing_constants():
    e = ex.fold(ex.parse("x + 1/0"))
    with pytest.raises(EvaluationDomainError):
        ex.evaluate(e, (1, 1))


def test_folded_tree_has_no_constant_binary_nodes():
    def check(e):
        if isinstance(e, ex.BinOp):
            assert not (isinstance(e.left, ex.Const) and isinstance(e.right, ex.Const)), str(e)
            check(e.left)
            check(e.right)
        elif isinstance(e, (ex.Neg, ex.Call)):
            check(e.arg)

    for e, _ in sample_pairs(50, 11):
        check(ex.fold(e))


def test_substitute_and_free_variables():
    e = ex.substitute(ex.parse("x*y"), {"y": ex.parse("x+1")})
    assert ex.free_variables(e) == frozenset({"x"})
    assert ex.evaluate(e, (2, 99)) == 6.0


# properties

SEEDS = st.integers(min_value=0, max_value=2**31 - 1)
POINTS = st.tuples(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))


@settings(max_examples=60, deadline=None)
@given(SEEDS, POINTS)
def test_fold_preserves_value(seed, p):
    e = random_expr(random.Random(seed))
    try:
        v = ex.evaluate(e, p)
    except (ArithmeticError, ValueError):
        return
    assert ex.evaluate(ex.fold(e), p) == v


@settings(max_examples=60, deadline=None)
@given(SEEDS)
def test_print_parse_round_trip(seed):
    e = random_expr(random.Random(seed))
    again = ex.parse(str(e))
    for p in [(0.3, -0.7), (1.1, 0.4)]:
        try:
            v = ex.evaluate(e, p)
        except (ArithmeticError, ValueError):
            continue
        assert ex.evaluate(again, p) == pytest.approx(v, rel=1e-12, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(SEEDS, POINTS)
def test_derivative_property(seed, p):
    e = random_expr(random.Random(seed))
    try:
        v = ex.evaluate(e, p)
    except (ArithmeticError, ValueError):
        return
    if not math.isfinite(v) or abs(v) > 1e3:
        return
    s = ex.evaluate(ex.differentiate(e, "x"), p)
    assert abs(s - central_difference(e, "x", p)) <= 1e-5 * (1 + abs(s))
