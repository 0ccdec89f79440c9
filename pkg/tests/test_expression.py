import numpy as np
import pytest
from numpy.testing import assert_allclose

from qd_model.errors import (
    ArityError,
    DimensionMismatchError,
    ExpressionSyntaxError,
    UnboundParameterError,
    UnknownIdentifierError,
)
from qd_model.expression import (
    Abs,
    Add,
    Binding,
    Const,
    Max,
    Mul,
    Param,
    SmoothUnary,
    Sub,
    Var,
    eval_expr,
    eval_many,
    finite_difference_dd,
    parameters,
    parse,
    pretty,
    qd_at,
    value_and_qd,
)
from qd_model.polytope import Polytope
from qd_model.quasidiff import dd

SIN_ROW_1 = "max(2*x1, x1) - abs(sin(p*x2))"
SIN_ROW_2 = "min(x2, 2*x2) + sin(p*(x1 + x2))"

KINKED = [
    (SIN_ROW_1, 2),
    (SIN_ROW_2, 2),
    ("abs(x1) - abs(x2)", 2),
    ("abs(0.05 - (abs(x1) - abs(x2)))", 2),
    ("min(x1, max(pow(x1, 3), 0))", 1),
    ("max(x1*x2, abs(x1 - x2)) - min(exp(x1), 1 + x2)", 2),
    ("-max(abs(x1), 2*x2) + 3*min(x1, -x2)", 2),
]


def test_parse_builds_tree():
    e = parse(SIN_ROW_1, 2)
    expected = Sub(
        Max((Mul(Const(2.0), Var(1)), Var(1))),
        Abs(SmoothUnary("sin", Mul(Param("p"), Var(2)))),
    )
    assert e == expected
    assert parameters(e) == {"p"}


@pytest.mark.parametrize("text, n", KINKED + [("pow(x1, 3)*cos(x2) - exp(-x1)", 2), ("-(x1 - x2)*2", 2)])
def test_pretty_reparses_to_same_tree(text, n):
    e = parse(text, n)
    assert parse(pretty(e), n) == e


def test_pretty_text():
    assert pretty(parse(SIN_ROW_1, 2)) == SIN_ROW_1
    assert pretty(parse("x1 - (x2 - x1)", 2)) == "x1 - (x2 - x1)"
    assert pretty(parse("(x1 + x2)*x1", 2)) == "(x1 + x2)*x1"


def test_operator_helpers():
    assert Var(1) + 2 == Add(Var(1), Const(2.0))
    assert 3 * Var(2) == Mul(Const(3.0), Var(2))


@pytest.mark.parametrize("text, error, offset", [
    ("x3", UnknownIdentifierError, 0),
    ("x1 + foo(x1)", UnknownIdentifierError, 5),
    ("x1 + $", ExpressionSyntaxError, 5),
    ("x1\u00a0+ $", ExpressionSyntaxError, 6),
    ("(x1 + x2", ExpressionSyntaxError, 8),
    ("x1 x2", ExpressionSyntaxError, 3),
    ("pow(x1, 0.5)", ExpressionSyntaxError, 0),
])
def test_parse_errors_carry_byte_offset(text, error, offset):
    with pytest.raises(error) as info:
        parse(text, 2)
    assert info.value.offset == offset


def test_unknown_identifier_names_itself():
    with pytest.raises(UnknownIdentifierError) as info:
        parse("x1 + x3", 2)
    assert info.value.name == "x3"


@pytest.mark.parametrize("text", ["max(x1)", "min(x1)", "sin(x1, x2)", "pow(x1)", "abs(x1, x2)"])
def test_arity_errors(text):
    with pytest.raises(ArityError):
        parse(text, 2)


def test_eval_and_binding():
    e = parse(SIN_ROW_2, 2)
    b = Binding([0.3, -0.2], {"p": 2.0})
    expected = min(-0.2, -0.4) + np.sin(2.0 * 0.1)
    assert eval_expr(e, b) == pytest.approx(expected)
    pts = np.array([[0.3, -0.2], [0.0, 0.0]])
    assert_allclose(eval_many(e, pts, {"p": 2.0}), [expected, 0.0])


def test_eval_requires_parameters_and_dimension():
    e = parse(SIN_ROW_1, 2)
    with pytest.raises(UnboundParameterError) as info:
        eval_expr(e, Binding([0.0, 0.0]))
    assert info.value.name == "p"
    with pytest.raises(DimensionMismatchError):
        eval_expr(e, Binding([0.0], {"p": 1.0}))


def test_sin_system_rows_at_origin():
    b = Binding([0.0, 0.0], {"p": 1.0})
    q1 = qd_at(parse(SIN_ROW_1, 2), b)
    assert q1.sub == Polytope([[1, 0], [2, 0]])
    assert q1.super == Polytope([[0, -1], [0, 1]])
    q2 = qd_at(parse(SIN_ROW_2, 2), b)
    assert q2.sub == Polytope.point([1, 1])
    assert q2.super == Polytope([[0, 1], [0, 2]])


def test_min_of_smooth_functions_goes_to_superdifferential():
    q = qd_at(parse("min(x1, x2)", 2), Binding([0.0, 0.0]))
    assert q.sub == Polytope.zeros(2)
    assert q.super == Polytope([[1, 0], [0, 1]])


def test_abs_of_smooth_function():
    q = qd_at(parse("abs(x1 - x2)", 2), Binding([1.0, 1.0]))
    assert q.sub == Polytope([[-1, 1], [1, -1]])
    assert q.super == Polytope.zeros(2)


def test_product_rule_with_kink():
    value, q = value_and_qd(parse("x1*abs(x2)", 2), Binding([2.0, 0.0]))
    assert value == pytest.approx(0.0)
    assert dd(q, [0.0, -1.0]) == pytest.approx(2.0)
    assert dd(q, [5.0, 1.0]) == pytest.approx(2.0)


@pytest.mark.parametrize("text, n", KINKED)
def test_derivative_matches_finite_differences_at_kink(text, n, rng):
    e = parse(text, n)
    b = Binding(np.zeros(n), {"p": 1.0})
    q = qd_at(e, b)
    for _ in range(100):
        h = rng.standard_normal(n)
        h /= np.linalg.norm(h)
        assert dd(q, h) == pytest.approx(finite_difference_dd(e, b, h), abs=1e-4)


@pytest.mark.parametrize("text, n", KINKED)
def test_derivative_matches_finite_differences_at_random_points(text, n, rng):
    e = parse(text, n)
    for _ in range(100):
        b = Binding(rng.uniform(-1, 1, size=n), {"p": 1.0})
        h = rng.standard_normal(n)
        q = qd_at(e, b)
        fd = finite_difference_dd(e, b, h, steps=(1e-6, 1e-7))
        assert dd(q, h) == pytest.approx(fd, abs=1e-4)


def test_finite_difference_checks_direction_size():
    with pytest.raises(DimensionMismatchError):
        finite_difference_dd(parse("x1", 2), Binding([0.0, 0.0]), [1.0])
