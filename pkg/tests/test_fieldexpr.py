import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from divsolve.errors import EvaluationDomainError, ExprSyntaxError, UnknownIdentifier
from divsolve.fieldexpr import (
    BinOp, Call, Const, Neg, Num, Pow, Var, FieldExpr, evaluate, parse_field_expr, pretty,
    sample_scalar, sample_vector,
)
from divsolve.grid import build_grid


def test_precedence():
    e = parse_field_expr("1 + 2*x^2")
    assert e.root == BinOp("+", Num(1.0), BinOp("*", Num(2.0), Pow(Var("x"), 2)))
    assert parse_field_expr("-x^2").root == Neg(Pow(Var("x"), 2))
    assert parse_field_expr("2^-1").root == Pow(Num(2.0), -1)
    assert parse_field_expr("x - y").root == BinOp("-", Var("x"), Var("y"))


def test_left_associative():
    assert evaluate(parse_field_expr("8 / 4 / 2"), 0.0, 0.0) == 1.0
    assert evaluate(parse_field_expr("8 - 4 - 2"), 0.0, 0.0) == 2.0


def test_whitespace_insensitive():
    assert parse_field_expr(" sin ( x )*2").root == parse_field_expr("sin(x)*2").root


def test_exp_matches_reference(rng):
    e = parse_field_expr("exp(x + 2*y)")
    x, y = rng.uniform(-1, 1, 10), rng.uniform(-1, 1, 10)
    ref = np.array([math.exp(a + 2 * b) for a, b in zip(x, y)])
    assert np.abs(evaluate(e, x, y) - ref).max() <= 1e-15 * np.abs(ref).max()


def test_constants_and_functions():
    v = evaluate(parse_field_expr("cos(pi) + ln(e) + sin(0)"), 0.0, 0.0)
    assert v == pytest.approx(0.0, abs=1e-15)


def test_unbalanced_paren_offset():
    with pytest.raises(ExprSyntaxError) as info:
        parse_field_expr("sin(x")
    assert info.value.offset == 5


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifier) as info:
        parse_field_expr("x + z")
    assert info.value.offset == 4


@pytest.mark.parametrize("src", ["", "x +", "2 ^ x", "x ^ 1.5", "(x", "x)", "3 $ 4", "sin x"])
def test_syntax_errors(src):
    with pytest.raises(ExprSyntaxError):
        parse_field_expr(src)


def test_sample_constant():
    g = build_grid(4, 3)
    assert np.all(sample_scalar("1", g).values == 1.0)


def test_sample_rotation_faces():
    g = build_grid(8, 8)
    a = sample_vector("-y", "x", g)
    i, j = 3, 5  # x-face at x = 3/8, y = 5.5/8
    assert a.ux[i, j] == -(j + 0.5) / 8
    assert a.uy[j, i] == (j + 0.5) / 8
    assert not a.ux[0].any() and not a.ux[-1].any()
    assert not a.uy[:, 0].any() and not a.uy[:, -1].any()


def test_ln_domain_error_location():
    g = build_grid(4, 4)
    with pytest.raises(EvaluationDomainError) as info:
        sample_scalar("ln(x - 1)", g)
    assert info.value.location == (0, 0)


def test_non_finite_is_reported():
    g = build_grid(4, 4)
    with pytest.raises(EvaluationDomainError):
        sample_scalar("1/(x - 0.375)", g)


_leaf = st.one_of(
    st.floats(0, 1e6, allow_nan=False).map(Num),
    st.sampled_from(["x", "y"]).map(Var),
    st.sampled_from(["pi", "e"]).map(Const),
)


def _extend(children):
    return st.one_of(
        children.map(Neg),
        st.tuples(st.sampled_from("+-*/"), children, children).map(lambda t: BinOp(*t)),
        st.tuples(children, st.integers(-4, 6)).map(lambda t: Pow(*t)),
        st.tuples(st.sampled_from(["sin", "cos", "exp", "ln"]), children).map(lambda t: Call(*t)),
    )


trees = st.recursive(_leaf, _extend, max_leaves=12)


@given(trees)
def test_pretty_roundtrip(tree):
    assert parse_field_expr(pretty(tree)).root == tree


@given(trees, st.floats(0.01, 1), st.floats(0.01, 1))
def test_evaluation_is_reproducible(tree, x, y):
    e = FieldExpr(tree)
    try:
        a = evaluate(e, np.array([x]), np.array([y]))
    except EvaluationDomainError:
        return
    b = evaluate(parse_field_expr(pretty(tree)), np.array([x]), np.array([y]))
    assert a.tobytes() == b.tobytes()
