import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from depcag.engine.error import ExprArityError, ExprEvalError, ExprNameError, ExprSyntaxError
from depcag.exprlang import BinOp, Call, Neg, Num, Var, evaluate, free_variables, parse, to_source


def value_of(src: str, **env) -> float:
    return evaluate(parse(src), env)


@pytest.mark.parametrize("src, expected", [
    ("1 + 2*3", 7.0),
    ("(1 + 2)*3", 9.0),
    ("-2^2", -4.0),
    ("(-2)^2", 4.0),
    ("2^3^2", 512.0),
    ("8/4/2", 1.0),
    ("1 - 2 - 3", -4.0),
    ("2*-3", -6.0),
    ("pi", math.pi),
    ("max(1, min(5, 3))", 3.0),
    ("abs(-2.5e1)", 25.0),
    (".5 + 1.", 1.5),
])
def test_precedence_and_associativity(src, expected):
    assert value_of(src) == pytest.approx(expected)


def test_variables():
    assert value_of("t*x1 + y2", t=2.0, x1=3.0, y2=-1.0) == pytest.approx(5.0)


def test_vectorized_evaluation():
    out = evaluate(parse("t*x1"), {"t": np.array([1.0, 2.0, 3.0]), "x1": 2.0})
    assert isinstance(out, np.ndarray)
    assert np.allclose(out, [2.0, 4.0, 6.0])


def test_scalar_evaluation_returns_float():
    assert isinstance(value_of("sin(t)", t=0.3), float)


def test_free_variables():
    assert free_variables(parse("x1 + sin(t)*y2 - pi")) == {"x1", "t", "y2"}


class TestParseErrors:
    def test_unexpected_character_offset(self):
        with pytest.raises(ExprSyntaxError) as exc:
            parse("x1 + $")
        assert exc.value.offset == 5

    def test_offsets_are_bytes(self):
        # U+00A0 is whitespace and two bytes long in UTF-8
        with pytest.raises(ExprSyntaxError) as exc:
            parse("x1\u00a0+ $")
        assert exc.value.offset == 6

    def test_trailing_token(self):
        with pytest.raises(ExprSyntaxError) as exc:
            parse("1 2")
        assert exc.value.offset == 2

    def test_unclosed_parenthesis(self):
        with pytest.raises(ExprSyntaxError, match="expected '\\)'"):
            parse("(1 + 2")

    def test_function_without_arguments(self):
        with pytest.raises(ExprSyntaxError, match="needs an argument list"):
            parse("sin + 1")

    def test_empty_input(self):
        with pytest.raises(ExprSyntaxError, match="end of input"):
            parse("")

    @pytest.mark.parametrize("src, name, offset", [("x1 + z", "z", 5), ("x0", "x0", 0), ("2*theta", "theta", 2)])
    def test_unknown_identifier(self, src, name, offset):
        with pytest.raises(ExprNameError) as exc:
            parse(src)
        assert exc.value.name == name
        assert exc.value.offset == offset

    def test_unknown_function(self):
        with pytest.raises(ExprNameError, match="Unknown function 'sqrt'"):
            parse("1 + sqrt(t)")

    @pytest.mark.parametrize("src", ["min(x1)", "sin(1, 2)", "max(1, 2, 3)"])
    def test_arity(self, src):
        with pytest.raises(ExprArityError):
            parse(src)


class TestEvalErrors:
    def test_division_by_zero_names_subexpression(self):
        with pytest.raises(ExprEvalError, match="division by zero") as exc:
            value_of("x1/(t - 1)", x1=1.0, t=1.0)
        assert exc.value.subexpression == "(x1/(t-1.0))"

    def test_division_by_zero_anywhere_in_array(self):
        with pytest.raises(ExprEvalError):
            evaluate(parse("1/t"), {"t": np.array([1.0, 0.0])})

    def test_non_finite(self):
        with pytest.raises(ExprEvalError, match="non-finite"):
            value_of("exp(1000)")

    def test_unbound(self):
        with pytest.raises(ExprEvalError, match="unbound variable 'y1'"):
            value_of("y1 + 1")


_leaves = st.one_of(
    st.floats(min_value=0.0, max_value=1e6, allow_nan=False).map(lambda v: Num(value=v)),
    st.sampled_from(["t", "x1", "x2", "y1"]).map(lambda n: Var(name=n)),
)


def _extend(children):
    return st.one_of(
        children.map(lambda c: Neg(operand=c)),
        st.tuples(st.sampled_from(["+", "-", "*", "/", "^"]), children, children)
          .map(lambda p: BinOp(op=p[0], left=p[1], right=p[2])),
        st.tuples(st.sampled_from(["sin", "cos", "exp", "tanh", "abs"]), children)
          .map(lambda p: Call(func=p[0], args=(p[1],))),
        st.tuples(st.sampled_from(["min", "max"]), children, children)
          .map(lambda p: Call(func=p[0], args=(p[1], p[2]))),
    )


@settings(max_examples=200, deadline=None)
@given(st.recursive(_leaves, _extend, max_leaves=12))
def test_printed_source_reparses_to_same_tree(e):
    assert parse(to_source(e)) == e
