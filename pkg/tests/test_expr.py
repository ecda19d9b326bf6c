import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stgmsfem.expr import ExpressionError, parse_expression


@pytest.mark.parametrize("text, value", [
    ("1", 1.0), ("1-x*y", 1 - 0.5 * 0.25), ("-2^2", -4.0), ("2^3^2", 512.0), ("(1+2)*3", 9.0),
    ("sin(2*x+2*y-4*t)", np.sin(1.0 + 0.5 - 0.4)), ("exp(-x)/2", np.exp(-0.5) / 2), ("cos(pi)", -1.0),
    (".5e1 + 1E-1", 5.1), ("--x", 0.5),
])
def test_values(text, value):
    assert parse_expression(text)(0.5, 0.25, 0.1) == pytest.approx(value, rel=1e-15)


def test_broadcasting_and_variables():
    e = parse_expression("x + 2*y")
    x = np.linspace(0, 1, 5)
    assert np.array_equal(e(x, 1.0), x + 2)
    assert parse_expression("1").variables == set()
    assert parse_expression("sin(t)*x").variables == {"t", "x"}
    assert e(x, 0.0).shape == (5,) and parse_expression("3")(x).shape == (5,)


def test_spatial_freezes_time():
    f = parse_expression("x + t").spatial(2.0)
    assert f(1.0, 0.0) == 3.0


@pytest.mark.parametrize("text, pos", [("1 +", 3), ("sin x", 4), ("foo(1)", 0), ("(1", 2), ("1 $ 2", 2),
                                       ("1 2", 2), ("", 0)])
def test_errors_report_position(text, pos):
    with pytest.raises(ExpressionError) as info:
        parse_expression(text)
    assert info.value.pos == pos


def test_non_string_rejected():
    with pytest.raises(TypeError):
        parse_expression(1.0)


@given(st.floats(-1e3, 1e3, allow_nan=False), st.floats(-1e3, 1e3, allow_nan=False))
def test_linear_combination_matches_numpy(a, b):
    e = parse_expression(f"{a!r}*x - ({b!r})*y")
    assert e(0.3, 0.7) == pytest.approx(a * 0.3 - b * 0.7, rel=1e-12, abs=1e-12)
