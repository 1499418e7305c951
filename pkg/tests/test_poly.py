from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from newtonsing.poly import (
    MultiPoly,
    PolyParseError,
    evaluate,
    format_poly,
    parse_poly,
    partial_derivative,
)


def test_parse_examples():
    assert parse_poly("x1^2 + x2^2", 2).as_dict() == {(2, 0): 1, (0, 2): 1}
    assert parse_poly("x1*x2", 2).as_dict() == {(1, 1): 1}
    assert parse_poly("3*x1^2*x2^3 - x2^5", 2).as_dict() == {(2, 3): 3, (0, 5): -1}


def test_parse_rational_exact():
    p = parse_poly("2/3*x1 - -1*x2^2 + 1/3*x1", 2)
    assert p.as_dict() == {(1, 0): Fraction(1), (0, 2): Fraction(1)}
    assert isinstance(p.as_dict()[(1, 0)], Fraction)


def test_parse_combines_repeated_factors():
    assert parse_poly("x1*x1*x2", 2).as_dict() == {(2, 1): 1}


@pytest.mark.parametrize(
    "text,pos",
    [("x1 + ", 5), ("x1 ^ 0", 5), ("x1 $ x2", 3), ("2*", 2), ("x1 x2", 3), ("1/0*x1", 2)],
)
def test_parse_errors_report_position(text, pos):
    with pytest.raises(PolyParseError) as info:
        parse_poly(text, 2)
    assert info.value.position == pos


def test_parse_var_out_of_range():
    with pytest.raises(PolyParseError, match="out of range"):
        parse_poly("x1 + x3", 2)
    with pytest.raises(PolyParseError):
        parse_poly("x0", 2)


def test_zero_poly_needs_flag():
    with pytest.raises(ValueError):
        parse_poly("x1 - x1", 1)
    assert parse_poly("x1 - x1", 1, allow_zero=True).is_zero()


def test_eval_examples():
    assert evaluate(parse_poly("x1^2+x2^2", 2), [1, 1]) == 2
    assert evaluate(parse_poly("x1*x2", 2), [0.5, 0.25]) == 0.125
    assert evaluate(parse_poly("x1^2*x2^3", 2), [2, 1]) == 4


def test_eval_origin_exact_zero():
    p = parse_poly("x1^2 - 7/3*x1*x2 + x2^5", 2)
    assert evaluate(p, [0.0, 0.0]) == 0.0


def test_eval_vectorized_matches_pointwise():
    p = parse_poly("x1^3*x2 - 2*x2^2 + 1/7*x1", 2)
    pts = np.random.default_rng(0).uniform(-1, 1, size=(5, 3, 2))
    out = evaluate(p, pts)
    assert out.shape == (5, 3)
    for idx in np.ndindex(5, 3):
        assert out[idx] == evaluate(p, pts[idx])


def test_partial_derivative_examples():
    assert partial_derivative(parse_poly("x1^2+x2^2", 2), 1).as_dict() == {(1, 0): 2}
    assert partial_derivative(parse_poly("x1*x2", 2), 2).as_dict() == {(1, 0): 1}
    assert partial_derivative(parse_poly("x2^5", 2), 1).is_zero()
    with pytest.raises(ValueError):
        partial_derivative(parse_poly("x2^5", 2), 3)


def test_format_examples():
    assert format_poly(parse_poly("x2^5 - 3*x1^2*x2^3", 2)) == "-3*x1^2*x2^3 + x2^5"
    assert format_poly(parse_poly("2/3*x1 - 1", 1)) == "2/3*x1 - 1"


@st.composite
def polys(draw, max_vars=3):
    n = draw(st.integers(1, max_vars))
    nterms = draw(st.integers(1, 6))
    coeffs = {}
    for _ in range(nterms):
        exp = tuple(draw(st.lists(st.integers(0, 5), min_size=n, max_size=n)))
        num = draw(st.integers(-9, 9).filter(lambda v: v != 0))
        den = draw(st.integers(1, 5))
        coeffs[exp] = Fraction(num, den)
    p = MultiPoly.from_dict(n, coeffs)
    if p.is_zero():
        p = MultiPoly.from_dict(n, {(1,) * n: 1})
    return p


@settings(max_examples=200, deadline=None)
@given(polys())
def test_roundtrip(p):
    assert parse_poly(format_poly(p), p.nvars) == p


@settings(max_examples=100, deadline=None)
@given(polys(), st.integers(0, 2**31 - 1))
def test_derivative_matches_finite_difference(p, seed):
    rng = np.random.default_rng(seed)
    h = 1e-5
    for axis in range(1, p.nvars + 1):
        dp = partial_derivative(p, axis)
        for _ in range(5):
            x = rng.uniform(-1, 1, p.nvars)
            g = evaluate(dp, x)
            scale = max(abs(float(c)) for _, c in p.terms)
            if abs(g) < 1e-2 * scale:
                continue  # too close to a critical point for a relative check
            e = np.zeros(p.nvars)
            e[axis - 1] = h
            fd = (evaluate(p, x + e) - evaluate(p, x - e)) / (2 * h)
            assert abs(fd - g) <= 1e-6 * abs(g) + 1e-9 * scale


@settings(max_examples=100, deadline=None)
@given(polys(max_vars=2), polys(max_vars=2), st.integers(0, 2**31 - 1))
def test_linearity(p, q, seed):
    if p.nvars != q.nvars:
        return
    x = np.random.default_rng(seed).uniform(-1, 1, size=(20, p.nvars))
    lhs = evaluate(p + q, x)
    rhs = evaluate(p, x) + evaluate(q, x)
    scale = np.abs(evaluate(p, x)) + np.abs(evaluate(q, x)) + 1
    assert np.all(np.abs(lhs - rhs) <= 64 * np.finfo(float).eps * scale * 8)


def test_immutable():
    p = parse_poly("x1", 1)
    with pytest.raises(Exception):
        p.nvars = 2
