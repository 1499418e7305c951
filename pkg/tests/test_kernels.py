import numpy as np
import pytest
from scipy.integrate import quad

from newtonsing.kernels import (
    PairingDivergence,
    TruncatedKernel,
    dyadic_piece,
    example_kernel,
    gaussian,
    mixed_difference,
    pair_with_test_function,
    piece_indices,
    plateau_cutoff,
    psi,
    theta,
    truncated_integral,
    verify_cancellation,
    verify_piece_bounds,
)
from newtonsing.poly import parse_poly


def P(text, n=2):
    return parse_poly(text, n)


def test_profiles():
    t = np.linspace(0.01, 5, 2000)
    assert np.all(theta(t[(t < 0.5) | (t > 2)]) == 0)
    assert np.all(psi(t[t <= 1]) == 1) and np.all(psi(t[t >= 2]) == 0)
    tel = sum(theta(2.0**k * t) for k in range(-5, 12))
    assert np.allclose(tel, 1.0, atol=1e-14)
    assert quad(theta, 0.5, 2, points=[1])[0] == pytest.approx(0.75, abs=1e-12)
    u = np.linspace(0, 1, 101)
    c = plateau_cutoff(u, 0.5)
    assert np.all(c[u <= 0.0625] == 1) and np.all(c[u >= 0.25] == 0)


def test_product_kernel_formula():
    K = example_kernel(P("x1*x2"), R=1.0)
    x = np.random.default_rng(0).uniform(-0.4, 0.4, size=(100, 2))
    chi = plateau_cutoff(np.sum(x**2, axis=1), 1.0)
    expect = np.sign(x[:, 0]) * np.sign(x[:, 1]) * chi / np.abs(x[:, 0] * x[:, 1])
    assert np.allclose(K(x), expect, rtol=1e-14)


def test_sum_of_squares_kernel_formula():
    K = example_kernel(P("x1^2+x2^2"), R=1.0)
    assert K.delta0 == 1
    x = np.random.default_rng(1).uniform(-0.5, 0.5, size=(100, 2))
    chi = plateau_cutoff(np.sum(x**2, axis=1), 1.0)
    expect = np.sign(x[:, 0]) * np.sign(x[:, 1]) * chi / np.sum(x**2, axis=1)
    assert np.allclose(K(x), expect, rtol=1e-14)


@pytest.mark.parametrize("text", ["x1*x2", "x1^2+x2^4", "x1^3-x2^2"])
def test_kernel_odd_and_supported(text):
    K = example_kernel(P(text))
    x = np.random.default_rng(2).uniform(-0.6, 0.6, size=(500, 2))
    for l in range(2):
        xr = x.copy()
        xr[:, l] *= -1
        assert np.array_equal(K(xr), -K(x))
    assert np.all(K(x[np.linalg.norm(x, axis=1) >= 0.5]) == 0)


def test_literal_mode_not_odd_for_odd_b():
    K = example_kernel(P("x1^3-x2^2"), sign_mode="literal")
    assert not K.is_odd
    assert example_kernel(P("x1^2+x2^2"), sign_mode="literal").is_odd


def test_kernel_rejects_bad_input():
    with pytest.raises(ValueError):
        example_kernel(P("x1 + 1"))
    with pytest.raises(ValueError):
        example_kernel(P("x1*x2"), R=0)


def test_reconstruction_from_pieces():
    K = example_kernel(P("x1^2+x2^4"))
    TK = TruncatedKernel(K, 40)
    y = np.random.default_rng(3).uniform(-0.5, 0.5, size=(200, 2))
    y = y[np.min(np.abs(y), axis=1) > 1e-6]
    assert np.allclose(TK.sum_of_pieces(y), K(y), rtol=1e-12, atol=0)
    assert np.allclose(TK(y), K(y), rtol=1e-12, atol=0)


def test_truncated_closed_form_matches_piece_sum():
    K = example_kernel(P("x1*x2"))
    TK = TruncatedKernel(K, 6)
    y = np.random.default_rng(4).uniform(-0.3, 0.3, size=(300, 2))
    assert np.allclose(TK(y), TK.sum_of_pieces(y), rtol=1e-12, atol=1e-12)
    assert TK.pieces == piece_indices(K, 6)
    assert all(max(j) < 6 and min(j) >= 1 for j in TK.pieces)


def test_zero_pieces_outside_ball():
    K = example_kernel(P("x1*x2"), R=0.5)
    assert K.j_min() == (1, 1)
    assert dyadic_piece(K, (0, 3)).is_zero
    assert not dyadic_piece(K, (1, 1)).is_zero
    assert TruncatedKernel(K, 1).pieces == []


def test_piece_support():
    K = example_kernel(P("x1*x2"))
    p = dyadic_piece(K, (3, 4))
    y = np.random.default_rng(5).uniform(-0.3, 0.3, size=(5000, 2))
    v = p(y)
    on = v != 0
    assert np.all(np.abs(y[on, 0]) >= 2.0**-4) and np.all(np.abs(y[on, 0]) <= 2.0**-2)
    assert np.all(np.abs(y[on, 1]) >= 2.0**-5) and np.all(np.abs(y[on, 1]) <= 2.0**-3)


def test_n1_piece_bound():
    K = example_kernel(parse_poly("x1", 1))
    for j in range(2, 8):
        p = dyadic_piece(K, (j,))
        y = np.linspace(2.0 ** (-j - 1), 2.0 ** (-j + 1), 1001)[:, None]
        assert np.max(np.abs(p(y)) * np.abs(y[:, 0])) <= 1 + 1e-12
        b = verify_piece_bounds(p, 32)
        assert b["size_bound"] <= 1 + 1e-9


def test_size_bound_j_stable_for_product_kernel():
    # the sup sits where theta peaks, |y_l| = 2^-j; R = 1 keeps those points in the plateau for j >= 2
    K = example_kernel(P("x1*x2"), R=1.0)
    vals = [verify_piece_bounds(dyadic_piece(K, (a, b)), 32)["size_bound"]
            for a in range(2, 13, 2) for b in range(2, 13, 3)]
    assert max(vals) / min(vals) <= 1.05


def test_gradient_and_derivative_bounds_finite_and_j_stable():
    K = example_kernel(P("x1*x2"), R=1.0)
    res = [verify_piece_bounds(dyadic_piece(K, j), 32) for j in [(3, 3), (6, 9), (10, 4), (12, 12)]]
    c_grad = [r["gradient_bound"] for r in res]
    c11 = [r["per_alpha"]["11"] for r in res]
    assert np.all(np.isfinite(c_grad)) and max(c_grad) / min(c_grad) <= 1.05
    assert np.all(np.isfinite(c11)) and max(c11) / min(c11) <= 1.05
    assert res[0]["derivative_bound"] == pytest.approx(res[-1]["derivative_bound"], rel=0.05)


def test_bounds_require_density():
    K = example_kernel(P("x1*x2"))
    with pytest.raises(ValueError):
        verify_piece_bounds(dyadic_piece(K, (3, 3)), 16)


@pytest.mark.parametrize("text", ["x1*x2", "x1^2+x2^2", "x1^2*x2^3", "x1^3-x2^2"])
def test_cancellation_exact(text):
    K = example_kernel(P(text))
    for j in [(1, 1), (2, 5), (7, 3)]:
        p = dyadic_piece(K, j)
        for axis in (1, 2):
            assert verify_cancellation(p, axis, 16) <= 1e-12


def test_cancellation_n1():
    K = example_kernel(parse_poly("x1", 1))
    assert verify_cancellation(dyadic_piece(K, (4,)), 1) == 0.0


def test_cancellation_negative_control():
    K = example_kernel(P("x1*x2"), cutoff_shift=(0.05, 0.0))
    p = dyadic_piece(K, (2, 3))
    assert verify_cancellation(p, 1, 16) > 1e-6
    assert verify_cancellation(p, 1, 16, relative=True) > 1e-3


def test_mixed_difference_examples():
    y = np.random.default_rng(6).normal(size=(50, 2))
    assert np.allclose(mixed_difference(lambda z: z[..., 0] * z[..., 1], y), y[:, 0] * y[:, 1])
    assert np.all(mixed_difference(lambda z: z[..., 0] ** 2, y) == 0)
    y1 = y[:, :1]
    phi = lambda z: np.cos(z[..., 0]) + 3
    assert np.allclose(mixed_difference(phi, y1), phi(y1) - phi(0 * y1))


def test_mixed_difference_bound():
    phi = gaussian((0.2, -0.1), 0.3)
    y = np.random.default_rng(7).uniform(-1, 1, size=(2000, 2))
    g = np.stack(np.meshgrid(np.linspace(-1, 1, 201), np.linspace(-1, 1, 201), indexing="ij"), -1)
    h = 1e-4
    d12 = (phi(g + [h, h]) - phi(g + [h, -h]) - phi(g + [-h, h]) + phi(g - [h, h])) / (4 * h * h)
    M = np.abs(d12).max()
    assert np.all(np.abs(mixed_difference(phi, y)) <= np.abs(y[:, 0] * y[:, 1]) * M * 1.01)


def test_peeling_order_free():
    phi = gaussian((0.1, 0.05), 0.1)
    y = np.random.default_rng(8).uniform(-0.5, 0.5, size=(100, 2))
    a = mixed_difference(phi, y, order=(1, 2))
    b = mixed_difference(phi, y, order=(2, 1))
    assert np.allclose(a, b, atol=1e-15) and np.allclose(a, mixed_difference(phi, y), atol=1e-15)


def test_pairing_symmetry_zero():
    # phi even in y1 makes the mixed difference even in y1; K is odd in y1
    K = example_kernel(P("x1*x2"))
    phi = gaussian((0.0, 0.1), 0.1)
    assert abs(pair_with_test_function(K, phi)) < 1e-12


def test_pairing_linear():
    K = example_kernel(P("x1*x2"))
    f, g = gaussian((0.1, 0.05), 0.1), gaussian((-0.05, 0.08), 0.07)
    a, b = pair_with_test_function(K, f), pair_with_test_function(K, g)
    ab = pair_with_test_function(K, lambda y: 2 * f(y) - 3 * g(y))
    assert ab == pytest.approx(2 * a - 3 * b, rel=1e-10, abs=1e-12)


def test_pairing_matches_truncated_limit():
    K = example_kernel(P("x1*x2"))
    phi = gaussian((0.1, 0.05), 0.1)
    pair = pair_with_test_function(K, phi)
    errs = [abs(pair - truncated_integral(K, L, phi)) for L in (8, 10, 12, 14, 16, 20)]
    assert errs[-1] < 1e-3
    assert all(b <= a for a, b in zip(errs, errs[1:]))


def test_pairing_budget_error_has_diagnostics():
    K = example_kernel(P("x1*x2"))
    with pytest.raises(PairingDivergence) as info:
        pair_with_test_function(K, gaussian((0.1, 0.05), 0.1), quad_budget=4)
    assert len(info.value.partial_sums) == 4


def test_unsigned_control_diverges():
    K = example_kernel(P("x1*x2"), sign_mode="unsigned")
    phi = gaussian((0.1, 0.05), 0.1)
    vals = [truncated_integral(K, L, phi) for L in (8, 12, 16, 20)]
    steps = np.diff(vals)
    assert np.all(steps > 10)
