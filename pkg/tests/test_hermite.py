import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hermspde.hermite import (
    TruncationScheme,
    basis_values,
    derivative_matrix,
    derivative_tail,
    gauss_hermite_rule,
    hermite_eval,
    project_function,
    tensor_rule,
)


def test_low_order_functions_match_closed_forms():
    for x in (-1.3, 0.0, 0.4, 2.2):
        g = math.exp(-x * x / 2)
        assert hermite_eval(0, x) == pytest.approx(math.pi ** -0.25 * g, rel=1e-14)
        assert hermite_eval(1, x) == pytest.approx(math.pi ** -0.25 * math.sqrt(2) * x * g, rel=1e-14)
        assert hermite_eval(2, x) == pytest.approx(math.pi ** -0.25 * (2 * x * x - 1) / math.sqrt(2) * g, rel=1e-13)


def test_product_basis_in_two_dimensions():
    assert hermite_eval((1, 2), (0.3, -0.7)) == pytest.approx(hermite_eval(1, 0.3) * hermite_eval(2, -0.7))


def test_gauss_hermite_moments():
    rule = gauss_hermite_rule(20)
    for k in range(0, 39, 2):
        exact = math.gamma((k + 1) / 2)
        assert np.sum(rule.weights * rule.nodes ** k) == pytest.approx(exact, rel=1e-12)
    assert np.sum(rule.weights * rule.nodes ** 3) == pytest.approx(0.0, abs=1e-14)


def test_rule_rejects_bad_order():
    with pytest.raises(ValueError):
        gauss_hermite_rule(0)


@pytest.mark.parametrize("d,N", [(1, 30), (2, 8)])
def test_basis_is_orthonormal(d, N):
    scheme = TruncationScheme(d, N)
    pts, w = tensor_rule(N + 4, d)
    B = basis_values(scheme, pts)
    G = B.T @ (w[:, None] * B)
    assert np.max(np.abs(G - np.eye(scheme.size))) < 1e-12


def test_scheme_order_and_size():
    s = TruncationScheme(2, 2)
    assert [tuple(k) for k in s.indices] == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    assert s.size == 6 and s.position((1, 1)) == 4
    assert TruncationScheme(3, 5).size == math.comb(8, 3)
    with pytest.raises(KeyError):
        s.position((3, 0))
    with pytest.raises(ValueError):
        TruncationScheme(0, 3)


def test_weights_and_interior():
    s = TruncationScheme(1, 4)
    assert np.allclose(s.weights(1), [1, 3, 5, 7, 9])
    assert s.interior(2).tolist() == [True, True, True, False, False]


@settings(max_examples=25, deadline=None)
@given(d=st.integers(1, 3), N=st.integers(0, 9))
def test_derivative_is_skew(d, N):
    s = TruncationScheme(d, N)
    for axis in range(d):
        D = derivative_matrix(axis, s)
        assert np.array_equal(D, -D.T)


def test_derivative_oracle_on_gaussian():
    # d/dx h_0 = -x h_0 = -(1/sqrt 2) h_1
    s = TruncationScheme(1, 6)
    D = derivative_matrix(0, s)
    out = D[:, 0]
    assert out[1] == pytest.approx(-1 / math.sqrt(2)) and np.count_nonzero(out) == 1
    # against a finite difference of the expansion
    c = np.random.default_rng(1).standard_normal(s.size) * 0.5 ** np.arange(s.size)
    x = np.linspace(-2, 2, 9)
    h = 1e-5
    fd = (basis_values(s, x + h) @ c - basis_values(s, x - h) @ c) / (2 * h)
    full = TruncationScheme(1, 7)
    cc = np.concatenate([c, [0.0]])
    exact = basis_values(full, x) @ (derivative_matrix(0, full) @ cc)
    assert np.max(np.abs(fd - exact)) < 1e-8


def test_derivative_tail_counts_dropped_mass():
    s = TruncationScheme(1, 3)
    c = np.array([0, 0, 0, 1.0])
    assert derivative_tail(0, s, c) == pytest.approx(2.0)  # sqrt(4/2)^2


def test_projection_of_gaussian_is_e0():
    s = TruncationScheme(1, 10)
    el = project_function(lambda x: math.pi ** -0.25 * np.exp(-x * x / 2), s)
    assert el.coeffs[0] == pytest.approx(1.0, abs=1e-14)
    assert np.max(np.abs(el.coeffs[1:])) < 1e-14
    assert el.tail < 1e-28


def test_projection_reports_nonfinite_sample():
    with pytest.raises(ValueError, match="non-finite"):
        project_function(lambda x: np.where(x > 0, np.inf, 0.0), TruncationScheme(1, 4))
