import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hermspde.acceptance import lipschitz_field
from hermspde.hermite import TruncationScheme
from hermspde.operators import (
    A0,
    L1,
    L2,
    CoefficientField,
    Constant,
    DualPairing,
    NormFunctional,
    PointEval,
    PointwiseFunction,
    ScalarMap,
    adjoint_defect_norm,
    apply_A,
    apply_frozen,
    apply_L,
    derivative_norm,
    empirical_constants,
    functional_from_dict,
    monotonicity_form,
    monotonicity_form_variant,
    monotonicity_terms,
    random_ball_element,
)
from hermspde.sobolev import SpectralElement, evaluate, sobolev_norm, translate, unit_gaussian

S = TruncationScheme(1, 24)
E0 = unit_gaussian(S)


@settings(max_examples=60, deadline=None)
@given(base=st.sampled_from(["identity", "tanh", "sin", "cos"]), s=st.floats(-5, 5), ds=st.floats(-2, 2))
def test_scalar_map_difference_matches_direct(base, s, ds):
    g = ScalarMap(base, 0.7, 0.2, 1.3)
    assert g.difference(s, ds) == pytest.approx(g(s + ds) - g(s), abs=1e-12)


def test_scalar_map_difference_keeps_tiny_increments():
    g = ScalarMap("tanh", 0.1, 0.3)
    assert g.difference(0.5, 1e-20) == pytest.approx(0.1 * 1e-20 / math.cosh(0.5) ** 2, rel=1e-12)


def test_scalar_map_bounds_and_validation():
    assert ScalarMap("sin", 2.0, 1.0).bound == 3.0
    assert ScalarMap("identity").bound == math.inf
    assert ScalarMap("tanh", 0.5, inner=2.0).lipschitz == 1.0
    with pytest.raises(ValueError):
        ScalarMap("exp")


def test_pairing_functionals_follow_translation():
    w = SpectralElement(S, np.eye(1, S.size, 1)[0])
    f = DualPairing(w, ScalarMap("sin", 0.5))
    z = np.array([[-0.7], [0.2], [1.1]])
    direct = np.array([f(translate(E0, s)) for s in z[:, 0]])
    assert np.allclose(f.shifted(E0, z), direct, atol=1e-14)
    p = PointEval((0.3,))
    assert np.allclose(p.shifted(E0, z), [evaluate(translate(E0, s), 0.3) for s in z[:, 0]], atol=1e-12)
    n = NormFunctional(1.0)
    assert np.allclose(n.shifted(E0, z), [sobolev_norm(translate(E0, s), 1) for s in z[:, 0]])


def test_pointwise_weight_pairing_is_untruncated_convolution():
    fn = PointwiseFunction.gaussian(1.0, 0.0, 1.0)
    f = DualPairing(fn)
    # <g, tau_z h_0> for g(v) = exp(-v^2/2): pi^{-1/4} sqrt(pi) exp(-z^2/4)
    z = np.array([[0.0], [1.5], [3.0]])
    exact = math.pi ** -0.25 * math.sqrt(math.pi) * np.exp(-z[:, 0] ** 2 / 4)
    assert np.allclose(f.shifted(E0, z), exact, atol=1e-13)
    assert f(E0) == pytest.approx(exact[0], abs=1e-13)


def test_shifted_difference_matches_plain_difference():
    fld = lipschitz_field(S)
    base = np.array([[0.1], [-0.4], [0.9]])
    delta = np.array([[1e-3], [0.2], [-0.05]])
    sig_d, b_d = fld.evaluate_shifted_difference(E0, base, delta)
    s1, b1 = fld.evaluate_shifted(E0, base + delta)
    s0, b0 = fld.evaluate_shifted(E0, base)
    assert np.allclose(sig_d, s1 - s0, atol=1e-14) and np.allclose(b_d, b1 - b0, atol=1e-14)


def test_field_serialization_round_trip():
    fld = CoefficientField(1, 1, [[DualPairing(E0, ScalarMap("tanh", 0.1, 0.3))]],
                           [PointEval((0.2,), ScalarMap("sin"))], K=2.0)
    back = CoefficientField.from_json(fld.to_json(), S)
    assert back.digest() == fld.digest()
    phi = translate(E0, 0.3)
    assert np.allclose(back.evaluate(phi)[0], fld.evaluate(phi)[0])
    by_basis = functional_from_dict({"kind": "dual_pairing", "w": {"basis": 0}}, S)
    assert by_basis(E0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        functional_from_dict({"kind": "nope"})
    with pytest.raises(ValueError):
        CoefficientField(1, 1, [[Constant(1.0), Constant(2.0)]], [Constant(0.0)])
    assert json.loads(CoefficientField.zero().to_json())["b"] == [{"kind": "constant", "c": 0.0}]


def test_operators_on_gaussian():
    # L1(b) e_0 = -b D e_0 = (b / sqrt 2) e_1 ;  L2(a) e_0 = a/2 D^2 e_0
    out = L1([0.8], E0).coeffs
    assert out[1] == pytest.approx(0.8 / math.sqrt(2)) and np.count_nonzero(out) == 1
    out = L2([[2.0]], E0).coeffs
    assert out[0] == pytest.approx(-0.5) and out[2] == pytest.approx(1 / math.sqrt(2))
    A = A0([[0.5, -1.0]], E0)
    assert len(A) == 2 and A[1].coeffs[1] == pytest.approx(-1 / math.sqrt(2))


def test_apply_routes_agree_bitwise():
    fld = lipschitz_field(S)
    phi = translate(E0, 0.6)
    L, A = apply_frozen(fld, phi, phi)
    assert np.array_equal(apply_L(fld, phi).coeffs, L.coeffs)
    assert np.array_equal(apply_A(fld, phi)[0].coeffs, A[0].coeffs)


def test_generator_matches_gaussian_heat_flow():
    # d/dt E tau_{B_t} y at t=0 equals L y for sigma=1, b=0
    fld = CoefficientField.constant([[1.0]], [0.0])
    y = E0
    h = 1e-4
    spread = math.pi ** -0.25 / math.sqrt(1 + h)
    from hermspde.hermite import project_function
    yt = project_function(lambda x: spread * np.exp(-x * x / (2 * (1 + h))), S)
    fd = (yt.coeffs - y.coeffs) / h
    assert np.max(np.abs(fd - apply_L(fld, y).coeffs)) < 1e-3


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), q=st.sampled_from([0.0, 0.5, 1.0]))
def test_seven_terms_sum_to_form(seed, q):
    rng = np.random.default_rng(seed)
    sc = TruncationScheme(1, 16)
    fld = lipschitz_field(sc)
    phi, psi = random_ball_element(sc, 1, 2, rng), random_ball_element(sc, 1, 2, rng)
    assert sum(monotonicity_terms(fld, phi, psi, q)) == pytest.approx(monotonicity_form(fld, phi, psi, q).value,
                                                                     abs=1e-10)


def test_constant_field_form_is_nonpositive_at_q0():
    # constant coefficients: 2<u, L u>_0 + ||A u||_0^2 = 0 up to truncation (skew D)
    sc = TruncationScheme(1, 16)
    fld = CoefficientField.constant([[0.7]], [0.3])
    rng = np.random.default_rng(2)
    phi, psi = random_ball_element(sc, 1, 2, rng), random_ball_element(sc, 1, 2, rng)
    v = monotonicity_form(fld, phi, psi, 0.0)
    assert v.value <= 1e-12
    w = monotonicity_form_variant(fld, phi, psi, phi, 0.0, C1=1.0)
    assert w.comparator is not None and np.isfinite(w.value)


def test_random_ball_elements_and_constants():
    rng = np.random.default_rng(0)
    sc = TruncationScheme(1, 20)
    for _ in range(20):
        assert sobolev_norm(random_ball_element(sc, 1, 2.0, rng), 1) <= 2.0 + 1e-12
    consts = empirical_constants(lipschitz_field(sc), sc, 1, 0, 2.0, 20, 3)
    assert consts["finite"] and np.isfinite(consts["C"]) and np.isfinite(consts["C1"])


def test_adjoint_defect_and_derivative_norms():
    s32, s64 = TruncationScheme(1, 32), TruncationScheme(1, 64)
    assert adjoint_defect_norm(0, 0, s32) == 0.0
    assert adjoint_defect_norm(0, 1, s64) <= 1.2 * adjoint_defect_norm(0, 1, s32)
    r = derivative_norm(0, 1, s64) / derivative_norm(0, 1, s32)
    assert 1.3 <= r <= 1.5
    # in two dimensions each axis behaves like the one-dimensional operator
    assert adjoint_defect_norm(1, 0, TruncationScheme(2, 8)) == 0.0


def test_lipschitz_and_bounds():
    fld = lipschitz_field(S)
    assert fld.bound() == pytest.approx(0.4)
    assert fld.lipschitz(0, S) == pytest.approx(0.1)
    assert not fld.is_constant and CoefficientField.constant([[1.0]], [0.0]).is_constant
