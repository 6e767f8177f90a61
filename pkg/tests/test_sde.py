import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hermspde.acceptance import lipschitz_field
from hermspde.hermite import TruncationScheme
from hermspde.operators import CoefficientField
from hermspde.sde import (
    FinitePath,
    NoiseDriver,
    characteristic_Z,
    characteristic_ensemble,
    ensemble_increments,
    euler_ensemble,
    euler_maruyama,
    exit_time,
    grid_steps,
)
from hermspde.sobolev import translate, unit_gaussian

S = TruncationScheme(1, 24)
E0 = unit_gaussian(S)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32), short=st.integers(1, 50), extra=st.integers(0, 50))
def test_increments_are_prefix_stable(seed, short, extra):
    d = NoiseDriver(seed, 3, 2, 0.01)
    assert np.array_equal(d.increments(short), d.increments(short + extra)[:short])


def test_coarsening_sums_fine_increments():
    fine = NoiseDriver(5, 0, 1, 0.001)
    coarse = fine.coarsen(10)
    assert coarse.dt == pytest.approx(0.01)
    assert np.allclose(coarse.increments(7), fine.increments(70).reshape(7, 10, 1).sum(axis=1), atol=1e-15)


def test_streams_are_independent_and_ensembles_reproducible():
    d = NoiseDriver(1, 0, 1, 0.01)
    a = ensemble_increments(d, 4, 10)
    assert np.array_equal(a, ensemble_increments(d, 4, 10))
    assert np.array_equal(a[2], d.with_stream(2).increments(10))
    assert not np.allclose(a[0], a[1])
    big = ensemble_increments(d, 20000, 1)[:, 0, 0]
    assert abs(big.var() / 0.01 - 1) < 0.05


def test_grid_validation():
    assert grid_steps(0.1, 1.0) == 10
    for dt, T in ((0.0, 1.0), (0.3, 1.0), (-1, 1.0)):
        with pytest.raises(ValueError):
            grid_steps(dt, T)
    with pytest.raises(ValueError):
        NoiseDriver(0, dt=0.0)


def test_constant_coefficients_give_exact_affine_path():
    d = NoiseDriver(9, 0, 1, 0.01)
    p = euler_maruyama(lambda x: [[0.5]], lambda x: [0.2], 1.0, 0.01, 1.0, d)
    B = np.concatenate([[0], np.cumsum(d.increments(100)[:, 0])])
    assert np.allclose(p.X[:, 0], 1.0 + 0.5 * B + 0.2 * p.t, atol=1e-13)
    assert p.status == "completed" and p.eta_hat is None


def test_ou_mean_and_variance():
    dB = ensemble_increments(NoiseDriver(2, 0, 1, 0.01), 20000, 100)
    ens = euler_ensemble(lambda X: (np.ones((X.shape[0], 1, 1)), -X), np.array([1.0]), 0.01, dB)
    x = ens.X[:, -1, 0]
    assert x.mean() == pytest.approx(math.exp(-1), abs=0.02)
    assert x.var() == pytest.approx((1 - math.exp(-2)) / 2, abs=0.02)


def test_explosion_time_of_riccati_equation():
    for dt in (1e-3, 1e-4):
        p = euler_maruyama(lambda x: [[0.0]], lambda x: x * x, 1.0, dt, 1.5, dB=np.zeros(grid_steps(dt, 1.5)))
        assert p.status == "exploded"
        assert abs(p.eta_hat - 1.0) < 20 * dt
    # nonfinite coefficients also count as explosion
    p = euler_maruyama(lambda x: [[0.0]], lambda x: [np.nan], 0.0, 0.1, 1.0, dB=np.zeros(10))
    assert p.status == "exploded" and p.eta_hat == 0.0


def test_ball_exit_is_interpolated():
    p = euler_maruyama(lambda x: [[0.0]], lambda x: [1.0], 0.0, 0.1, 2.0, dB=np.zeros(20), ball=([0.0], 0.55))
    assert p.status == "exited" and p.eta_hat == pytest.approx(0.55)


def test_path_csv_round_trip():
    p = euler_maruyama(lambda x: [[0.3]], lambda x: [0.1], 0.0, 0.1, 1.0, NoiseDriver(1, 0, 1, 0.1))
    back = FinitePath.from_csv(p.to_csv())
    assert np.array_equal(back.X, p.X) and np.array_equal(back.t, p.t) and back.status == "completed"
    with pytest.raises(ValueError):
        FinitePath.from_csv("a,b\n1,2\n")


def test_characteristic_process_for_constant_field():
    fld = CoefficientField.constant([[0.4]], [0.1])
    d = NoiseDriver(3, 0, 1, 0.01)
    Z = characteristic_Z(fld, E0, 0.01, 0.5, d)
    B = np.concatenate([[0], np.cumsum(d.increments(50)[:, 0])])
    assert np.allclose(Z.X[:, 0], 0.4 * B + 0.1 * Z.t, atol=1e-14)


def test_characteristic_ensemble_matches_single_paths():
    fld = lipschitz_field(S)
    d = NoiseDriver(4, 0, 1, 0.01)
    dB = ensemble_increments(d, 3, 20)
    ens = characteristic_ensemble(fld, E0, 0.01, 0.2, dB)
    for i in range(3):
        single = characteristic_Z(fld, E0, 0.01, 0.2, dB=dB[i])
        assert np.array_equal(ens.path(i).X, single.X)
    with pytest.raises(ValueError):
        characteristic_ensemble(fld, E0, 0.01, 0.3, dB)


def test_characteristic_exit_in_shift_norm():
    fld = CoefficientField.constant([[0.0]], [1.0])
    Z = characteristic_Z(fld, E0, 0.01, 3.0, dB=np.zeros(300), radius=1.0, q=0)
    # ||tau_z h_0 - h_0||_0^2 = 2 - 2 exp(-z^2/4) crosses 1 at z = 2 sqrt(ln 2)
    assert Z.status == "exited"
    assert Z.eta_hat == pytest.approx(2 * math.sqrt(math.log(2)), abs=1e-3)


def test_exit_time_on_snapshots():
    snaps = [translate(E0, z) for z in (0.0, 0.5, 1.0, 2.0)]
    t = exit_time(snaps, E0, 1.0, 0, times=[0, 1, 2, 3])
    assert 2 < t < 3
    assert exit_time(snaps[:2], E0, 1.0, 0, times=[0, 1]) is None
