import hashlib
import json
import math

import numpy as np
import pytest

from hermspde.acceptance import lipschitz_field
from hermspde.hermite import TruncationScheme
from hermspde.operators import CoefficientField
from hermspde.sde import NoiseDriver, ensemble_increments
from hermspde.sobolev import SpectralElement, translate, unit_gaussian
from hermspde.spde import (
    blowup_monitor,
    coefficients_csv,
    duality_check,
    flow_restart_check,
    fourier_identity_defect,
    frozen_record,
    read_coefficients_csv,
    shift_norm_series,
    solve_picard,
    solve_translation,
    spde_residual,
    weak_null_diagnostic,
)

S = TruncationScheme(1, 24)
E0 = unit_gaussian(S)


def test_snapshots_are_translates_of_the_path():
    fld = lipschitz_field(S)
    rec = solve_translation(fld, E0, 1e-3, 0.2, NoiseDriver(1, 0, 1, 1e-3))
    assert len(rec.snapshots) == 11
    for t, snap in zip(rec.snapshot_times, rec.snapshots):
        m = int(round(t / 1e-3))
        assert np.array_equal(snap.coeffs, translate(E0, rec.path.X[m]).coeffs)
    assert rec.diagnostics["dist_q"][0] == 0.0
    with pytest.raises(ValueError):
        solve_translation(fld, E0, 1e-3, 0.2, NoiseDriver(1), snapshot_times=[0.0005])


def test_residual_small_and_frozen_control_large():
    fld = lipschitz_field(S)
    rec = solve_translation(fld, E0, 1e-3, 0.5, NoiseDriver(2, 0, 1, 1e-3))
    res = spde_residual(fld, rec)
    ctrl = spde_residual(fld, frozen_record(rec))
    assert res.max() < 5e-3
    assert ctrl.max() > 10 * res.max()


def test_residual_shrinks_with_dt():
    fld = CoefficientField.constant([[0.3]], [0.1])
    fine = NoiseDriver(3, 0, 1, 1e-4)
    out = []
    for factor in (100, 10):
        d = fine.coarsen(factor)
        rec = solve_translation(fld, E0, d.dt, 0.5, d, snapshot_times=[0.5])
        out.append(spde_residual(fld, rec)[-1])
    assert out[1] < out[0]


def test_picard_constant_field_converges_in_one_step():
    fld = CoefficientField.constant([[0.3]], [0.1])
    d = NoiseDriver(4, 0, 1, 1e-3)
    pic = solve_picard(fld, E0, 5.0, 3, 1e-3, 0.3, d, paths=1)
    tr = solve_translation(fld, E0, 1e-3, 0.3, d, snapshot_times=[0.1, 0.3])
    for a, b in zip(pic.snapshots(0, [0.1, 0.3]), tr.snapshots):
        assert np.allclose(a.coeffs, b.coeffs, atol=1e-15)
    assert np.all(pic.errors[1:] == 0)


def test_picard_route_matches_translation_route():
    fld = lipschitz_field(S)
    dB = NoiseDriver(5, 0, 1, 1e-3).increments(300)
    pic = solve_picard(fld, E0, 2.0, 6, 1e-3, 0.3, dB=dB[None], paths=1)
    tr = solve_translation(fld, E0, 1e-3, 0.3, dB=dB, snapshot_times=[0.1, 0.2, 0.3])
    gap = max(np.max(np.abs(a.coeffs - b.coeffs)) for a, b in zip(pic.snapshots(0, [0.1, 0.2, 0.3]), tr.snapshots))
    assert gap < 1e-12
    e = pic.mean_square_errors()[:, 0]
    assert np.all(np.diff(e[1:]) < 0)
    with pytest.raises(ValueError):
        solve_picard(fld, E0, 0.0, 2, 1e-3, 0.3, dB=dB[None])


def test_picard_stops_at_ball_exit():
    fld = CoefficientField.constant([[0.0]], [1.0])
    pic = solve_picard(fld, E0, 0.5, 2, 0.01, 2.0, dB=np.zeros((1, 200, 1)), paths=1)
    z_exit = 2 * math.sqrt(-math.log(1 - 0.125))  # ||tau_z e0 - e0||_0 = 0.5
    assert pic.eta[-1][0] == pytest.approx(z_exit, abs=1e-3)


def test_restart_and_duality_and_fourier():
    fld = lipschitz_field(S)
    d = NoiseDriver(6, 0, 1, 1e-3)
    dB = d.increments(400)
    for s in (0.0, 0.15):
        assert flow_restart_check(fld, E0, s, 0.4, 1e-3, dB=dB).total <= 1e-10
    with pytest.raises(ValueError):
        flow_restart_check(fld, E0, 0.4, 0.4, 1e-3, dB=dB)
    f = SpectralElement.basis(S, 1)
    res = duality_check(fld, E0, f, 0.3, 20, d)
    assert res.max_path_defect <= 1e-6 and abs(res.lhs - res.rhs) <= 1e-12
    assert duality_check(fld, E0, f, 0.0, 1, d).lhs == 0.0
    assert fourier_identity_defect(E0, [0.9], np.linspace(-3, 3, 16)) <= 1e-6


def test_record_writes_manifest_with_digests(tmp_path):
    fld = lipschitz_field(S)
    rec = solve_translation(fld, E0, 1e-2, 0.1, NoiseDriver(7, 0, 1, 1e-2))
    man = rec.write(str(tmp_path), config={"k": 1}, seed=7)
    for name, digest in man["files"].items():
        assert hashlib.sha256((tmp_path / name).read_bytes()).hexdigest() == digest
    assert json.loads((tmp_path / "manifest.json").read_text())["field_sha256"] == fld.digest()
    back = read_coefficients_csv((tmp_path / "snapshot_003.csv").read_text())
    assert np.array_equal(back.coeffs, rec.snapshots[3].coeffs)


def test_coefficients_csv_two_dimensional():
    s = TruncationScheme(2, 3)
    u = SpectralElement(s, np.arange(s.size, dtype=float))
    assert np.array_equal(read_coefficients_csv(coefficients_csv(u)).coeffs, u.coeffs)


def test_shift_norm_series_and_monitor():
    fld = CoefficientField.constant([[0.0]], [2.0])
    rec = solve_translation(fld, E0, 0.01, 1.0, dB=np.zeros(100))
    series = shift_norm_series(rec, 1)
    assert np.all(np.diff(series) >= 0)
    assert blowup_monitor(series)
    assert not blowup_monitor(np.sin(np.linspace(0, 20, 200)))
    assert not blowup_monitor(series[:5])


def test_weak_null_series_decays_with_distance():
    Z = np.linspace(0, 30, 31)[:, None]
    out = weak_null_diagnostic(E0, Z, [E0])
    assert out["pairings"][0, 0] == pytest.approx(1.0)
    assert abs(out["pairings"][0, -1]) < 1e-90
    assert out["abs_Z"][-1] == 30


def test_markov_marginals_agree():
    from hermspde.spde import markov_marginal_check
    res = markov_marginal_check(lipschitz_field(S), E0, 0.2, 0.5, 1e-2, NoiseDriver(8, 0, 1, 1e-2), 400)
    assert res["mean_z"] < 4 and res["var_z"] < 4


def test_duality_gaussian_overlap_oracle():
    # E<tau_{B_t} e0, e0> = E exp(-B_t^2 / 4) = (1 + t/2)^{-1/2}
    fld = CoefficientField.constant([[1.0]], [0.0])
    t = 0.5
    res = duality_check(fld, E0, E0, t, 4000, NoiseDriver(9, 0, 1, 0.05))
    assert abs(res.rhs - (1 + t / 2) ** -0.5) < 4 * res.stderr
    assert res.max_path_defect < 1e-12


def test_zero_field_cases():
    zero = CoefficientField.zero()
    rec = solve_translation(zero, E0, 1e-2, 0.2, NoiseDriver(1, 0, 1, 1e-2))
    assert all(np.array_equal(s.coeffs, E0.coeffs) for s in rec.snapshots)
    assert np.all(spde_residual(zero, rec) == 0)
    assert flow_restart_check(zero, E0, 0.1, 0.2, 1e-2, NoiseDriver(1, 0, 1, 1e-2)).total == 0


def test_stopping_times_monotone():
    fld = lipschitz_field(S)
    dB = ensemble_increments(NoiseDriver(10, 0, 1, 1e-2), 16, 100)
    pic = solve_picard(fld, E0, 0.05, 4, 1e-2, 1.0, dB=dB, paths=16)
    for a, b in zip(pic.eta, pic.eta[1:]):
        assert np.all(b <= a)
    etas = [solve_picard(fld, E0, r, 2, 1e-2, 1.0, dB=dB, paths=16).eta[-1] for r in (0.03, 0.05, 0.1)]
    for a, b in zip(etas, etas[1:]):
        assert np.all(b >= a)


def test_fourier_identity_along_a_path():
    fld = lipschitz_field(S)
    rec = solve_translation(fld, E0, 1e-3, 0.3, NoiseDriver(11, 0, 1, 1e-3), snapshot_times=[0.3])
    z = rec.path.X[-1]
    assert fourier_identity_defect(E0, z, np.linspace(-3, 3, 16)) <= 1e-6
