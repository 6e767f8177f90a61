"""Solution routes for the translation-invariant SPDE and their diagnostics.

The translation route builds Y_t = tau_{Z_t} y from the characteristic
process.  The Picard route freezes coefficients at the previous iterate
(stopped at its ball-exit time) and materializes each linear solution by the
same translation formula.  Residual, flow-restart, duality and Fourier checks
certify the result independently.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field as dc_field

import numpy as np

from .hermite import TruncationScheme
from .operators import CoefficientField, eval_coefficients, operator_bundle
from .sde import (
    COMPLETED,
    R_EXPLODE,
    FinitePath,
    NoiseDriver,
    characteristic_Z,
    characteristic_ensemble,
    grid_steps,
)
from .sobolev import (
    TRANSLATION_GUARD,
    SpectralElement,
    dual_pairing,
    exact_shift_norm,
    fourier_transform,
    shifted_pairing,
    sobolev_norm,
    translate,
    translate_batch,
    translated_rows,
    translation_increment,
)
from .hermite import basis_values


def _grid_indices(times, dt, steps):
    idx = []
    for t in np.atleast_1d(np.asarray(times, dtype=float)):
        m = int(round(t / dt))
        if abs(m * dt - t) > 1e-9 * max(1.0, abs(t)) or not 0 <= m <= steps:
            raise ValueError(f"time {t} is not on the grid (dt={dt}, T={steps * dt})")
        idx.append(m)
    return np.array(idx, dtype=np.int64)


# -- records -----------------------------------------------------------------

@dataclass
class SolutionRecord:
    field: CoefficientField
    y: SpectralElement
    p: float
    q: float
    dt: float
    path: FinitePath
    dB: np.ndarray
    snapshot_times: np.ndarray
    snapshots: list
    origin: np.ndarray
    diagnostics: dict = dc_field(default_factory=dict)

    @property
    def status(self) -> str:
        return self.path.status

    @property
    def eta_hat(self):
        return self.path.eta_hat

    def grid_elements(self, stride: int = 1) -> np.ndarray:
        """Coefficient rows of tau_{origin + Z_m} y on every ``stride``-th grid point up to the stop."""
        shifts = self.origin + self.path.X[::stride]
        return translate_batch(self.y, shifts)

    def manifest(self, config: dict | None = None, seed: int | None = None) -> dict:
        return {
            "config": config or {},
            "field_sha256": self.field.digest(),
            "seed": seed,
            "grid": {"dt": self.dt, "T": float(self.path.t[-1]) if self.status == COMPLETED else None,
                     "steps": int(len(self.path.t) - 1)},
            "p": self.p,
            "q": self.q,
            "status": self.status,
            "eta_hat": self.eta_hat,
            "snapshots": [{"t": float(t), "coeffs_ref": f"snapshot_{i:03d}.csv"}
                          for i, t in enumerate(self.snapshot_times)],
            "diagnostics": {k: [float(v) for v in vals] for k, vals in self.diagnostics.items()},
        }

    def write(self, outdir: str, config: dict | None = None, seed: int | None = None) -> dict:
        """Write manifest.json, path.csv and one coefficient CSV per snapshot; returns the manifest."""
        os.makedirs(outdir, exist_ok=True)
        man = self.manifest(config, seed)
        files = {"path.csv": self.path.to_csv()}
        for i, snap in enumerate(self.snapshots):
            files[f"snapshot_{i:03d}.csv"] = coefficients_csv(snap)
        for name, text in files.items():
            with open(os.path.join(outdir, name), "w") as fh:
                fh.write(text)
        man["files"] = {name: hashlib.sha256(text.encode()).hexdigest() for name, text in sorted(files.items())}
        with open(os.path.join(outdir, "manifest.json"), "w") as fh:
            json.dump(man, fh, indent=2, sort_keys=True)
        return man


def coefficients_csv(u: SpectralElement) -> str:
    lines = [",".join([f"k_{i + 1}" for i in range(u.scheme.d)] + ["c"])]
    for k, c in zip(u.scheme.indices, u.coeffs):
        lines.append(",".join([str(int(v)) for v in k] + [f"{float(np.real(c)):.17g}"]))
    return "\n".join(lines) + "\n"


def read_coefficients_csv(text: str, N: int | None = None) -> SpectralElement:
    rows = [r.split(",") for r in text.strip().splitlines()]
    d = len(rows[0]) - 1
    ks = [tuple(int(v) for v in r[:d]) for r in rows[1:]]
    N = max(sum(k) for k in ks) if N is None else N
    scheme = TruncationScheme(d, N)
    c = np.zeros(scheme.size)
    for k, r in zip(ks, rows[1:]):
        c[scheme.position(k)] = float(r[d])
    return SpectralElement(scheme, c)


# -- translation route -----------------------------------------------------------

def solve_translation(field: CoefficientField, y: SpectralElement, dt: float, T: float,
                      driver: NoiseDriver | None = None, snapshot_times=None, *, dB=None, p: float = 1.0,
                      q: float = 0.0, R_explode: float = R_EXPLODE, radius: float | None = None,
                      origin=None) -> SolutionRecord:
    """Characteristic process Z, then Y_t = tau_{origin + Z_t} y at the snapshot times."""
    steps = grid_steps(dt, T)
    if dB is None:
        if driver is None:
            raise ValueError("need a driver or explicit increments")
        dB = driver.increments(steps)
    dB = np.asarray(dB, dtype=np.float64).reshape(steps, field.n)
    times = np.linspace(0.0, T, 11) if snapshot_times is None else np.asarray(snapshot_times, dtype=float)
    idx = _grid_indices(times, dt, steps)
    path = characteristic_Z(field, y, dt, T, dB=dB, R_explode=R_explode, radius=radius, q=q, origin=origin)
    off = np.zeros(y.scheme.d) if origin is None else np.asarray(origin, dtype=float).reshape(y.scheme.d)
    stop = len(path.t) - 1
    keep = [(t, m) for t, m in zip(times, idx)
            if m <= stop and np.linalg.norm(off + path.X[m]) <= TRANSLATION_GUARD]
    snaps = [translate(y, off + path.X[m]) for _, m in keep]
    rec = SolutionRecord(field, y, p, q, dt, path, dB, np.array([t for t, _ in keep]), snaps, off)
    rec.diagnostics["norm_p"] = [sobolev_norm(s, p) for s in snaps]
    rec.diagnostics["dist_q"] = [sobolev_norm(s - y, q) for s in snaps]
    return rec


def shift_norm_series(record: SolutionRecord, q: int = 1) -> np.ndarray:
    """||tau_{Z_m} y - y||_q on every grid point up to the stop, without truncating the translate."""
    return exact_shift_norm(record.y, record.origin + record.path.X, q, center=record.y)


def blowup_monitor(series, window: int = 10) -> bool:
    """Norm series nondecreasing over the last ``window`` values, ending above every earlier value."""
    s = np.asarray(series, dtype=float)
    if s.size <= window:
        return False
    tail = s[-window:]
    return bool(np.all(np.diff(tail) >= 0) and tail[-1] > np.max(s[:-1]))


# -- Picard route ----------------------------------------------------------------

@dataclass
class PicardRecord:
    t: np.ndarray
    Z: list                  # Z^{k-1}, k = 1..k_max, each (M, steps+1, d)
    eta: list                # eta^k per path (time, inf if never)
    eta_index: list          # grid index used for stopping, per iterate
    radius: float
    q: float
    error_times: np.ndarray
    errors: np.ndarray       # (k_max, len(error_times), M): ||Y^k - Y^{k-1}||_q at t ^ eta
    y: SpectralElement

    @property
    def k_max(self) -> int:
        return len(self.Z)

    def mean_square_errors(self) -> np.ndarray:
        """Ensemble mean of e_k^2, shape (k_max, len(error_times))."""
        return np.mean(self.errors ** 2, axis=2)

    def snapshots(self, path: int, times) -> list:
        """Y^{k_max} = tau_{Z^{k_max - 1}} y at the given times for one path."""
        dt = self.t[1] - self.t[0]
        idx = _grid_indices(times, dt, len(self.t) - 1)
        return [SpectralElement(self.y.scheme, r) for r in translate_batch(self.y, self.Z[-1][path, idx])]


def _first_exit(norms: np.ndarray, r: float, t: np.ndarray):
    """Per row: first grid index with norm > r (steps if none) and the interpolated time (inf if none)."""
    steps = norms.shape[1] - 1
    above = norms > r
    hit = above.any(axis=1)
    first = np.where(hit, np.argmax(above, axis=1), steps)
    eta = np.full(norms.shape[0], np.inf)
    for i in np.flatnonzero(hit):
        m = first[i]
        if m == 0:
            eta[i] = t[0]
            continue
        prev, cur = norms[i, m - 1], norms[i, m]
        eta[i] = t[m - 1] + (r - prev) / (cur - prev) * (t[m] - t[m - 1])
    return first, eta


def solve_picard(field: CoefficientField, y: SpectralElement, r: float, k_max: int, dt: float, T: float,
                 driver: NoiseDriver | None = None, *, dB=None, paths: int = 1, q: int = 0,
                 error_times=None) -> PicardRecord:
    """Modified Picard iterates on a shared driver.

    Z^{-1} = 0.  For k >= 1, Z^{k-1} integrates sigma, b frozen at
    Y^{k-1} = tau_{Z^{k-2}} y stopped at eta^{k-1}; Y^k = tau_{Z^{k-1}} y;
    sigma_k is the exit time of Y^k from the q-ball of radius r about y and
    eta^k = min(eta^{k-1}, sigma_k).
    """
    if not r > 0:
        raise ValueError("radius must be positive")
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    steps = grid_steps(dt, T)
    if dB is None:
        if driver is None:
            raise ValueError("need a driver or explicit increments")
        from .sde import ensemble_increments
        dB = ensemble_increments(driver, paths, steps)
    dB = np.asarray(dB, dtype=np.float64).reshape(-1, steps, field.n)
    M, d = dB.shape[0], field.d
    t = np.arange(steps + 1) * dt
    err_t = np.array([T]) if error_times is None else np.asarray(error_times, dtype=float)
    err_idx = _grid_indices(err_t, dt, steps)

    # Iterates are carried in difference form: dZ^k = Z^k - Z^{k-1} is
    # accumulated from coefficient differences evaluated without cancellation,
    # so the error curve stays meaningful far below the size of Z itself.
    rows = np.arange(M)[:, None]
    grid = np.arange(steps)[None, :]
    Zs, dZs, etas, stops = [], [], [], []
    for k in range(k_max):
        if k == 0:
            shifts = np.zeros((M * steps, d))
            if field.is_constant:
                s0, b0 = field.evaluate(y)
                sig = np.broadcast_to(s0, (M, steps) + s0.shape)
                bb = np.broadcast_to(b0, (M, steps, d))
            else:
                sig, bb = field.evaluate_shifted(y, shifts)
                sig = sig.reshape(M, steps, d, field.n)
                bb = bb.reshape(M, steps, d)
        else:
            # frozen states: Y^k = tau_{Z^{k-1}} y at min(m, stop^k), previous
            # iterate Y^{k-1} = tau_{Z^{k-2}} y at min(m, stop^{k-1})
            i_new = np.minimum(grid, stops[-1][:, None])
            new = Zs[-1][rows, i_new]
            if k == 1:
                old = np.zeros_like(new)
                delta = new
            else:
                i_old = np.minimum(grid, stops[-2][:, None])
                old = Zs[-2][rows, i_old]
                delta = np.where((i_new == i_old)[..., None], dZs[-1][rows, i_new], new - old)
            if field.is_constant:
                sig = np.zeros((M, steps, d, field.n))
                bb = np.zeros((M, steps, d))
            else:
                sig, bb = field.evaluate_shifted_difference(y, old.reshape(-1, d), delta.reshape(-1, d))
                sig = sig.reshape(M, steps, d, field.n)
                bb = bb.reshape(M, steps, d)
        incr = (sig * dB[:, :, None, :]).sum(axis=-1) + bb * dt
        dZ = np.zeros((M, steps + 1, d))
        dZ[:, 1:] = np.cumsum(incr, axis=1)
        Z = dZ if k == 0 else Zs[-1] + dZ
        norms = exact_shift_norm(y, Z.reshape(-1, d), q, center=y).reshape(M, steps + 1)
        first, sig_k = _first_exit(norms, r, t)
        prev_stop = stops[-1] if stops else np.full(M, steps, dtype=np.int64)
        prev_eta = etas[-1] if etas else np.full(M, np.inf)
        Zs.append(Z)
        dZs.append(dZ)
        stops.append(np.minimum(prev_stop, first))
        etas.append(np.minimum(prev_eta, sig_k))

    # errors ||Y^k - Y^{k-1}||_q at t ^ eta, eta the last computed stopping time
    final_stop = stops[-1]
    errors = np.zeros((k_max, len(err_idx), M))
    for j, m in enumerate(err_idx):
        at = np.minimum(m, final_stop)
        for k in range(k_max):
            base = np.zeros((M, d)) if k == 0 else Zs[k - 1][np.arange(M), at]
            big, inc = translation_increment(y, dZs[k][np.arange(M), at])
            if q != 0:
                inc = translated_rows(big, inc, base)
            errors[k, j] = np.sqrt(inc * inc @ big.weights(2.0 * q))
    return PicardRecord(t, Zs, etas, stops, float(r), float(q), err_t, errors, y)


# -- residual --------------------------------------------------------------

def spde_residual(field: CoefficientField, record: SolutionRecord, q: float | None = None) -> np.ndarray:
    """||Y_t - y - sum L(Y_m) dt - sum_j sum A_j(Y_m) dB^j_m||_q at each snapshot time."""
    q = record.q if q is None else q
    y = record.y
    scheme = y.scheme
    ops = operator_bundle(scheme)
    stop = len(record.path.t) - 1
    Y = record.grid_elements()
    dt = record.dt
    incr = np.zeros_like(Y)
    for m in range(stop):
        phi = SpectralElement(scheme, Y[m])
        sig, b, a = eval_coefficients(field, phi)
        if not (np.any(sig) or np.any(b)):
            continue
        DY = [D @ Y[m] for D in ops.D]
        drift = -sum(b[i] * DY[i] for i in range(field.d))
        drift = drift + 0.5 * sum(a[i, j] * (ops.D2[i, j] @ Y[m]) for i in range(field.d) for j in range(field.d))
        noise = np.zeros(scheme.size)
        for j in range(field.n):
            Aj = -sum(sig[k, j] * DY[k] for k in range(field.d))
            noise = noise + Aj * record.dB[m, j]
        incr[m + 1] = drift * dt + noise
    acc = np.cumsum(incr, axis=0)
    w = scheme.weights(2.0 * q)
    idx = _grid_indices(record.snapshot_times, dt, stop)
    res = Y[idx] - y.coeffs[None, :] - acc[idx]
    return np.sqrt(res * res @ w)


def frozen_record(record: SolutionRecord) -> SolutionRecord:
    """Negative control: same grid and noise, Y_t = y throughout."""
    path = FinitePath(record.path.t, np.zeros_like(record.path.X), record.path.status, record.path.eta_hat)
    snaps = [record.y for _ in record.snapshots]
    return SolutionRecord(record.field, record.y, record.p, record.q, record.dt, path, record.dB,
                          record.snapshot_times, snaps, record.origin)


# -- flow restart, duality, Fourier ----------------------------------------

@dataclass(frozen=True)
class RestartDefect:
    z_defect: float
    y_defect: float

    @property
    def total(self) -> float:
        return self.z_defect + self.y_defect


def flow_restart_check(field: CoefficientField, y: SpectralElement, s: float, T: float, dt: float,
                       driver: NoiseDriver | None = None, *, dB=None, q: float = 0.0,
                       compare_points: int = 11) -> RestartDefect:
    """Run to T, restart at s from tau_{Z_s} y on the remaining increments, compare."""
    steps = grid_steps(dt, T)
    if dB is None:
        dB = driver.increments(steps)
    dB = np.asarray(dB, dtype=np.float64).reshape(steps, field.n)
    ks = int(_grid_indices([s], dt, steps)[0])
    if not 0 <= ks < steps:
        raise ValueError("restart time must satisfy 0 <= s < T")
    full = characteristic_Z(field, y, dt, T, dB=dB)
    if ks == 0:
        rest, zs = characteristic_Z(field, y, dt, T, dB=dB), np.zeros(field.d)
    else:
        if len(full.t) - 1 < ks:
            raise ValueError("the full run stopped before the restart time")
        zs = full.X[ks]
        rest = characteristic_Z(field, y, dt, T - s, dB=dB[ks:], origin=zs)
    n = min(len(full.t) - ks, len(rest.t))
    a = full.X[ks:ks + n]
    b = zs + rest.X[:n]
    zdef = float(np.max(np.abs(a - b))) if n else 0.0
    pick = np.unique(np.linspace(0, n - 1, min(compare_points, n)).astype(int))
    ya = translate_batch(y, a[pick])
    yb = translate_batch(y, b[pick])
    w = y.scheme.weights(2.0 * q)
    ydef = float(np.max(np.sqrt((ya - yb) ** 2 @ w)))
    return RestartDefect(zdef, ydef)


def markov_marginal_check(field: CoefficientField, y: SpectralElement, s: float, T: float, dt: float,
                          driver: NoiseDriver, paths: int) -> dict:
    """Two-sample comparison of Z_T: direct runs against runs restarted at s on fresh noise.

    The restarted sample uses streams disjoint from the direct one after s, so the
    two samples are independent; returns z-scores of the mean and variance gaps.
    """
    from .sde import ensemble_increments
    steps = grid_steps(dt, T)
    ks = int(_grid_indices([s], dt, steps)[0])
    direct = characteristic_ensemble(field, y, dt, T, ensemble_increments(driver, paths, steps)).X[:, -1]
    head = ensemble_increments(driver, paths, steps, first_stream=paths)[:, :ks]
    tail = ensemble_increments(driver, paths, steps - ks, first_stream=2 * paths)
    zs = characteristic_ensemble(field, y, dt, s, head).X[:, -1] if ks else np.zeros((paths, field.d))
    restarted = np.empty_like(direct)
    for i in range(paths):
        rest = characteristic_Z(field, y, dt, T - s, dB=tail[i], origin=zs[i])
        restarted[i] = zs[i] + rest.X[-1]
    a, b = direct[:, 0], restarted[:, 0]
    se_mean = math.sqrt(a.var(ddof=1) / paths + b.var(ddof=1) / paths)
    va, vb = (a - a.mean()) ** 2, (b - b.mean()) ** 2
    se_var = math.sqrt(va.var(ddof=1) / paths + vb.var(ddof=1) / paths)
    return {"mean_z": abs(a.mean() - b.mean()) / se_mean if se_mean > 0 else 0.0,
            "var_z": abs(va.mean() - vb.mean()) / se_var if se_var > 0 else 0.0}


@dataclass(frozen=True)
class DualityResult:
    lhs: float
    rhs: float
    stderr: float
    max_path_defect: float


def characteristic_endpoints(field, y, t, dt, driver: NoiseDriver, paths: int) -> np.ndarray:
    """Z_t for ``paths`` streams (ascending from the driver's stream)."""
    from .sde import ensemble_increments
    steps = grid_steps(dt, t)
    dB = ensemble_increments(driver, paths, steps)
    ens = characteristic_ensemble(field, y, dt, t, dB)
    return ens.X[:, -1]


def duality_check(field: CoefficientField, y: SpectralElement, f: SpectralElement, t: float, paths: int,
                  driver: NoiseDriver, dt: float | None = None) -> DualityResult:
    """E<y, tau_{-Z_t} f> against E<tau_{Z_t} y, f>."""
    if paths < 1:
        raise ValueError("need at least one path")
    if t == 0:
        v = dual_pairing(y, f)
        return DualityResult(v, v, 0.0, 0.0)
    dt = driver.dt if dt is None else dt
    Z = characteristic_endpoints(field, y, t, dt, driver, paths)
    left = translate_batch(f, -Z) @ y.coeffs
    right = translate_batch(y, Z) @ f.coeffs
    se = float(np.std(right, ddof=1) / math.sqrt(paths)) if paths > 1 else 0.0
    return DualityResult(float(np.mean(left)), float(np.mean(right)), se, float(np.max(np.abs(left - right))))


def fourier_values(u: SpectralElement, xi) -> np.ndarray:
    """Values of the Fourier transform of u at frequencies xi of shape (P, d)."""
    fu = fourier_transform(u)
    return basis_values(u.scheme, np.asarray(xi, dtype=float).reshape(-1, u.scheme.d)) @ fu.coeffs


def fourier_identity_defect(y: SpectralElement, z, xi) -> float:
    """max |F(tau_z y)(xi) - F(y)(xi) exp(-i xi.z)| over the frequencies.

    With the kernel exp(-i xi.x), a shift by z multiplies the transform by exp(-i xi.z).
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    xi = np.asarray(xi, dtype=float).reshape(-1, y.scheme.d)
    lhs = fourier_values(translate(y, z), xi)
    rhs = fourier_values(y, xi) * np.exp(-1j * xi @ z)
    return float(np.max(np.abs(lhs - rhs)))


# -- weak-null diagnostic ----------------------------------------------------------

def weak_null_diagnostic(y: SpectralElement, Z, tests) -> dict:
    """Series <tau_{Z_m} y, f_i> and |Z_m| along a path Z of shape (steps+1, d)."""
    Z = np.asarray(Z, dtype=float).reshape(-1, y.scheme.d)
    pairs = np.stack([shifted_pairing(y, f, Z) for f in tests])
    return {"pairings": pairs, "abs_Z": np.linalg.norm(Z, axis=1)}
