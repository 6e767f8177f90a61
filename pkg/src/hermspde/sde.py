"""Brownian drivers, Euler-Maruyama paths, the characteristic process Z and exit times."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .sobolev import SpectralElement, exact_shift_norm, sobolev_norm

R_EXPLODE = 1e6
DEFAULT_DT = 1e-3

COMPLETED, EXITED, EXPLODED = "completed", "exited", "exploded"


# -- noise ------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseDriver:
    """Brownian increments for one path.

    Increments are drawn at the base step dt / substeps from a Philox stream
    keyed by (seed, stream) and summed in blocks of ``substeps``.  Draws are
    prefix-stable, so increment m depends only on (seed, stream, m).
    """

    seed: int
    stream: int = 0
    n: int = 1
    dt: float = DEFAULT_DT
    substeps: int = 1

    def __post_init__(self):
        if not self.dt > 0 or not math.isfinite(self.dt):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n < 1 or self.substeps < 1:
            raise ValueError("n and substeps must be positive")

    @property
    def base_dt(self) -> float:
        return self.dt / self.substeps

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.Philox(ss))

    def increments(self, steps: int) -> np.ndarray:
        raw = self.generator().standard_normal((steps * self.substeps, self.n)) * math.sqrt(self.base_dt)
        if self.substeps == 1:
            return raw
        return raw.reshape(steps, self.substeps, self.n).sum(axis=1)

    def coarsen(self, factor: int) -> "NoiseDriver":
        """Same Brownian path observed on a grid ``factor`` times coarser."""
        return NoiseDriver(self.seed, self.stream, self.n, self.dt * factor, self.substeps * factor)

    def with_stream(self, stream: int) -> "NoiseDriver":
        return NoiseDriver(self.seed, stream, self.n, self.dt, self.substeps)


def ensemble_increments(driver: NoiseDriver, paths: int, steps: int, first_stream: int | None = None) -> np.ndarray:
    """Increments for streams first_stream .. first_stream + paths - 1, shape (paths, steps, n)."""
    s0 = driver.stream if first_stream is None else first_stream
    return np.stack([driver.with_stream(s0 + i).increments(steps) for i in range(paths)])


def grid_steps(dt: float, T: float) -> int:
    if not dt > 0 or not math.isfinite(dt):
        raise ValueError(f"dt must be positive, got {dt}")
    if not T >= dt:
        raise ValueError(f"T must be at least dt (T={T}, dt={dt})")
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T={T} is not a multiple of dt={dt}")
    return steps


# -- paths ------------------------------------------------------------------

@dataclass
class FinitePath:
    t: np.ndarray          # (m+1,)
    X: np.ndarray          # (m+1, d)
    status: str = COMPLETED
    eta_hat: float | None = None
    stop_index: int | None = None
    radius: float | None = None

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"X_{i + 1}" for i in range(self.d)] + ["status"])
        last = len(self.t) - 1
        for m in range(len(self.t)):
            tag = self.status if (m == last or self.status == COMPLETED) else "active"
            w.writerow([f"{self.t[m]:.17g}"] + [f"{v:.17g}" for v in self.X[m]] + [tag])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "FinitePath":
        rows = list(csv.reader(io.StringIO(text)))
        head, body = rows[0], rows[1:]
        if head[0] != "t" or head[-1] != "status":
            raise ValueError("path CSV needs columns t, X_1..X_d, status")
        t = np.array([float(r[0]) for r in body])
        X = np.array([[float(v) for v in r[1:-1]] for r in body]).reshape(len(body), len(head) - 2)
        return cls(t, X, body[-1][-1] if body else COMPLETED)


@dataclass
class PathEnsemble:
    """M paths on a common grid; rows after a path's stop index repeat its last state."""

    t: np.ndarray          # (steps+1,)
    X: np.ndarray          # (M, steps+1, d)
    status: np.ndarray     # (M,) of str
    eta_hat: np.ndarray    # (M,), inf when completed
    stop_index: np.ndarray  # (M,), steps when completed

    @property
    def paths(self) -> int:
        return self.X.shape[0]

    def path(self, i: int) -> FinitePath:
        stop = int(self.stop_index[i])
        eta = None if self.status[i] == COMPLETED else float(self.eta_hat[i])
        return FinitePath(self.t[: stop + 1].copy(), self.X[i, : stop + 1].copy(), str(self.status[i]), eta,
                          None if self.status[i] == COMPLETED else stop)


def _crossing(prev, cur, level, t0, dt):
    """Linear interpolation of the time a norm series crosses ``level``."""
    span = cur - prev
    frac = np.where(span > 0, (level - prev) / np.where(span > 0, span, 1.0), 0.0)
    return t0 + np.clip(frac, 0.0, 1.0) * dt


def euler_ensemble(coeffs, x0, dt: float, dB: np.ndarray, *, R_explode: float = R_EXPLODE,
                   exit_norm=None, radius: float | None = None) -> PathEnsemble:
    """Euler-Maruyama for M paths driven by dB of shape (M, steps, n).

    ``coeffs(X)`` maps states (A, d) to (sigma (A, d, n), b (A, d)).  A path
    stops when |X| exceeds R_explode (exploded), when a coefficient is not
    finite (exploded), or when ``exit_norm(X)`` exceeds ``radius`` (exited).
    """
    dB = np.asarray(dB, dtype=np.float64)
    M, steps, n = dB.shape
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    X0 = np.broadcast_to(x0, (M, x0.shape[-1]))
    d = X0.shape[1]
    X = np.empty((M, steps + 1, d))
    X[:, 0] = X0
    t = np.arange(steps + 1) * dt
    status = np.full(M, COMPLETED, dtype=object)
    eta = np.full(M, np.inf)
    stop = np.full(M, steps, dtype=np.int64)
    active = np.ones(M, dtype=bool)
    norm_prev = np.linalg.norm(X0, axis=1)
    exit_prev = exit_norm(X0) if exit_norm is not None else None
    for m in range(steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            X[:, m + 1:] = X[:, m:m + 1]
            break
        xm = X[idx, m]
        sig, b = coeffs(xm)
        ok = np.all(np.isfinite(sig.reshape(idx.size, -1)), axis=1) & np.all(np.isfinite(b), axis=1)
        if not ok.all():
            bad = idx[~ok]
            status[bad], eta[bad], stop[bad] = EXPLODED, t[m], m
            active[bad] = False
            sig, b, xm, idx = sig[ok], b[ok], xm[ok], idx[ok]
        nxt = xm + (sig * dB[idx, m][:, None, :]).sum(axis=-1) + b * dt
        X[idx, m + 1] = nxt
        frozen = ~active
        X[frozen, m + 1] = X[frozen, m]
        nrm = np.linalg.norm(nxt, axis=1)
        blown = ~np.isfinite(nrm) | (nrm > R_explode)
        if blown.any():
            hit = idx[blown]
            status[hit], stop[hit] = EXPLODED, m + 1
            eta[hit] = _crossing(norm_prev[hit], np.where(np.isfinite(nrm[blown]), nrm[blown], np.inf),
                                 R_explode, t[m], dt)
            active[hit] = False
        norm_prev[idx] = nrm
        if exit_norm is not None and radius is not None:
            live = ~blown
            if live.any():
                cand = idx[live]
                en = exit_norm(nxt[live])
                out = en > radius
                if out.any():
                    hit = cand[out]
                    status[hit], stop[hit] = EXITED, m + 1
                    eta[hit] = _crossing(exit_prev[hit], en[out], radius, t[m], dt)
                    active[hit] = False
                exit_prev[cand] = en
    return PathEnsemble(t, X, status, eta, stop)


def euler_maruyama(sigma_fn, b_fn, x0, dt: float, T: float, driver: NoiseDriver | None = None, *,
                   dB=None, R_explode: float = R_EXPLODE, ball=None) -> FinitePath:
    """X_{m+1} = X_m + sigma(X_m) dB_m + b(X_m) dt for one path.

    ``sigma_fn(x)`` returns a (d, n) matrix and ``b_fn(x)`` a d-vector;
    ``ball`` = (center, r) adds an exit guard |X - center| > r.
    """
    steps = grid_steps(dt, T)
    if dB is None:
        if driver is None:
            raise ValueError("need a driver or explicit increments")
        dB = driver.increments(steps)
    dB = np.asarray(dB, dtype=np.float64).reshape(steps, -1)
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    d, n = x0.shape[0], dB.shape[1]

    def coeffs(X):
        sig = np.array([np.asarray(sigma_fn(x), dtype=np.float64).reshape(d, n) for x in X])
        b = np.array([np.asarray(b_fn(x), dtype=np.float64).reshape(d) for x in X])
        return sig, b

    exit_norm = radius = None
    if ball is not None:
        center, radius = np.asarray(ball[0], dtype=np.float64), float(ball[1])
        exit_norm = lambda X: np.linalg.norm(X - center, axis=1)  # noqa: E731
    ens = euler_ensemble(coeffs, x0, dt, dB[None], R_explode=R_explode, exit_norm=exit_norm, radius=radius)
    path = ens.path(0)
    path.radius = radius
    return path


# -- characteristic process --------------------------------------------------

def field_coeffs(field, y: SpectralElement, origin=None):
    """Vectorized coefficient map z -> (sigma, b) at tau_{origin + z} y."""
    d = y.scheme.d
    off = np.zeros(d) if origin is None else np.asarray(origin, dtype=np.float64).reshape(d)
    if field.is_constant:
        sig0, b0 = field.evaluate(y)

        def coeffs(Z):
            A = Z.shape[0]
            return np.broadcast_to(sig0, (A,) + sig0.shape), np.broadcast_to(b0, (A, d))
        return coeffs

    def coeffs(Z):
        return field.evaluate_shifted(y, Z + off)
    return coeffs


def characteristic_ensemble(field, y: SpectralElement, dt: float, T: float, dB: np.ndarray, *,
                            R_explode: float = R_EXPLODE, radius: float | None = None, q: float = 0,
                            origin=None) -> PathEnsemble:
    """Z_{m+1} = Z_m + sigma(tau_{Z_m} y) dB_m + b(tau_{Z_m} y) dt for every row of dB.

    With ``radius`` the path exits once ||tau_Z y - y||_q > radius (integer q,
    untruncated norm).  ``origin`` evaluates coefficients at tau_{origin + Z} y,
    which is how a run restarted from tau_x y is expressed exactly.
    """
    steps = grid_steps(dt, T)
    dB = np.asarray(dB, dtype=np.float64)
    if dB.shape[1] != steps:
        raise ValueError(f"increments cover {dB.shape[1]} steps, grid needs {steps}")
    if dB.shape[2] != field.n or y.scheme.d != field.d:
        raise ValueError("field, element and driver dimensions disagree")
    off = np.zeros(field.d) if origin is None else np.asarray(origin, dtype=np.float64).reshape(field.d)
    exit_norm = None
    if radius is not None:
        exit_norm = lambda Z: exact_shift_norm(y, Z + off, q, center=y)  # noqa: E731
    return euler_ensemble(field_coeffs(field, y, origin), np.zeros(field.d), dt, dB,
                          R_explode=R_explode, exit_norm=exit_norm, radius=radius)


def characteristic_Z(field, y: SpectralElement, dt: float, T: float, driver: NoiseDriver | None = None, *,
                     dB=None, R_explode: float = R_EXPLODE, radius: float | None = None, q: float = 0,
                     origin=None) -> FinitePath:
    steps = grid_steps(dt, T)
    if dB is None:
        if driver is None:
            raise ValueError("need a driver or explicit increments")
        dB = driver.increments(steps)
    dB = np.asarray(dB, dtype=np.float64).reshape(1, steps, -1)
    ens = characteristic_ensemble(field, y, dt, T, dB, R_explode=R_explode, radius=radius, q=q, origin=origin)
    path = ens.path(0)
    path.radius = radius
    return path


# -- exit times ---------------------------------------------------------------

def exit_time(snapshots, y: SpectralElement, r: float, q: float, times=None):
    """First time ||Y_t - y||_q > r along the snapshots (linear interpolation), or None."""
    series = np.array([sobolev_norm(s - y, q) for s in snapshots])
    times = np.arange(len(series), dtype=float) if times is None else np.asarray(times, dtype=float)
    return series_exit_time(series, r, times)


def series_exit_time(series, r: float, times):
    series = np.asarray(series, dtype=float)
    above = np.flatnonzero(series > r)
    if above.size == 0:
        return None
    m = int(above[0])
    if m == 0:
        return float(times[0])
    return float(_crossing(series[m - 1], series[m], r, times[m - 1], times[m] - times[m - 1]))
