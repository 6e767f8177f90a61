"""Desk-scale reproductions of the application examples, each with its own oracle."""
from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solve_banded

from .hermite import TruncationScheme, gauss_hermite_rule, project_function
from .operators import CoefficientField, DualPairing, PointwiseFunction, apply_L, operator_bundle
from .report import Report, check_le
from .sde import (
    NoiseDriver,
    characteristic_ensemble,
    ensemble_increments,
    euler_ensemble,
    euler_maruyama,
    grid_steps,
)
from .sobolev import SpectralElement, sobolev_norm, translate_batch

WEIGHT_GUARD = 50.0


def _gauss_nodes(Q: int):
    """Nodes and probability weights for expectations over N(0, 1)."""
    rule = gauss_hermite_rule(Q)
    return math.sqrt(2.0) * rule.nodes, rule.weights / math.sqrt(math.pi)


def gaussian_average(y: SpectralElement, mean, cov, Q: int = 60) -> np.ndarray:
    """Coefficients of E tau_Z y for Z ~ N(mean, cov), by tensor Gauss-Hermite quadrature."""
    d = y.scheme.d
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if not np.any(cov):
        return translate_batch(y, mean[None, :])[0]
    vals, vecs = np.linalg.eigh(cov)
    root = vecs * np.sqrt(np.clip(vals, 0.0, None))
    x, w = _gauss_nodes(Q)
    grids = np.meshgrid(*([x] * d), indexing="ij")
    pts = np.stack([g.reshape(-1) for g in grids], axis=1)
    wts = np.prod(np.stack(np.meshgrid(*([w] * d), indexing="ij")).reshape(d, -1), axis=0)
    shifts = mean[None, :] + pts @ root.T
    return wts @ translate_batch(y, shifts)


def heat_closed_form(scheme: TruncationScheme, mean: float, var: float) -> SpectralElement:
    """Projection of h_0 * N(mean, var): pi^{-1/4} (1+var)^{-1/2} exp(-(x-mean)^2 / (2(1+var)))."""
    c = math.pi ** -0.25 / math.sqrt(1.0 + var)
    return project_function(lambda x: c * np.exp(-((x - mean) ** 2) / (2.0 * (1.0 + var))), scheme,
                            Q=scheme.N + 40, scale=math.sqrt(2.0 * (1.0 + var)))


def _stats(rows):
    rows = np.asarray(rows, dtype=float)
    mean = rows.mean(axis=0)
    se = rows.std(axis=0, ddof=1) / math.sqrt(rows.shape[0]) if rows.shape[0] > 1 else np.zeros_like(mean)
    return mean, se


# -- heat representation ------------------------------------------------------------

def run_heat_check(field: CoefficientField, y: SpectralElement, t: float, paths: int, seed: int,
                   dt: float | None = None, closed_form: bool | None = None) -> Report:
    """Monte Carlo mean of tau_{Z_t} y against the Gaussian convolution y * N(bt, sigma sigma^t t)."""
    if not field.is_constant:
        raise ValueError("the heat check needs a constant-coefficient field")
    rep = Report("heat")
    sig, b = field.evaluate(y)
    mean, cov = b * t, sig @ sig.T * t
    if t == 0:
        rep.metrics["max_error"] = 0.0
        rep.add(check_le("heat t=0 identity", 0.0, 0.0))
        return rep
    dt = t if dt is None else dt
    steps = grid_steps(dt, t)
    driver = NoiseDriver(seed, 0, field.n, dt)
    dB = ensemble_increments(driver, paths, steps)
    Z = characteristic_ensemble(field, y, dt, t, dB).X[:, -1]
    mc, se = _stats(translate_batch(y, Z))
    use_closed = closed_form if closed_form is not None else (
        y.scheme.d == 1 and np.allclose(y.coeffs, np.eye(1, y.scheme.size)[0]))
    oracle = (heat_closed_form(y.scheme, float(mean[0]), float(cov[0, 0])).coeffs if use_closed
              else gaussian_average(y, mean, cov))
    err = np.abs(mc - oracle)
    slack = err - (3.0 * se + 1e-6)
    rep.metrics.update(max_error=float(err.max()), max_stderr=float(se.max()), worst_slack=float(slack.max()),
                       oracle="closed form" if use_closed else "Gauss-Hermite average")
    rep.series["coefficients"] = (["index", "mc_mean", "stderr", "oracle"],
                                  np.column_stack([np.arange(y.scheme.size), mc, se, oracle]))
    rep.add(check_le("heat: max_k |mc - oracle| - (3 se + 1e-6)", slack.max(), 0.0,
                     f"M={paths}, t={t}, N={y.scheme.N}"))
    return rep


# -- deterministic evolution ---------------------------------------------------------

def evolution_stability_bound(field: CoefficientField, y: SpectralElement, a_max: float | None = None) -> float:
    """Largest stable explicit step for the diffusion part: dt <= 2 / (a_max/2 * ||D^2||)."""
    ops = operator_bundle(y.scheme)
    lam = max(np.linalg.norm(ops.D2[i, i], 2) for i in range(y.scheme.d))
    if a_max is None:
        sig, _ = field.evaluate(y)
        a_max = float(np.max(np.abs(sig @ sig.T)))
    if a_max == 0:
        return math.inf
    return 2.0 / (0.5 * a_max * lam)


def evolve_L(field: CoefficientField, y: SpectralElement, dt: float, T: float, guard: float = 1e3):
    """Forward Euler Y_{m+1} = Y_m + dt L(Y_m); returns the list of states on the grid."""
    steps = grid_steps(dt, T)
    bound = evolution_stability_bound(field, y)
    if dt > bound:
        raise ValueError(f"dt={dt} exceeds the explicit stability bound {bound:.4g}")
    states = [y]
    base = sobolev_norm(y, 0)
    for _ in range(steps):
        cur = states[-1]
        nxt = cur + dt * apply_L(field, cur)
        if sobolev_norm(nxt, 0) > guard * max(base, 1e-300):
            raise FloatingPointError("coefficient norm grew past the stability guard")
        states.append(nxt)
    return states


def gaussian_representation(field: CoefficientField, y: SpectralElement, dt: float, T: float, Q: int = 40):
    """Y_t = E tau_{Z_t} y with Gaussian Z_t: m' = b(Y_t), Sigma' = sigma sigma^t(Y_t), stepped with Heun."""
    steps = grid_steps(dt, T)
    d = y.scheme.d
    m = np.zeros(d)
    S = np.zeros((d, d))

    def state(m, S):
        return SpectralElement(y.scheme, gaussian_average(y, m, S, Q))

    def rates(m, S):
        sig, b = field.evaluate(state(m, S))
        return b, sig @ sig.T

    out = [y]
    for _ in range(steps):
        b1, a1 = rates(m, S)
        b2, a2 = rates(m + dt * b1, S + dt * a1)
        m = m + 0.5 * dt * (b1 + b2)
        S = S + 0.5 * dt * (a1 + a2)
        out.append(state(m, S))
    return out, m, S


def run_evolution(field: CoefficientField, y: SpectralElement, dt: float, T: float, tol: float = 1e-3) -> Report:
    """Two routes for dY/dt = L(Y): coefficient-space Euler and the Gaussian representation."""
    rep = Report("evolution")
    euler = evolve_L(field, y, dt, T)
    rep_states, m, S = gaussian_representation(field, y, dt, T)
    diffs = np.array([sobolev_norm(a - b, 0) for a, b in zip(euler, rep_states)])
    rep.metrics.update(max_route_gap=float(diffs.max()), final_mean=m.tolist(), final_cov=S.tolist(),
                       stability_bound=evolution_stability_bound(field, y))
    t = np.arange(len(diffs)) * dt
    rep.series["route_gap"] = (["t", "l2_gap"], np.column_stack([t, diffs]))
    rep.add(check_le("evolution: sup_t ||Euler - Gaussian representation||_0", diffs.max(), tol,
                     f"dt={dt}, T={T}, N={y.scheme.N}"))
    return rep


# -- Feynman-Kac ----------------------------------------------------------------------

def crank_nicolson_oracle(V, f, sigma, b, t: float, L: float = 8.0, points: int = 2048, steps: int = 2000):
    """u_t = sigma^2/2 u_xx + b u_x + V u, u(0) = f on [-L, L] with zero boundary values.

    Returns (x grid, u(t, x)).
    """
    x = np.linspace(-L, L, points)
    h = x[1] - x[0]
    xi = x[1:-1]
    s2 = np.asarray(sigma(xi), dtype=float) ** 2 * np.ones_like(xi)
    bb = np.asarray(b(xi), dtype=float) * np.ones_like(xi)
    vv = np.asarray(V(xi), dtype=float) * np.ones_like(xi)
    lower = 0.5 * s2 / h ** 2 - 0.5 * bb / h
    diag = -s2 / h ** 2 + vv
    upper = 0.5 * s2 / h ** 2 + 0.5 * bb / h
    k = t / steps
    ab = np.zeros((3, xi.size))
    ab[0, 1:] = -0.5 * k * upper[:-1]
    ab[1] = 1.0 - 0.5 * k * diag
    ab[2, :-1] = -0.5 * k * lower[1:]
    u = np.asarray(f(xi), dtype=float) * np.ones_like(xi)
    for _ in range(steps):
        rhs = (1.0 + 0.5 * k * diag) * u
        rhs[1:] += 0.5 * k * lower[1:] * u[:-1]
        rhs[:-1] += 0.5 * k * upper[:-1] * u[1:]
        u = solve_banded((1, 1), ab, rhs)
    full = np.zeros_like(x)
    full[1:-1] = u
    return x, full


def feynman_kac_paths(V, f, sigma, b, x0: float, t: float, dB: np.ndarray, dt: float):
    """Per-path weight exp(int V) (trapezoid), payoff f(X_t) and the unweighted payoff."""
    M, steps, _ = dB.shape
    X = np.full(M, float(x0))
    v_prev = np.asarray(V(X), dtype=float) * np.ones(M)
    acc = np.zeros(M)
    for m in range(steps):
        X = X + np.asarray(sigma(X), dtype=float) * dB[:, m, 0] + np.asarray(b(X), dtype=float) * dt
        v = np.asarray(V(X), dtype=float) * np.ones(M)
        acc += 0.5 * (v_prev + v) * dt
        v_prev = v
    payoff = np.asarray(f(X), dtype=float)
    return acc, payoff


def run_feynman_kac(V, f, sigma, b, xs, t: float, paths: int, seed: int, dt: float = 1e-3,
                    oracle=None, chunk: int = 5000, rel_tol: float = 0.01) -> Report:
    """u(t, x) = E[exp(int_0^t V(X_s) ds) f(X_t)] by Euler paths, against a finite-difference oracle."""
    rep = Report("feynman-kac")
    steps = grid_steps(dt, t)
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    driver = NoiseDriver(seed, 0, 1, dt)
    sums = np.zeros(xs.size)
    sq = np.zeros(xs.size)
    max_exp = -math.inf
    for lo in range(0, paths, chunk):
        hi = min(paths, lo + chunk)
        dB = ensemble_increments(driver, hi - lo, steps, first_stream=lo)
        for j, x0 in enumerate(xs):
            acc, payoff = feynman_kac_paths(V, f, sigma, b, x0, t, dB, dt)
            max_exp = max(max_exp, float(acc.max()))
            val = np.exp(acc) * payoff
            sums[j] += val.sum()
            sq[j] += (val * val).sum()
    mean = sums / paths
    se = np.sqrt(np.maximum(sq / paths - mean ** 2, 0.0) / max(paths - 1, 1))
    rep.metrics.update(u_mc=mean.tolist(), stderr=se.tolist(), max_exponent=max_exp)
    rep.add(check_le("feynman-kac: accumulated exponent below guard", max_exp, WEIGHT_GUARD))
    if oracle is not None:
        grid, u = oracle
        u_fd = np.interp(xs, grid, u)
        scale = float(np.max(np.abs(u)))
        slack = np.abs(mean - u_fd) - (rel_tol * scale + 3.0 * se)
        rep.metrics.update(u_fd=u_fd.tolist(), sup_u_fd=scale, worst_slack=float(slack.max()))
        rep.series["u"] = (["x", "u_mc", "stderr", "u_fd"], np.column_stack([xs, mean, se, u_fd]))
        rep.add(check_le("feynman-kac: max_x |u_mc - u_fd| - (1% sup|u_fd| + 3 se)", slack.max(), 0.0,
                         f"M={paths}, t={t}, dt={dt}"))
    return rep


def constant_potential_ratio(c: float, f, sigma, b, x0: float, t: float, paths: int, seed: int,
                             dt: float = 1e-3) -> float:
    """max over paths of |weighted/unweighted payoff - exp(c t)| for V = c."""
    steps = grid_steps(dt, t)
    dB = ensemble_increments(NoiseDriver(seed, 0, 1, dt), paths, steps)
    acc, payoff = feynman_kac_paths(lambda x: c + 0.0 * x, f, sigma, b, x0, t, dB, dt)
    ratio = np.exp(acc) * payoff / payoff
    return float(np.max(np.abs(ratio - math.exp(c * t))))


# -- McKean-Vlasov -----------------------------------------------------------------------

def mckean_vlasov(drift, sigma, x0, particles: int, dt: float, T: float, seed: int, y: SpectralElement | None = None):
    """Interacting particles dX^i = sigma dB^i + drift(X^i, X) dt; law = empirical measure.

    ``drift(x, cloud)`` sees all particle positions.  Returns (t, mean, var,
    final positions, psi) where psi is the average of tau_{X^i_T} y when y is given.
    """
    steps = grid_steps(dt, T)
    dB = ensemble_increments(NoiseDriver(seed, 0, 1, dt), particles, steps)
    X = np.full(particles, float(x0)) if np.ndim(x0) == 0 else np.array(x0, dtype=float)
    means, varis = [X.mean()], [X.var()]
    for m in range(steps):
        bx = np.asarray(drift(X, X), dtype=float)
        X = X + np.asarray(sigma(X), dtype=float) * dB[:, m, 0] + bx * dt
        if not np.all(np.isfinite(X)):
            raise FloatingPointError(f"particle blow-up at step {m + 1}")
        means.append(X.mean())
        varis.append(X.var())
    psi = None
    if y is not None:
        psi = SpectralElement(y.scheme, translate_batch(y, X[:, None]).mean(axis=0))
    return np.arange(steps + 1) * dt, np.array(means), np.array(varis), X, psi


def run_mckean_vlasov(particles: int, dt: float, T: float, seed: int, m0: float = 1.0) -> Report:
    rep = Report("mckean-vlasov")
    one = lambda x: 1.0 + 0.0 * x  # noqa: E731
    t, mean_ou, _, _, _ = mckean_vlasov(lambda x, c: -x, one, m0, particles, dt, T, seed)
    oracle = m0 * np.exp(-t)
    se = math.sqrt((1 - math.exp(-2 * T)) / 2 / particles)
    rep.add(check_le("mckean-vlasov: |mean - m0 exp(-t)| at T (no interaction)", abs(mean_ou[-1] - oracle[-1]),
                     3 * se + 1e-3, "Euler bias + 3 se"))
    x0 = m0 + np.random.default_rng(seed).standard_normal(particles)
    t, mean_mf, _, _, _ = mckean_vlasov(lambda x, c: c.mean() - x, one, x0, particles, dt, T, seed)
    drift_se = math.sqrt(T / particles)
    rep.add(check_le("mckean-vlasov: sup_t |mean_t - mean_0| (mean-field drift)",
                     np.max(np.abs(mean_mf - mean_mf[0])), 4 * drift_se))
    # a single particle without interaction is an ordinary Euler path
    _, single, _, _, _ = mckean_vlasov(lambda x, c: -x, one, m0, 1, dt, T, seed)
    em = euler_maruyama(lambda x: [[1.0]], lambda x: -x, m0, dt, T, NoiseDriver(seed, 0, 1, dt))
    rep.add(check_le("mckean-vlasov: M=1 vs Euler-Maruyama", np.max(np.abs(single - em.X[:, 0])), 0.0))
    rep.series["means"] = (["t", "mean_ou", "oracle", "mean_meanfield"],
                           np.column_stack([t, mean_ou, oracle, mean_mf]))
    return rep


# -- mollified martingale problem ------------------------------------------------------

def mollified(fn, eps: float, Q: int = 40):
    """z -> E fn(z + eps G), G standard normal: the lifted coefficient <fn, tau_z y_eps>
    for the normalized Gaussian y_eps of width eps."""
    x, w = _gauss_nodes(Q)

    def lifted(z):
        z = np.asarray(z, dtype=float)
        return np.asarray(fn(z[..., None] + eps * x), dtype=float) @ w
    return lifted


def _moments(X):
    return np.array([X.mean(), X.var(), np.mean((X - X.mean()) ** 3)])


def run_martingale_convergence(sigma_bar, b_bar, eps_list, x: float, t: float, paths: int, seed: int,
                               dt: float = 1e-2, final_tol: float = 5e-2, cdf_points=None) -> Report:
    """Lifted SDEs with mollified initial data against the classical SDE on common noise."""
    rep = Report("mollifier")
    eps_list = [float(e) for e in eps_list]
    if any(a <= b for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("mollifier widths must be decreasing")
    # boundedness heuristic: the sup over a wide grid must not outgrow the sup near the origin
    near, wide = np.linspace(-10, 10, 401), np.linspace(-1000, 1000, 40001)
    for fn in (sigma_bar, b_bar):
        a, b = np.abs(fn(near)), np.abs(fn(wide))
        if not (np.all(np.isfinite(b)) and b.max() <= 2.0 * a.max() + 1.0):
            raise ValueError("coefficients must be bounded on the sample grid")
    steps = grid_steps(dt, t)
    dB = ensemble_increments(NoiseDriver(seed, 0, 1, dt), paths, steps)

    def run(sig, drift):
        def coeffs(Xs):
            return np.asarray(sig(Xs[:, 0]), dtype=float)[:, None, None] * np.ones((Xs.shape[0], 1, 1)), \
                np.asarray(drift(Xs[:, 0]), dtype=float)[:, None] * np.ones((Xs.shape[0], 1))
        return euler_ensemble(coeffs, np.array([x]), dt, dB).X[:, -1, 0]

    ref = run(sigma_bar, b_bar)
    ref_m = _moments(ref)
    cdf_points = np.quantile(ref, [0.1, 0.3, 0.5, 0.7, 0.9]) if cdf_points is None else np.asarray(cdf_points)
    rows = []
    errs = []
    ses = []
    for eps in eps_list:
        Xe = run(mollified(sigma_bar, eps), mollified(b_bar, eps))
        mom = _moments(Xe)
        dmean = Xe - ref
        dvar = (Xe - Xe.mean()) ** 2 - (ref - ref.mean()) ** 2
        se = np.array([dmean.std(ddof=1), dvar.std(ddof=1)]) / math.sqrt(paths)
        err = np.abs(mom[:2] - ref_m[:2])
        cdf_err = np.max(np.abs(np.mean(Xe[:, None] <= cdf_points, axis=0) - np.mean(ref[:, None] <= cdf_points, axis=0)))
        errs.append(err)
        ses.append(se)
        rows.append([eps, err[0], err[1], abs(mom[2] - ref_m[2]), cdf_err, se[0], se[1]])
    errs, ses = np.array(errs), np.array(ses)
    rep.series["errors"] = (["eps", "mean_err", "var_err", "third_err", "cdf_err", "mean_se", "var_se"], np.array(rows))
    rep.metrics.update(reference_moments=ref_m.tolist(), final_errors=errs[-1].tolist(), final_se=ses[-1].tolist())
    for j, name in enumerate(("mean", "variance")):
        worst = max((errs[i + 1, j] - errs[i, j] - ses[i + 1, j] for i in range(len(eps_list) - 1)), default=0.0)
        rep.add(check_le(f"mollifier: {name} error increase along the ladder (1 se slack)", worst, 0.0))
        rep.add(check_le(f"mollifier: final {name} error - 3 se", errs[-1, j] - 3 * ses[-1, j], final_tol,
                         f"eps={eps_list[-1]}"))
    return rep


# -- Example 2 and Example 3 checks ---------------------------------------------------

def convolution_identity(amp: float, center: float, width: float, y: SpectralElement, zs) -> float:
    """Max gap between <bbar, tau_z y> computed three ways for a Gaussian bbar and y = h_0.

    Routes: pointwise quadrature of int bbar(v + z) y(v) dv, the exact midpoint
    rule against the projected weight, and the closed-form convolution.
    """
    zs = np.asarray(zs, dtype=float)
    fn = PointwiseFunction.gaussian(amp, center, width)
    direct = DualPairing(fn).shifted(y, zs[:, None])
    spectral = DualPairing(project_function(fn, y.scheme, Q=y.scheme.N + 40, scale=math.sqrt(2.0) * max(1.0, width))
                           ).shifted(y, zs[:, None])
    s2 = width ** 2
    closed = amp * math.pi ** -0.25 * math.sqrt(2 * math.pi * s2 / (1 + s2)) * np.exp(-(zs - center) ** 2 / (2 * (1 + s2)))
    if not np.allclose(y.coeffs, np.eye(1, y.scheme.size)[0]):
        closed = direct
    return float(max(np.max(np.abs(direct - closed)), np.max(np.abs(spectral - closed))))


def patching_check(sigma, b, x: float, radii, dt: float, T: float, seed: int) -> dict:
    """Localized Lipschitz equations: y_0^k(z) = z clipped to |z - x| <= k.

    Runs Z^k for every radius on one driver and reports whether X^k = x - Z^k and
    X^{k+1} agree bitwise up to the exit time of X^k from the k-ball.
    """
    steps = grid_steps(dt, T)
    dB = NoiseDriver(seed, 0, 1, dt).increments(steps)
    paths = {}
    for k in radii:
        y0 = lambda z, k=k: np.clip(z, x - k, x + k)  # noqa: E731
        Z = np.zeros(steps + 1)
        for m in range(steps):
            u = y0(x - Z[m])
            Z[m + 1] = Z[m] + sigma(u) * dB[m, 0] + b(u) * dt
        paths[k] = x - Z
    agree = {}
    for k, k2 in zip(radii, radii[1:]):
        out = np.flatnonzero(np.abs(paths[k] - x) > k)
        stop = int(out[0]) if out.size else steps
        agree[k] = bool(np.array_equal(paths[k][: stop + 1], paths[k2][: stop + 1]))
    # the patched path against a direct Euler run of dX = -sigma(X) dB - b(X) dt
    direct = np.zeros(steps + 1)
    direct[0] = x
    for m in range(steps):
        direct[m + 1] = direct[m] - sigma(direct[m]) * dB[m, 0] - b(direct[m]) * dt
    top = paths[radii[-1]]
    inside = np.abs(top - x) <= radii[-1]
    last = int(np.argmin(inside)) if not inside.all() else steps
    gap = float(np.max(np.abs(top[: last + 1] - direct[: last + 1])))
    return {"agree": agree, "patched_vs_direct": gap}


def weak_null_fraction(b: float, sigma: float, y: SpectralElement, T: float, dt: float, paths: int, seed: int,
                       pair_tol: float = 1e-3, z_min: float = 25.0) -> dict:
    """Fraction of paths with |<Y_T, e_0>| <= pair_tol and |Z_T| >= z_min for a constant field."""
    from .sobolev import shifted_pairing, unit_gaussian

    field = CoefficientField.constant([[sigma]], [b])
    steps = grid_steps(dt, T)
    dB = ensemble_increments(NoiseDriver(seed, 0, 1, dt), paths, steps)
    Z = characteristic_ensemble(field, y, dt, T, dB).X[:, -1]
    pair = shifted_pairing(y, unit_gaussian(y.scheme), Z)
    ok = (np.abs(pair) <= pair_tol) & (np.linalg.norm(Z, axis=1) >= z_min)
    return {"fraction": float(ok.mean()), "max_pairing": float(np.max(np.abs(pair))),
            "min_abs_Z": float(np.min(np.linalg.norm(Z, axis=1)))}
