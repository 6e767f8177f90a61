"""Coefficient functionals, the quasi-linear operators A and L, and their forms.

A coefficient field holds scalar functionals sigma_ij, b_i on S_p.  Once the
scalars are evaluated at a state the operators are constant-coefficient
differential operators built from the truncated derivative matrices.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .hermite import TruncationScheme, derivative_matrix, project_function, tensor_rule, basis_values
from .sobolev import (
    SpectralElement,
    delta_element,
    evaluate,
    shifted_pairing,
    sobolev_inner,
    sobolev_norm,
    translate_batch,
    translated_rows,
    translation_increment,
)

# -- scalar maps -----------------------------------------------------------

_BASE = {
    "identity": (lambda s: s, 1.0, False),
    "tanh": (np.tanh, 1.0, True),
    "sin": (np.sin, 1.0, True),
    "cos": (np.cos, 1.0, True),
}


@dataclass(frozen=True)
class ScalarMap:
    """g(s) = offset + scale * base(inner * s) for a base in identity/tanh/sin/cos."""

    base: str = "identity"
    scale: float = 1.0
    offset: float = 0.0
    inner: float = 1.0

    def __post_init__(self):
        if self.base not in _BASE:
            raise ValueError(f"unknown scalar map {self.base!r}; choose from {sorted(_BASE)}")

    def __call__(self, s):
        fn = _BASE[self.base][0]
        return self.offset + self.scale * fn(self.inner * np.asarray(s, dtype=np.float64))

    def difference(self, s, ds):
        """g(s + ds) - g(s) without cancellation when ds is small."""
        x = self.inner * np.asarray(s, dtype=np.float64)
        dx = self.inner * np.asarray(ds, dtype=np.float64)
        if self.base == "identity":
            out = dx
        elif self.base == "tanh":
            out = np.sinh(dx) / (np.cosh(x) * np.cosh(x + dx))
        elif self.base == "sin":
            out = 2.0 * np.cos(x + 0.5 * dx) * np.sin(0.5 * dx)
        else:
            out = -2.0 * np.sin(x + 0.5 * dx) * np.sin(0.5 * dx)
        return self.scale * out

    @property
    def lipschitz(self) -> float:
        return abs(self.scale * self.inner) * _BASE[self.base][1]

    @property
    def bound(self) -> float:
        if self.scale == 0.0:
            return abs(self.offset)
        return abs(self.offset) + abs(self.scale) if _BASE[self.base][2] else math.inf

    def to_dict(self):
        return {"base": self.base, "scale": self.scale, "offset": self.offset, "inner": self.inner}

    @classmethod
    def from_dict(cls, obj):
        if obj is None:
            return cls()
        if isinstance(obj, str):
            return cls(obj)
        return cls(**obj)


IDENTITY = ScalarMap()


# -- pointwise weight functions for dual pairings ---------------------------

@dataclass(frozen=True)
class PointwiseFunction:
    """A one-dimensional weight w(u) given by a small closed-form family.

    kinds: ``polynomial`` (coeffs a_0, a_1, ...), ``trig``
    (offset + amp * sin(freq * u + phase)), ``gaussian`` (amp * exp(-(u - center)^2 / (2 width^2))).
    """

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in ("polynomial", "trig", "gaussian"):
            raise ValueError(f"unknown pointwise function kind {self.kind!r}")

    @classmethod
    def polynomial(cls, *coeffs):
        return cls("polynomial", tuple(float(c) for c in coeffs))

    @classmethod
    def trig(cls, offset=0.0, amp=1.0, freq=1.0, phase=0.0):
        return cls("trig", (float(offset), float(amp), float(freq), float(phase)))

    @classmethod
    def gaussian(cls, amp=1.0, center=0.0, width=1.0):
        return cls("gaussian", (float(amp), float(center), float(width)))

    def __call__(self, u):
        u = np.asarray(u, dtype=np.float64)
        if self.kind == "polynomial":
            return np.polynomial.polynomial.polyval(u, np.array(self.params))
        if self.kind == "trig":
            off, amp, freq, phase = self.params
            return off + amp * np.sin(freq * u + phase)
        amp, center, width = self.params
        return amp * np.exp(-0.5 * ((u - center) / width) ** 2)

    def to_dict(self):
        return {"kind": self.kind, "params": list(self.params)}

    @classmethod
    def from_dict(cls, obj):
        return cls(obj["kind"], tuple(float(v) for v in obj["params"]))


def _function_rule(scheme: TruncationScheme):
    # phi(u) ~ poly * exp(-u^2/2): nodes sqrt(2)*x_i turn that into exp(-x^2)
    return tensor_rule(scheme.N + 40, 1, math.sqrt(2.0))


# -- functionals -------------------------------------------------------------

class Functional:
    """Scalar functional on S_p; subclasses implement evaluation and shifts."""

    def __call__(self, phi: SpectralElement) -> float:
        raise NotImplementedError

    def shifted(self, y: SpectralElement, shifts) -> np.ndarray:
        """Values at tau_{z_m} y for shifts of shape (M, d)."""
        z = np.asarray(shifts, dtype=np.float64).reshape(-1, y.scheme.d)
        rows = translate_batch(y, z)
        return np.array([self(SpectralElement(y.scheme, r)) for r in rows])

    def shifted_difference(self, y: SpectralElement, base, deltas, increment=None) -> np.ndarray:
        """f(tau_{b_m + delta_m} y) - f(tau_{b_m} y); subclasses avoid cancellation.

        ``increment`` is an optional shared cache holding
        ``translation_increment(y, deltas)`` under the key "increment".
        """
        b = np.asarray(base, dtype=np.float64).reshape(-1, y.scheme.d)
        return self.shifted(y, b + np.asarray(deltas).reshape(b.shape)) - self.shifted(y, b)

    def lipschitz(self, q: float, scheme: TruncationScheme) -> float:
        raise NotImplementedError

    @property
    def bound(self) -> float:
        return math.inf

    @property
    def is_constant(self) -> bool:
        return False

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Constant(Functional):
    c: float

    def __call__(self, phi):
        return float(self.c)

    def shifted(self, y, shifts):
        z = np.asarray(shifts, dtype=np.float64).reshape(-1, y.scheme.d)
        return np.full(z.shape[0], float(self.c))

    def shifted_difference(self, y, base, deltas, increment=None):
        return np.zeros(np.asarray(base).reshape(-1, y.scheme.d).shape[0])

    def lipschitz(self, q, scheme):
        return 0.0

    @property
    def bound(self):
        return abs(float(self.c))

    @property
    def is_constant(self):
        return True

    def to_dict(self):
        return {"kind": "constant", "c": float(self.c)}


@dataclass(frozen=True, eq=False)
class DualPairing(Functional):
    """phi -> g(<w, phi>) with w a SpectralElement or a pointwise weight (d=1)."""

    w: object
    g: ScalarMap = IDENTITY

    def _pair(self, phi):
        if isinstance(self.w, SpectralElement):
            if self.w.scheme != phi.scheme:
                raise ValueError(f"weight scheme {self.w.scheme} does not match state scheme {phi.scheme}")
            return float(self.w.coeffs @ phi.coeffs)
        pts, wts = _function_rule(phi.scheme)
        vals = basis_values(phi.scheme, pts) @ phi.coeffs
        return float(np.sum(wts * self.w(pts[:, 0]) * vals))

    def __call__(self, phi):
        return float(self.g(self._pair(phi)))

    def shifted(self, y, shifts):
        z = np.asarray(shifts, dtype=np.float64).reshape(-1, y.scheme.d)
        if isinstance(self.w, SpectralElement):
            return self.g(shifted_pairing(y, self.w, z))
        if y.scheme.d != 1:
            raise ValueError("pointwise weights are supported for d=1 only")
        # <w, tau_z y> = int w(v + z) y(v) dv, untruncated
        pts, wts = _function_rule(y.scheme)
        yw = wts * (basis_values(y.scheme, pts) @ y.coeffs)
        return self.g(self.w(pts[None, :, 0] + z) @ yw)

    def shifted_difference(self, y, base, deltas, increment=None):
        if not isinstance(self.w, SpectralElement):
            return super().shifted_difference(y, base, deltas)
        return _pairing_difference(y, self.w, self.g, base, deltas, increment)

    def weight_element(self, scheme):
        if isinstance(self.w, SpectralElement):
            return self.w
        return project_function(self.w, scheme, Q=scheme.N + 40, scale=math.sqrt(2.0))

    def lipschitz(self, q, scheme):
        return self.g.lipschitz * sobolev_norm(self.weight_element(scheme), -q)

    @property
    def bound(self):
        return self.g.bound

    def to_dict(self):
        w = (json.loads(self.w.to_json()) if isinstance(self.w, SpectralElement)
             else {"function": self.w.to_dict()})
        return {"kind": "dual_pairing", "w": w, "g": self.g.to_dict()}


@dataclass(frozen=True, eq=False)
class PointEval(Functional):
    """phi -> g(phi(x0)), with phi(x0) read from the truncated expansion."""

    x0: tuple
    g: ScalarMap = IDENTITY

    def __call__(self, phi):
        return float(self.g(evaluate(phi, np.asarray(self.x0, dtype=np.float64))))

    def shifted(self, y, shifts):
        return self.g(shifted_pairing(y, delta_element(self.x0, y.scheme), shifts))

    def shifted_difference(self, y, base, deltas, increment=None):
        return _pairing_difference(y, delta_element(self.x0, y.scheme), self.g, base, deltas, increment)

    def lipschitz(self, q, scheme):
        return self.g.lipschitz * sobolev_norm(delta_element(self.x0, scheme), -q)

    @property
    def bound(self):
        return self.g.bound

    def to_dict(self):
        return {"kind": "point_eval", "x0": list(map(float, self.x0)), "g": self.g.to_dict()}


@dataclass(frozen=True, eq=False)
class NormFunctional(Functional):
    """phi -> g(||phi||_q)."""

    q: float = 0.0
    g: ScalarMap = IDENTITY

    def __call__(self, phi):
        return float(self.g(sobolev_norm(phi, self.q)))

    def shifted(self, y, shifts):
        rows = translate_batch(y, shifts)
        w = y.scheme.weights(2.0 * self.q)
        return self.g(np.sqrt(rows * rows @ w))

    def lipschitz(self, q, scheme):
        # reverse triangle inequality in the functional's own norm; converting
        # to ||.||_q costs a factor max weight ratio when self.q > q
        ratio = 1.0 if self.q <= q else float(np.max(scheme.weights(self.q - q)))
        return self.g.lipschitz * ratio

    @property
    def bound(self):
        return self.g.bound

    def to_dict(self):
        return {"kind": "norm_functional", "q": float(self.q), "g": self.g.to_dict()}


def _pairing_difference(y, w, g, base, deltas, context=None):
    # <w, tau_{b+delta} y> - <w, tau_b y> = <tau_{-b} w, tau_delta y - y>; the
    # translated weight also gives the base pairing <tau_{-b} w, y>.
    b = np.asarray(base, dtype=np.float64).reshape(-1, y.scheme.d)
    if context is None:
        context = {"increment": translation_increment(y, deltas)}
    big, inc = context["increment"]
    key = ("weight", w.scheme, w.coeffs.tobytes())
    G = context.get(key)
    if G is None:
        wb = np.broadcast_to(w.pad(big.N).coeffs, (b.shape[0], big.size))
        G = translated_rows(big, wb, -b)
        context[key] = G
    s0 = G[:, : y.scheme.size] @ y.coeffs
    ds = np.sum(G * inc, axis=1)
    return g.difference(s0, ds)


def functional_from_dict(obj, scheme: TruncationScheme | None = None) -> Functional:
    kind = obj.get("kind")
    g = ScalarMap.from_dict(obj.get("g"))
    if kind == "constant":
        return Constant(float(obj["c"]))
    if kind == "dual_pairing":
        w = obj["w"]
        if "function" in w:
            return DualPairing(PointwiseFunction.from_dict(w["function"]), g)
        if "basis" in w:
            if scheme is None:
                raise ValueError("a basis weight needs the state scheme")
            return DualPairing(SpectralElement.basis(scheme, w["basis"]), g)
        el = SpectralElement.from_json(w)
        if scheme is not None and el.scheme != scheme:
            el = el.pad(scheme.N) if el.scheme.N < scheme.N else el.restrict(scheme.N)
        return DualPairing(el, g)
    if kind == "point_eval":
        return PointEval(tuple(float(v) for v in np.atleast_1d(obj["x0"])), g)
    if kind == "norm_functional":
        return NormFunctional(float(obj.get("q", 0.0)), g)
    raise ValueError(f"unknown functional kind {kind!r}")


# -- coefficient field -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CoefficientField:
    d: int
    n: int
    sigma: tuple  # d rows of n functionals
    b: tuple      # d functionals
    K: float | None = None
    K1: float | None = None

    def __post_init__(self):
        sig = tuple(tuple(row) for row in self.sigma)
        if len(sig) != self.d or any(len(row) != self.n for row in sig):
            raise ValueError(f"sigma must be a {self.d} x {self.n} array of functionals")
        if len(self.b) != self.d:
            raise ValueError(f"b must have {self.d} entries")
        object.__setattr__(self, "sigma", sig)
        object.__setattr__(self, "b", tuple(self.b))
        for name in ("K", "K1"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ValueError(f"declared {name} must be positive")

    @classmethod
    def constant(cls, sigma, b):
        s = np.atleast_2d(np.asarray(sigma, dtype=np.float64))
        bv = np.atleast_1d(np.asarray(b, dtype=np.float64))
        return cls(s.shape[0], s.shape[1],
                   [[Constant(v) for v in row] for row in s], [Constant(v) for v in bv])

    @classmethod
    def zero(cls, d=1, n=1):
        return cls.constant(np.zeros((d, n)), np.zeros(d))

    @property
    def is_constant(self) -> bool:
        return all(f.is_constant for row in self.sigma for f in row) and all(f.is_constant for f in self.b)

    def _entries(self):
        for row in self.sigma:
            yield from row
        yield from self.b

    def evaluate(self, phi: SpectralElement):
        sig = np.array([[f(phi) for f in row] for row in self.sigma]).reshape(self.d, self.n)
        b = np.array([f(phi) for f in self.b])
        if not (np.all(np.isfinite(sig)) and np.all(np.isfinite(b))):
            raise FloatingPointError("coefficient functional returned a non-finite value")
        return sig, b

    def evaluate_shifted(self, y: SpectralElement, shifts):
        """sigma, b at tau_{z_m} y for shifts (M, d); shapes (M, d, n) and (M, d)."""
        z = np.asarray(shifts, dtype=np.float64).reshape(-1, self.d)
        M = z.shape[0]
        sig = np.empty((M, self.d, self.n))
        b = np.empty((M, self.d))
        for i, row in enumerate(self.sigma):
            for j, f in enumerate(row):
                sig[:, i, j] = f.shifted(y, z)
        for i, f in enumerate(self.b):
            b[:, i] = f.shifted(y, z)
        return sig, b

    def evaluate_shifted_difference(self, y: SpectralElement, base, deltas):
        """Coefficient differences between tau_{b + delta} y and tau_b y, computed without cancellation."""
        z = np.asarray(base, dtype=np.float64).reshape(-1, self.d)
        dz = np.asarray(deltas, dtype=np.float64).reshape(z.shape)
        M = z.shape[0]
        inc = {"increment": translation_increment(y, dz)}
        sig = np.empty((M, self.d, self.n))
        b = np.empty((M, self.d))
        for i, row in enumerate(self.sigma):
            for j, f in enumerate(row):
                sig[:, i, j] = f.shifted_difference(y, z, dz, inc)
        for i, f in enumerate(self.b):
            b[:, i] = f.shifted_difference(y, z, dz, inc)
        return sig, b

    def lipschitz(self, q: float, scheme: TruncationScheme) -> float:
        if self.K is not None:
            return self.K
        return max(f.lipschitz(q, scheme) for f in self._entries())

    def bound(self) -> float:
        if self.K1 is not None:
            return self.K1
        return max(f.bound for f in self._entries())

    def to_dict(self):
        out = {"d": self.d, "n": self.n,
               "sigma": [[f.to_dict() for f in row] for row in self.sigma],
               "b": [f.to_dict() for f in self.b]}
        if self.K is not None:
            out["K"] = self.K
        if self.K1 is not None:
            out["K1"] = self.K1
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    @classmethod
    def from_dict(cls, obj, scheme: TruncationScheme | None = None):
        sigma = [[functional_from_dict(f, scheme) for f in row] for row in obj["sigma"]]
        b = [functional_from_dict(f, scheme) for f in obj["b"]]
        d = len(b)
        n = len(sigma[0]) if sigma else 0
        return cls(int(obj.get("d", d)), int(obj.get("n", n)), sigma, b, obj.get("K"), obj.get("K1"))

    @classmethod
    def from_json(cls, text, scheme=None):
        return cls.from_dict(json.loads(text), scheme)


def eval_coefficients(fld: CoefficientField, phi: SpectralElement):
    """(sigma, b, a) with a = sigma sigma^t."""
    sig, b = fld.evaluate(phi)
    return sig, b, sig @ sig.T


# -- operator bundle ------------------------------------------------------------

class OperatorBundle:
    """Derivative matrices D_i and D_ij = D_i D_j on one scheme (built once)."""

    def __init__(self, scheme: TruncationScheme):
        self.scheme = scheme
        self.D = tuple(derivative_matrix(i, scheme) for i in range(scheme.d))
        d2 = {}
        for i in range(scheme.d):
            for j in range(scheme.d):
                m = self.D[i] @ self.D[j]
                m.setflags(write=False)
                d2[i, j] = m
        self.D2 = d2

    def weights(self, p: float) -> np.ndarray:
        return self.scheme.weights(p)


@lru_cache(maxsize=32)
def operator_bundle(scheme: TruncationScheme) -> OperatorBundle:
    return OperatorBundle(scheme)


def A0(sigma, phi: SpectralElement) -> list:
    """A_0(sigma, phi) e_i = -sum_k sigma_ki D_k phi, for i = 1..n."""
    sigma = np.atleast_2d(np.asarray(sigma, dtype=np.float64))
    ops = operator_bundle(phi.scheme)
    derivs = [Dk @ phi.coeffs for Dk in ops.D]
    return [SpectralElement(phi.scheme, -sum(sigma[k, i] * derivs[k] for k in range(len(derivs))))
            for i in range(sigma.shape[1])]


def L1(b, phi: SpectralElement) -> SpectralElement:
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    ops = operator_bundle(phi.scheme)
    return SpectralElement(phi.scheme, -sum(b[i] * (ops.D[i] @ phi.coeffs) for i in range(b.shape[0])))


def L2(a, phi: SpectralElement) -> SpectralElement:
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    ops = operator_bundle(phi.scheme)
    d = a.shape[0]
    acc = sum(a[i, j] * (ops.D2[i, j] @ phi.coeffs) for i in range(d) for j in range(d))
    return SpectralElement(phi.scheme, 0.5 * acc)


def apply_frozen(fld: CoefficientField, phi_freeze: SpectralElement, psi: SpectralElement):
    """(L(phi_freeze, psi), [A_i(phi_freeze, psi)]): coefficients at phi_freeze, derivatives of psi."""
    if phi_freeze.scheme != psi.scheme:
        raise ValueError("frozen state and argument must share a scheme")
    sig, b, a = eval_coefficients(fld, phi_freeze)
    return L1(b, psi) + L2(a, psi), A0(sig, psi)


def apply_A(fld: CoefficientField, phi: SpectralElement) -> list:
    return apply_frozen(fld, phi, phi)[1]


def apply_L(fld: CoefficientField, phi: SpectralElement) -> SpectralElement:
    return apply_frozen(fld, phi, phi)[0]


def hs_norm_sq(elements, q: float) -> float:
    return float(sum(sobolev_norm(e, q) ** 2 for e in elements))


# -- monotonicity forms ------------------------------------------------------

@dataclass(frozen=True)
class FormValue:
    value: float
    ratio: float
    comparator: float | None = None


def monotonicity_form(fld: CoefficientField, phi: SpectralElement, psi: SpectralElement, q: float) -> FormValue:
    """2<phi - psi, L(phi) - L(psi)>_q + sum_i ||A_i(phi) - A_i(psi)||_q^2 and its ratio to ||phi - psi||_q^2."""
    Lp, Ap = apply_frozen(fld, phi, phi)
    Ls, As = apply_frozen(fld, psi, psi)
    diff = phi - psi
    val = 2.0 * sobolev_inner(diff, Lp - Ls, q) + hs_norm_sq([x - y for x, y in zip(Ap, As)], q)
    den = sobolev_norm(diff, q) ** 2
    ratio = val / den if den > 0 else (0.0 if val == 0 else math.inf)
    return FormValue(float(val), float(ratio))


def monotonicity_terms(fld: CoefficientField, phi: SpectralElement, psi: SpectralElement, q: float) -> list:
    """The seven-term expansion of the monotonicity form via A_0, L_1, L_2."""
    sp, bp, ap = eval_coefficients(fld, phi)
    ss, bs, as_ = eval_coefficients(fld, psi)
    diff = phi - psi
    first = A0(sp, diff)
    second = A0(sp - ss, psi)
    return [
        2.0 * sobolev_inner(diff, L1(bp, diff), q),
        2.0 * sobolev_inner(diff, L1(bp - bs, psi), q),
        2.0 * sobolev_inner(diff, L2(ap, diff), q),
        2.0 * sobolev_inner(diff, L2(ap - as_, psi), q),
        hs_norm_sq(first, q),
        hs_norm_sq(second, q),
        2.0 * sum(sobolev_inner(x, y, q) for x, y in zip(first, second)),
    ]


def monotonicity_form_variant(fld: CoefficientField, phi1, phi2, phi3, q: float, C1: float | None = None) -> FormValue:
    """2<phi2 - phi1, L(phi3, phi2) - L(phi2, phi1)>_q + sum_i ||A_i(phi3, phi2) - A_i(phi2, phi1)||_q^2."""
    L32, A32 = apply_frozen(fld, phi3, phi2)
    L21, A21 = apply_frozen(fld, phi2, phi1)
    diff = phi2 - phi1
    val = 2.0 * sobolev_inner(diff, L32 - L21, q) + hs_norm_sq([x - y for x, y in zip(A32, A21)], q)
    den = sobolev_norm(diff, q) ** 2 + sobolev_norm(phi2 - phi3, q) ** 2
    ratio = val / den if den > 0 else (0.0 if val == 0 else math.inf)
    comp = None if C1 is None else C1 * den
    return FormValue(float(val), float(ratio), comp)


def random_ball_element(scheme: TruncationScheme, p: float, lam: float, rng: np.random.Generator,
                        decay: float = 1.0, reference_N: int = 64) -> SpectralElement:
    """Random element with ||.||_p <= lam; spectral profile decays like (2|k|+d)^{-(p+decay)}.

    The raw draw lives on Gamma_{max(N, reference_N)} and is then restricted,
    so a fixed seed yields nearly the same element for every N.
    """
    ref = TruncationScheme(scheme.d, max(scheme.N, reference_N))
    c = rng.standard_normal(ref.size)[: scheme.size] * scheme.weights(-(p + decay))
    c *= lam * rng.uniform() ** (1.0 / 3.0) / math.sqrt(np.sum(scheme.weights(2 * p) * c * c))
    return SpectralElement(scheme, c)


def empirical_constants(fld: CoefficientField, scheme: TruncationScheme, p: float, q: float, lam: float,
                        samples: int, seed: int) -> dict:
    """Sampled sup of the form ratios over pairs and triples in B_p(0, lam)."""
    rng = np.random.default_rng(seed)
    C = C1 = -math.inf
    finite = True
    for _ in range(samples):
        phi, psi, chi = (random_ball_element(scheme, p, lam, rng) for _ in range(3))
        v = monotonicity_form(fld, phi, psi, q)
        w = monotonicity_form_variant(fld, phi, psi, chi, q)
        finite &= bool(np.isfinite(v.value) and np.isfinite(w.value))
        C = max(C, v.ratio)
        C1 = max(C1, w.ratio)
    return {"C": C, "C1": C1, "finite": finite}


# -- adjoint defect ---------------------------------------------------------

def _interior_q_matrix(M: np.ndarray, scheme: TruncationScheme, q: float) -> np.ndarray:
    keep = scheme.interior(2)
    s = np.sqrt(scheme.weights(2.0 * q))[keep]
    return s[:, None] * M[np.ix_(keep, keep)] / s[None, :]


def adjoint_defect_norm(axis: int, q: float, scheme: TruncationScheme) -> float:
    """||D*_j + D_j|| in the q-inner product on the block |k| <= N - 2."""
    D = derivative_matrix(axis, scheme)
    w = scheme.weights(2.0 * q)
    T = (D.T * w[None, :]) / w[:, None] + D
    return float(np.linalg.norm(_interior_q_matrix(T, scheme, q), 2))


def derivative_norm(axis: int, q: float, scheme: TruncationScheme) -> float:
    """||D_j|| as an operator on (Gamma_{N-2}, <.,.>_q)."""
    return float(np.linalg.norm(_interior_q_matrix(derivative_matrix(axis, scheme), scheme, q), 2))
