"""Truncated elements of the Hermite-Sobolev spaces S_p.

Coefficients are stored in the unweighted L^2 basis, c_k = <f, h_k>_0, so one
representation serves every p; all p-dependence lives in the weights.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import kernels
from .hermite import (
    TruncationScheme,
    basis_values,
    derivative_matrix,
    gauss_hermite_rule,
)

TRANSLATION_GUARD = 50.0
DEFAULT_PAD = 16


@dataclass(frozen=True, eq=False)
class SpectralElement:
    scheme: TruncationScheme
    coeffs: np.ndarray
    tail: float | None = field(default=None, compare=False)

    def __post_init__(self):
        c = np.array(self.coeffs, copy=True)
        if not np.iscomplexobj(c):
            c = c.astype(np.float64)
        c = c.reshape(-1)
        if c.shape[0] != self.scheme.size:
            raise ValueError(f"expected {self.scheme.size} coefficients, got {c.shape[0]}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    # construction helpers
    @classmethod
    def zeros(cls, scheme):
        return cls(scheme, np.zeros(scheme.size))

    @classmethod
    def basis(cls, scheme, k):
        c = np.zeros(scheme.size)
        c[scheme.position(k)] = 1.0
        return cls(scheme, c)

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.coeffs)

    def _check(self, other):
        if not isinstance(other, SpectralElement):
            return NotImplemented
        if other.scheme != self.scheme:
            raise ValueError(f"scheme mismatch: {self.scheme} vs {other.scheme}")
        return other

    def __add__(self, other):
        other = self._check(other)
        return SpectralElement(self.scheme, self.coeffs + other.coeffs)

    def __sub__(self, other):
        other = self._check(other)
        return SpectralElement(self.scheme, self.coeffs - other.coeffs)

    def __neg__(self):
        return SpectralElement(self.scheme, -self.coeffs)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return SpectralElement(self.scheme, scalar * self.coeffs)

    __rmul__ = __mul__

    def __repr__(self):
        kind = "complex" if self.is_complex else "real"
        return f"SpectralElement(d={self.scheme.d}, N={self.scheme.N}, {kind}, |c|={np.linalg.norm(self.coeffs):.6g})"

    def norm(self, p: float) -> float:
        return sobolev_norm(self, p)

    def outer_shell_mass(self) -> float:
        return float(np.sum(np.abs(self.coeffs[self.scheme.degrees == self.scheme.N]) ** 2))

    def pad(self, N: int) -> "SpectralElement":
        """Embed into a larger total-degree scheme."""
        if N < self.scheme.N:
            raise ValueError("pad target must not be smaller than the current degree bound")
        big = TruncationScheme(self.scheme.d, N)
        c = np.zeros(big.size, dtype=self.coeffs.dtype)
        c[: self.scheme.size] = self.coeffs
        return SpectralElement(big, c)

    def restrict(self, N: int) -> "SpectralElement":
        if N > self.scheme.N:
            raise ValueError("restrict target must not exceed the current degree bound")
        small = TruncationScheme(self.scheme.d, N)
        return SpectralElement(small, self.coeffs[: small.size])

    # serialization
    def to_json(self) -> str:
        if self.is_complex:
            body = ",".join(f"[{c.real:.17g},{c.imag:.17g}]" for c in self.coeffs)
            kind = "complex"
        else:
            body = ",".join(f"{c:.17g}" for c in self.coeffs)
            kind = "real"
        head = json.dumps({"d": self.scheme.d, "N": self.scheme.N, "ordering": "grlex", "field": kind})
        return head[:-1] + f', "coeffs": [{body}]}}'

    @classmethod
    def from_json(cls, text: str | dict) -> "SpectralElement":
        obj = json.loads(text) if isinstance(text, str) else text
        if obj.get("ordering", "grlex") != "grlex":
            raise ValueError(f"unsupported ordering {obj.get('ordering')!r}")
        scheme = TruncationScheme(int(obj["d"]), int(obj["N"]))
        raw = obj["coeffs"]
        if obj.get("field", "real") == "complex":
            c = np.array([complex(a, b) for a, b in raw])
        else:
            c = np.array(raw, dtype=np.float64)
        return cls(scheme, c)


# the first Hermite function as an element, used all over
def unit_gaussian(scheme: TruncationScheme) -> SpectralElement:
    return SpectralElement.basis(scheme, (0,) * scheme.d)


def sobolev_norm(u: SpectralElement, p: float) -> float:
    w = u.scheme.weights(2.0 * p)
    return float(np.sqrt(np.sum(w * np.abs(u.coeffs) ** 2)))


def sobolev_inner(u: SpectralElement, v: SpectralElement, p: float) -> float:
    if u.scheme != v.scheme:
        raise ValueError(f"scheme mismatch: {u.scheme} vs {v.scheme}")
    return float(np.sum(u.scheme.weights(2.0 * p) * u.coeffs * v.coeffs))


def dual_pairing(u: SpectralElement, v: SpectralElement):
    """<u, v> = sum_k c_k(u) c_k(v); the S_{-p} x S_p duality for every p."""
    if u.scheme != v.scheme:
        raise ValueError(f"scheme mismatch: {u.scheme} vs {v.scheme}")
    val = np.sum(u.coeffs * v.coeffs)
    return complex(val) if np.iscomplexobj(val) else float(val)


def _check_shift(u: SpectralElement, x, guard: float) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64)).reshape(-1)
    if x.shape[0] != u.scheme.d:
        raise ValueError(f"shift has dimension {x.shape[0]}, element has d={u.scheme.d}")
    if not np.all(np.isfinite(x)):
        raise ValueError("shift must be finite")
    if np.linalg.norm(x) > guard:
        raise ValueError(f"|x| = {np.linalg.norm(x):.4g} exceeds the translation guard {guard}")
    return x


def translation_rule(N: int, Q: int | None = None):
    rule = gauss_hermite_rule(N + 8 if Q is None else int(Q))
    return rule.nodes, rule.scaled_weights


def cross_gram_1d(N: int, shift: float, Q: int | None = None) -> np.ndarray:
    """Matrix T[j, k] = <tau_shift h_j, h_k>_0 for j, k <= N."""
    nodes, sw = translation_rule(N, Q)
    eye = np.eye(N + 1)
    return kernels.translate_rows(eye, np.full(N + 1, float(shift)), nodes, sw, N + 1)


def _translate_dense(u: SpectralElement, x: np.ndarray, Q) -> np.ndarray:
    s = u.scheme
    n1 = s.N + 1
    idx = tuple(s.indices.T)
    dense = np.zeros((n1,) * s.d, dtype=u.coeffs.dtype)
    dense[idx] = u.coeffs
    for axis in range(s.d):
        T = cross_gram_1d(s.N, x[axis], Q)
        dense = np.moveaxis(np.tensordot(dense, T, axes=([axis], [0])), -1, axis)
    return dense[idx]


def _translate_real(u: SpectralElement, x: np.ndarray, Q) -> np.ndarray:
    if u.scheme.d == 1:
        nodes, sw = translation_rule(u.scheme.N, Q)
        return kernels.translate_rows(u.coeffs, x, nodes, sw, u.scheme.size)[0]
    return _translate_dense(u, x, Q)


def translate(u: SpectralElement, x, method: str = "quadrature", *, Q: int | None = None,
              pad: int = DEFAULT_PAD, guard: float = TRANSLATION_GUARD) -> SpectralElement:
    """Coefficients of y -> u(y - x), projected onto the same Gamma_N.

    ``quadrature``: cross-Gram entries <h_j(. - x), h_k> by Gauss-Hermite
    quadrature centred at x/2, where the integrand is a polynomial times
    exp(-v^2); the default order N+8 is exact.
    ``exponential``: exp(-sum x_i D_i) on a scheme padded by ``pad``, then
    restricted.
    """
    x = _check_shift(u, x, guard)
    if not np.any(x):
        return SpectralElement(u.scheme, u.coeffs)
    if method == "quadrature":
        if u.is_complex:
            re = _translate_real(SpectralElement(u.scheme, u.coeffs.real), x, Q)
            im = _translate_real(SpectralElement(u.scheme, u.coeffs.imag), x, Q)
            return SpectralElement(u.scheme, re + 1j * im)
        return SpectralElement(u.scheme, _translate_real(u, x, Q))
    if method == "exponential":
        big = u.pad(u.scheme.N + pad)
        gen = np.zeros((big.scheme.size, big.scheme.size))
        for axis in range(u.scheme.d):
            gen -= x[axis] * derivative_matrix(axis, big.scheme)
        out = scipy.linalg.expm(gen) @ big.coeffs
        return SpectralElement(u.scheme, out[: u.scheme.size])
    raise ValueError(f"unknown translation method {method!r}")


def translate_batch(u: SpectralElement, shifts, *, Q: int | None = None,
                    guard: float = TRANSLATION_GUARD) -> np.ndarray:
    """Coefficient rows of tau_{z_m} u for shifts of shape (M, d); returns (M, |Gamma_N|)."""
    z = np.asarray(shifts, dtype=np.float64).reshape(-1, u.scheme.d)
    if not np.all(np.isfinite(z)):
        raise ValueError("shifts must be finite")
    if z.shape[0] and np.max(np.linalg.norm(z, axis=1)) > guard:
        raise ValueError(f"a shift exceeds the translation guard {guard}")
    if u.scheme.d == 1:
        nodes, sw = translation_rule(u.scheme.N, Q)
        out = kernels.translate_rows(u.coeffs, z[:, 0], nodes, sw, u.scheme.size)
    else:
        out = np.array([_translate_dense(u, row, Q) for row in z]).reshape(z.shape[0], u.scheme.size)
    # tau_0 is the identity exactly, as in translate()
    still = ~np.any(z, axis=1)
    if still.any():
        out[still] = u.coeffs
    return out


def shifted_pairing(y: SpectralElement, w: SpectralElement, shifts) -> np.ndarray:
    """<w, tau_{z_m} y> for shifts of shape (M, d), without forming the translates (d=1)."""
    if y.scheme != w.scheme:
        raise ValueError(f"scheme mismatch: {y.scheme} vs {w.scheme}")
    z = np.asarray(shifts, dtype=np.float64).reshape(-1, y.scheme.d)
    if y.scheme.d == 1:
        nodes, sw = translation_rule(y.scheme.N)
        return kernels.shifted_overlap(y.coeffs, w.coeffs, z[:, 0], nodes, sw)
    return translate_batch(y, z) @ w.coeffs


def delta_element(x, scheme: TruncationScheme) -> SpectralElement:
    """Truncated expansion of the point mass at x: c_k = h_k(x)."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.shape[0] != scheme.d:
        raise ValueError(f"point has dimension {x.shape[0]}, scheme has d={scheme.d}")
    return SpectralElement(scheme, basis_values(scheme, x[None, :])[0])


def evaluate(u: SpectralElement, x):
    """Pointwise value sum_k c_k h_k(x); accepts one point or an array of shape (P, d)."""
    pts = np.asarray(x, dtype=np.float64)
    single = pts.ndim == 0 or (pts.ndim == 1 and pts.shape[0] == u.scheme.d)
    vals = basis_values(u.scheme, pts.reshape(-1, u.scheme.d)) @ u.coeffs
    return vals[0] if single else vals


def fourier_transform(u: SpectralElement) -> SpectralElement:
    """Unitary Fourier transform (kernel (2 pi)^{-d/2} exp(-i xi.x)): h_k -> (-i)^|k| h_k."""
    phase = (-1j) ** (u.scheme.degrees % 4)
    return SpectralElement(u.scheme, phase * u.coeffs)


# -- untruncated norms of translates --------------------------------------

def _position_matrix(axis: int, scheme: TruncationScheme) -> np.ndarray:
    """Multiplication by x_axis on Gamma_N (outputs beyond N dropped)."""
    # x h_m = sqrt((m+1)/2) h_{m+1} + sqrt(m/2) h_{m-1}; D has the same bands
    # with the raising band negated.
    return np.abs(derivative_matrix(axis, scheme))


def _oscillator_terms(scheme: TruncationScheme):
    H = np.zeros((scheme.size, scheme.size))
    X = []
    for axis in range(scheme.d):
        D = derivative_matrix(axis, scheme)
        Xa = _position_matrix(axis, scheme)
        H += -D @ D + Xa @ Xa
        X.append(Xa)
    return H, X


def exact_shift_norm(y: SpectralElement, shifts, q: int, center: SpectralElement | None = None) -> np.ndarray:
    """||tau_z y - center||_q without truncating the translate (integer q >= 0).

    Uses ||f||_q = ||H^q f||_0 with H = -Laplacian + |x|^2 and
    H tau_z = tau_z H_z, H_z = -Laplacian + |x + z|^2; every application of
    H_z raises the degree by two, so a scheme padded by 2q is exact.
    """
    if int(q) != q or q < 0:
        raise ValueError("exact_shift_norm needs an integer q >= 0")
    q = int(q)
    z = np.asarray(shifts, dtype=np.float64).reshape(-1, y.scheme.d)
    big = TruncationScheme(y.scheme.d, y.scheme.N + 2 * q)
    H, X = _oscillator_terms(big)
    a = np.broadcast_to(y.pad(big.N).coeffs, (z.shape[0], big.size)).copy()
    zz = np.sum(z * z, axis=1)[:, None]
    for _ in range(q):
        nxt = a @ H.T + zz * a
        for axis in range(y.scheme.d):
            nxt += 2.0 * z[:, axis:axis + 1] * (a @ X[axis].T)
        a = nxt
    norm_a2 = np.sum(a * a, axis=1)
    if center is None:
        return np.sqrt(norm_a2)
    b = center.pad(big.N).coeffs
    for _ in range(q):
        b = H @ b
    if big.d == 1:
        nodes, sw = translation_rule(big.N)
        cross = kernels.shifted_overlap(a, b, z[:, 0], nodes, sw)
    else:
        cross = np.array([
            _translate_dense(SpectralElement(big, row), zrow, None) @ b for row, zrow in zip(a, z)
        ])
    return np.sqrt(np.maximum(norm_a2 + b @ b - 2.0 * cross, 0.0))


# -- small translation increments ---------------------------------------------

INCREMENT_TERMS = 24
_SERIES_LIMIT = 0.25


def translation_increment(y: SpectralElement, deltas, terms: int = INCREMENT_TERMS) -> tuple:
    """Rows of tau_delta y - y on Gamma_{N + terms}, accurate relative to |delta|.

    Small shifts use the exponential series sum_{j>=1} (-delta.D)^j y / j!,
    which is exact on the padded scheme up to the dropped series tail; larger
    shifts fall back to a padded quadrature translation.  Returns
    ``(big_scheme, rows)``.
    """
    big = TruncationScheme(y.scheme.d, y.scheme.N + terms)
    delta = np.asarray(deltas, dtype=np.float64).reshape(-1, y.scheme.d)
    yb = y.pad(big.N).coeffs
    out = np.zeros((delta.shape[0], big.size))
    small = np.linalg.norm(delta, axis=1) <= _SERIES_LIMIT
    if small.any():
        D = [derivative_matrix(i, big) for i in range(big.d)]
        ds = delta[small]
        v = np.broadcast_to(yb, (ds.shape[0], big.size)).copy()
        acc = np.zeros_like(v)
        for j in range(1, terms + 1):
            v = -sum(ds[:, i:i + 1] * (v @ D[i].T) for i in range(big.d)) / j
            acc += v
        out[small] = acc
    if (~small).any():
        out[~small] = translate_batch(SpectralElement(big, yb), delta[~small]) - yb[None, :]
    return big, out


def translated_rows(scheme: TruncationScheme, rows, shifts) -> np.ndarray:
    """Translate each coefficient row by its own shift (same scheme in and out)."""
    rows = np.asarray(rows, dtype=np.float64).reshape(-1, scheme.size)
    z = np.asarray(shifts, dtype=np.float64).reshape(-1, scheme.d)
    if scheme.d == 1:
        nodes, sw = translation_rule(scheme.N)
        return kernels.translate_rows(rows, z[:, 0], nodes, sw, scheme.size)
    rows = np.broadcast_to(rows, (z.shape[0], scheme.size))
    return np.array([_translate_dense(SpectralElement(scheme, r), s, None) for r, s in zip(rows, z)])
