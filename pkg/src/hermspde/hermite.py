"""Hermite functions, Gauss-Hermite quadrature, projection and derivative matrices."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal

from . import kernels

PI_M14 = math.pi ** -0.25


@dataclass(frozen=True)
class TruncationScheme:
    """Total-degree index set {k in Z^d_+ : |k| <= N} in graded lexicographic order.

    Within one degree, tuples are listed in descending lexicographic order, so
    for d=2 degree 1 reads (1, 0), (0, 1).
    """

    d: int
    N: int

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.d}")
        if int(self.N) != self.N or self.N < 0:
            raise ValueError(f"degree bound must be a nonnegative integer, got {self.N}")

    @cached_property
    def indices(self) -> np.ndarray:
        rows = []
        for deg in range(self.N + 1):
            level = [k for k in itertools.product(range(deg, -1, -1), repeat=self.d) if sum(k) == deg]
            level.sort(reverse=True)
            rows.extend(level)
        out = np.array(rows, dtype=np.int64).reshape(-1, self.d)
        out.setflags(write=False)
        return out

    @cached_property
    def degrees(self) -> np.ndarray:
        out = self.indices.sum(axis=1)
        out.setflags(write=False)
        return out

    @cached_property
    def _position(self) -> dict:
        return {tuple(int(v) for v in k): i for i, k in enumerate(self.indices)}

    @property
    def size(self) -> int:
        return math.comb(self.N + self.d, self.d)

    def position(self, k) -> int:
        k = (k,) if np.isscalar(k) else tuple(int(v) for v in k)
        try:
            return self._position[k]
        except KeyError:
            raise KeyError(f"multi-index {k} not in Gamma_{self.N} for d={self.d}") from None

    def weights(self, p: float) -> np.ndarray:
        """(2|k| + d)^p for every index."""
        return (2.0 * self.degrees + self.d) ** float(p)

    def interior(self, shells: int = 2) -> np.ndarray:
        """Boolean mask of indices with |k| <= N - shells."""
        return self.degrees <= self.N - shells


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Hermite rule for the weight exp(-x^2).

    ``scaled_weights`` are w_i exp(x_i^2), computed directly (Christoffel form)
    so that integrals of functions without the Gaussian factor stay accurate.
    """

    nodes: np.ndarray
    weights: np.ndarray
    scaled_weights: np.ndarray

    @property
    def order(self) -> int:
        return self.nodes.shape[0]


@lru_cache(maxsize=256)
def gauss_hermite_rule(Q: int) -> QuadratureRule:
    if int(Q) != Q or Q < 1:
        raise ValueError(f"quadrature order must be >= 1, got {Q}")
    Q = int(Q)
    if Q == 1:
        x = np.zeros(1)
    else:
        off = np.sqrt(np.arange(1, Q) / 2.0)
        x = eigh_tridiagonal(np.zeros(Q), off, eigvals_only=True)
        # Newton polish on h_Q(x) = 0 using h_Q' = sqrt(2Q) h_{Q-1} at a root
        for _ in range(2):
            h = kernels.hermite_table(Q + 1, x)
            x = x - h[:, Q] / (np.sqrt(2.0 * Q) * h[:, Q - 1])
        x = 0.5 * (x - x[::-1])
    h = kernels.hermite_table(Q, x)
    scaled = 1.0 / np.sum(h * h, axis=1)
    weights = scaled * np.exp(-x * x)
    for arr in (x, weights, scaled):
        arr.setflags(write=False)
    return QuadratureRule(x, weights, scaled)


def tensor_rule(Q: int, d: int, scale: float = 1.0):
    """Tensorized nodes (Q^d, d) and weights for integrals of plain functions.

    With ``scale`` = s the rule integrates f over R^d using nodes s*x_i, which
    suits integrands decaying like exp(-|x|^2 / s^2).
    """
    rule = gauss_hermite_rule(Q)
    grids = np.meshgrid(*([rule.nodes * scale] * d), indexing="ij")
    pts = np.stack([g.reshape(-1) for g in grids], axis=1)
    wgrids = np.meshgrid(*([rule.scaled_weights * scale] * d), indexing="ij")
    w = np.prod(np.stack([g.reshape(-1) for g in wgrids], axis=1), axis=1)
    return pts, w


def hermite_eval(k, x) -> float:
    """h_k(x) = prod_i h_{k_i}(x_i) for a multi-index k and a point x."""
    k = np.atleast_1d(np.asarray(k, dtype=np.int64))
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if k.shape != x.shape:
        raise ValueError("multi-index and point must have the same dimension")
    if np.any(k < 0):
        raise ValueError("multi-index entries must be nonnegative")
    val = 1.0
    for ki, xi in zip(k, x):
        val *= kernels.hermite_table(int(ki) + 1, np.array([xi]))[0, ki]
    return float(val)


def basis_values(scheme: TruncationScheme, points) -> np.ndarray:
    """Matrix of h_k(x) with shape (P, |Gamma_N|) for points of shape (P, d)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, scheme.d)
    out = np.ones((pts.shape[0], scheme.size))
    idx = scheme.indices
    for axis in range(scheme.d):
        table = kernels.hermite_table(scheme.N + 1, pts[:, axis])
        out *= table[:, idx[:, axis]]
    return out


def project_coefficients(f, scheme: TruncationScheme, Q: int | None = None, scale: float = 1.0):
    """Coefficients <f, h_k>_0 by quadrature; f is called as f(x_1, ..., x_d).

    Returns ``(coeffs, tail)`` where tail is the squared mass on |k| = N.
    """
    Q = scheme.N + 8 if Q is None else int(Q)
    if scale == 1.0 and Q < scheme.N + 2:
        raise ValueError(f"quadrature order {Q} too small for N={scheme.N} (need >= N+2)")
    pts, w = tensor_rule(Q, scheme.d, scale)
    vals = np.asarray(f(*[pts[:, i] for i in range(scheme.d)]), dtype=np.float64)
    vals = np.broadcast_to(vals, (pts.shape[0],))
    bad = ~np.isfinite(vals)
    if bad.any():
        where = pts[np.argmax(bad)]
        raise ValueError(f"non-finite sample at quadrature node {where.tolist()}")
    coeffs = basis_values(scheme, pts).T @ (w * vals)
    tail = float(np.sum(coeffs[scheme.degrees == scheme.N] ** 2))
    return coeffs, tail


def project_function(f, scheme: TruncationScheme, Q: int | None = None, scale: float = 1.0):
    """Project a pointwise function onto span{h_k : k in Gamma_N} as a SpectralElement.

    The tail diagnostic (squared mass on the outer shell) is attached as
    ``element.tail``.
    """
    from .sobolev import SpectralElement

    coeffs, tail = project_coefficients(f, scheme, Q, scale)
    return SpectralElement(scheme, coeffs, tail=tail)


@lru_cache(maxsize=64)
def _derivative_matrix(axis: int, scheme: TruncationScheme) -> np.ndarray:
    idx = scheme.indices
    D = np.zeros((scheme.size, scheme.size))
    for col, k in enumerate(idx):
        m = int(k[axis])
        if m > 0:
            lower = k.copy()
            lower[axis] -= 1
            D[scheme.position(lower), col] += math.sqrt(m / 2.0)
        if scheme.degrees[col] < scheme.N:
            upper = k.copy()
            upper[axis] += 1
            D[scheme.position(upper), col] -= math.sqrt((m + 1) / 2.0)
    D.setflags(write=False)
    return D


def derivative_matrix(axis: int, scheme: TruncationScheme) -> np.ndarray:
    """Truncated matrix of d/dx_axis (0-based axis) acting on Gamma_N.

    Outputs that would land on |k| = N+1 are dropped; see ``derivative_tail``.
    """
    if not 0 <= axis < scheme.d:
        raise ValueError(f"axis {axis} out of range for d={scheme.d}")
    return _derivative_matrix(int(axis), scheme)


def derivative_tail(axis: int, scheme: TruncationScheme, coeffs) -> float:
    """Squared L2 mass that d/dx_axis sends outside Gamma_N."""
    if not 0 <= axis < scheme.d:
        raise ValueError(f"axis {axis} out of range for d={scheme.d}")
    c = np.asarray(coeffs)
    edge = scheme.degrees == scheme.N
    m = scheme.indices[edge, axis]
    return float(np.sum((m + 1) / 2.0 * np.abs(c[edge]) ** 2))
