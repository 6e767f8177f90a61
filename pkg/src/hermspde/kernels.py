"""Kernel dispatch: compiled extension when available, numpy fallback otherwise.

Set ``HERMSPDE_PURE=1`` to force the fallback.  ``HERMSPDE_THREADS`` caps the
number of worker threads used to split row batches (0 or unset = auto).
Rows are independent, so results do not depend on the thread count.
"""
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if os.environ.get("HERMSPDE_PURE", "0") != "1":
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels

_MIN_ROWS_PER_THREAD = 256


def worker_count():
    raw = os.environ.get("HERMSPDE_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return max(1, n)


def use_backend(name):
    """Switch backend at runtime ("cython" or "python"); returns the previous one."""
    global _impl, BACKEND
    previous = BACKEND
    if name == "python":
        _impl, BACKEND = _pykernels, "python"
    elif name == "cython":
        from . import _ckernels
        _impl, BACKEND = _ckernels, "cython"
    else:
        raise ValueError(f"unknown backend {name!r}")
    return previous


def _split_rows(fn, M, *args):
    workers = min(worker_count(), max(1, M // _MIN_ROWS_PER_THREAD))
    if BACKEND != "cython" or workers == 1:
        return fn(0, M, *args)
    bounds = np.linspace(0, M, workers + 1).astype(int)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda lh: fn(lh[0], lh[1], *args), zip(bounds[:-1], bounds[1:])))
    return np.concatenate(parts, axis=0)


def hermite_table(K, x):
    """Orthonormal Hermite functions h_0..h_{K-1} at points x; shape x.shape + (K,)."""
    x = np.asarray(x, dtype=np.float64)
    if BACKEND == "cython":
        flat = np.ascontiguousarray(x.reshape(-1))
        return _impl.hermite_table(int(K), flat).reshape(x.shape + (int(K),))
    return _impl.hermite_table(int(K), x)


def _prep(A, shifts, nodes, sw):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 1:
        A = A[None, :]
    shifts = np.ascontiguousarray(np.asarray(shifts, dtype=np.float64).reshape(-1))
    if A.shape[0] == 1 and shifts.shape[0] > 1:
        A = np.broadcast_to(A, (shifts.shape[0], A.shape[1]))
    return A, shifts, np.ascontiguousarray(nodes, dtype=np.float64), np.ascontiguousarray(sw, dtype=np.float64)


def translate_rows(A, shifts, nodes, sw, kout):
    """Row-wise 1-D translation: coefficients of a_m(. - z_m) on h_0..h_{kout-1}."""
    A, shifts, nodes, sw = _prep(A, shifts, nodes, sw)

    def run(lo, hi):
        return _impl.translate_rows(A[lo:hi], shifts[lo:hi], nodes, sw, int(kout))

    return _split_rows(run, shifts.shape[0])


def shifted_overlap(A, B, shifts, nodes, sw):
    """Row-wise 1-D overlap: integral of a_m(u - z_m) b(u) du."""
    A, shifts, nodes, sw = _prep(A, shifts, nodes, sw)
    B = np.ascontiguousarray(B, dtype=np.float64)

    def run(lo, hi):
        return _impl.shifted_overlap(A[lo:hi], B, shifts[lo:hi], nodes, sw)

    return _split_rows(run, shifts.shape[0])
