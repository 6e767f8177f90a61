"""Pure-numpy versions of the compiled kernels in ``_ckernels.pyx``.

Same signatures and the same arithmetic up to summation order; used when the
extension is not built or when ``HERMSPDE_PURE=1``.
"""
import numpy as np

PI_M14 = np.pi ** -0.25
_CHUNK = 512


def hermite_table(K, x):
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros(x.shape + (K,), dtype=np.float64)
    if K == 0:
        return out
    out[..., 0] = PI_M14 * np.exp(-0.5 * x * x)
    if K > 1:
        out[..., 1] = np.sqrt(2.0) * x * out[..., 0]
    for m in range(1, K - 1):
        out[..., m + 1] = (np.sqrt(2.0 / (m + 1.0)) * x * out[..., m]
                           - np.sqrt(m / (m + 1.0)) * out[..., m - 1])
    return out


def translate_rows(A, shifts, nodes, sw, kout):
    A = np.asarray(A, dtype=np.float64)
    M, Ka = A.shape
    out = np.zeros((M, kout))
    for lo in range(0, M, _CHUNK):
        hi = min(M, lo + _CHUNK)
        half = 0.5 * shifts[lo:hi, None]
        left = hermite_table(Ka, nodes[None, :] - half)
        vals = np.einsum("mqj,mj->mq", left, A[lo:hi]) * sw[None, :]
        right = hermite_table(kout, nodes[None, :] + half)
        out[lo:hi] = np.einsum("mq,mqk->mk", vals, right)
    return out


def shifted_overlap(A, B, shifts, nodes, sw):
    A = np.asarray(A, dtype=np.float64)
    M, Ka = A.shape
    out = np.zeros(M)
    for lo in range(0, M, _CHUNK):
        hi = min(M, lo + _CHUNK)
        half = 0.5 * shifts[lo:hi, None]
        s1 = np.einsum("mqj,mj->mq", hermite_table(Ka, nodes[None, :] - half), A[lo:hi])
        s2 = hermite_table(B.shape[0], nodes[None, :] + half) @ B
        out[lo:hi] = (s1 * s2) @ sw
    return out
