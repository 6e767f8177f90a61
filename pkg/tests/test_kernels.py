import os
import subprocess
import sys

import numpy as np
from hypothesis import given, settings, strategies as st

from hermspde import kernels
from hermspde.sobolev import translation_rule


def _run_both(fn):
    out = {}
    for name in ("python", "cython"):
        try:
            prev = kernels.use_backend(name)
        except ImportError:
            continue
        try:
            out[name] = fn()
        finally:
            kernels.use_backend(prev)
    return out


@settings(max_examples=30, deadline=None)
@given(N=st.integers(0, 30), M=st.integers(1, 40), seed=st.integers(0, 10_000))
def test_backends_agree(N, M, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((M, N + 1))
    B = rng.standard_normal(N + 1)
    z = rng.uniform(-4, 4, M)
    x = rng.uniform(-8, 8, 3 * M)
    nodes, sw = translation_rule(N)
    res = _run_both(lambda: (kernels.hermite_table(N + 1, x), kernels.translate_rows(A, z, nodes, sw, N + 1),
                             kernels.shifted_overlap(A, B, z, nodes, sw)))
    if len(res) == 2:
        for a, b in zip(res["python"], res["cython"]):
            assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_single_row_broadcasts(backend):
    nodes, sw = translation_rule(5)
    a = np.arange(6.0)
    rows = kernels.translate_rows(a, [0.1, 0.2, 0.3], nodes, sw, 6)
    assert rows.shape == (3, 6)
    assert np.allclose(rows[1], kernels.translate_rows(a, [0.2], nodes, sw, 6)[0])


def test_thread_count_does_not_change_results(monkeypatch):
    rng = np.random.default_rng(3)
    A = rng.standard_normal((2000, 11))
    z = rng.uniform(-2, 2, 2000)
    nodes, sw = translation_rule(10)
    monkeypatch.setenv("HERMSPDE_THREADS", "1")
    one = kernels.translate_rows(A, z, nodes, sw, 11)
    monkeypatch.setenv("HERMSPDE_THREADS", "4")
    four = kernels.translate_rows(A, z, nodes, sw, 11)
    assert np.array_equal(one, four)


def test_pure_flag_selects_fallback():
    env = dict(os.environ, HERMSPDE_PURE="1")
    out = subprocess.run([sys.executable, "-c", "import hermspde; print(hermspde.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
