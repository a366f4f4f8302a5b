"""The compiled kernels and the numpy fallback must agree."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stokesmg import kernels
from stokesmg.smoothers import (
    Variant,
    build_subdomains,
    factorize_subdomains,
    smooth_additive,
    smooth_multiplicative,
    smooth_restricted_additive,
)

pytestmark = pytest.mark.skipif("compiled" not in kernels.available(), reason="compiled kernels not built")

PY, C = kernels.load("python"), kernels.load("compiled")


def _matrix(rng, n):
    a = rng.standard_normal((n, n)) + n * np.eye(n)
    return np.ascontiguousarray(a)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 2**32 - 1), transposed=st.booleans())
def test_dense_lu_agrees(n, seed, transposed):
    rng = np.random.default_rng(seed)
    a = _matrix(rng, n)
    x = rng.standard_normal(n)
    out = []
    for mod in (PY, C):
        lu, piv, y = a.copy(), np.empty(n, dtype=np.int64), x.copy()
        assert mod.lu_factor_dense(lu, piv, 1e-14) == -1
        mod.lu_solve_dense(lu, piv, y, transposed)
        out.append((lu, piv, y))
    assert np.array_equal(out[0][1], out[1][1])
    assert np.allclose(out[0][0], out[1][0], atol=1e-12)
    assert np.allclose(out[0][2], out[1][2], atol=1e-10)


def test_singular_step_agrees():
    a = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]])
    steps = [mod.lu_factor_dense(a.copy(), np.empty(3, dtype=np.int64), 1e-14) for mod in (PY, C)]
    assert steps[0] == steps[1] >= 0


def test_csr_products_agree(cavity8, rng):
    L = cavity8.L
    x, b = rng.standard_normal(L.shape[0]), rng.standard_normal(L.shape[0])
    ys = []
    for mod in (PY, C):
        y, r = np.empty(L.shape[0]), np.empty(L.shape[0])
        mod.csr_matvec(L.indptr, L.indices, L.data, x, y)
        mod.csr_residual(L.indptr, L.indices, L.data, x, b, r)
        ys.append((y, r))
    assert np.allclose(ys[0][0], ys[1][0], atol=1e-13)
    assert np.allclose(ys[0][1], ys[1][1], atol=1e-13)


@pytest.mark.parametrize("variant", list(Variant))
def test_smoothers_agree(cavity8, rng, variant):
    x, b = rng.standard_normal(cavity8.n), rng.standard_normal(cavity8.n)
    apply = {
        Variant.MV: smooth_multiplicative,
        Variant.AV: smooth_additive,
        Variant.RAV: smooth_restricted_additive,
    }[variant]
    res = []
    for name in ("python", "compiled"):
        p = factorize_subdomains(cavity8, build_subdomains(cavity8), variant, backend=name)
        res.append(apply(cavity8, p, x, b, 0.5, backend=name))
    assert np.abs(res[0] - res[1]).max() <= 1e-11 * max(1.0, np.abs(res[0]).max())


def test_flop_counts_agree(cavity8, rng):
    x, b = rng.standard_normal(cavity8.n), rng.standard_normal(cavity8.n)
    from stokesmg.smoothers import FlopCounter

    for variant, fn in ((Variant.AV, smooth_additive), (Variant.RAV, smooth_restricted_additive),
                        (Variant.MV, smooth_multiplicative)):
        counts = []
        for name in ("python", "compiled"):
            p = factorize_subdomains(cavity8, build_subdomains(cavity8), variant, backend=name)
            fc = FlopCounter()
            fn(cavity8, p, x, b, backend=name, counter=fc)
            counts.append((fc.residual, fc.patch))
        assert counts[0] == counts[1]
