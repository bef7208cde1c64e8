import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sddebif import _kernels
from sddebif.orbit import DEGREE, GAUSS, LAGRANGE

M = DEGREE


def _profile(seed, N):
    rng = np.random.default_rng(seed)
    mesh = np.sort(np.concatenate([[0.0, 1.0], rng.uniform(0, 1, N - 1)]))
    mesh = np.unique(mesh)
    n_int = len(mesh) - 1
    nodes = (mesh[:-1, None] + np.diff(mesh)[:, None] * np.linspace(0, 1, M + 1)[None, :M]).ravel()
    nodes = np.append(nodes, 1.0)
    amp = rng.uniform(0.05, 0.6)
    xn = amp * np.cos(2 * np.pi * nodes + rng.uniform(0, 6)) + 0.1 * amp * np.sin(6 * np.pi * nodes)
    assert len(xn) == n_int * M + 1
    return mesh, xn


def test_pure_python_backend_always_available():
    assert "python" in _kernels.backends()
    assert _kernels.BACKEND in ("python", "cython")


@pytest.mark.skipif("cython" not in _kernels.backends(), reason="compiled backend not built")
@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(5, 40), st.floats(2.0, 80.0),
       st.floats(-1.0, 0.9), st.floats(-3.0, -1.0), st.floats(0.0, 0.6))
def test_backends_agree(seed, N, T, alpha, beta, b):
    mesh, xn = _profile(seed, N)
    be = _kernels.backends()
    py = be["python"].assemble(mesh, xn, M, GAUSS, LAGRANGE, T, alpha, beta, b)
    cy = be["cython"].assemble(mesh, xn, M, GAUSS, LAGRANGE, T, alpha, beta, b)
    # summation order differs; derivatives carry a 1/h factor, so roundoff
    # scales with the shortest interval
    inv_h = 1.0 / np.min(np.diff(mesh))
    for a, c in zip(py, cy):
        scale = max(inv_h, float(np.max(np.abs(a))))
        np.testing.assert_allclose(np.asarray(c), a, rtol=1e-10, atol=1e-13 * scale)
    s = np.random.default_rng(seed).uniform(-1, 2, 50)
    for nu in (0, 1):
        a = be["python"].evaluate(mesh, xn, M, s, nu, LAGRANGE)
        scale = max(inv_h, float(np.max(np.abs(a))))
        np.testing.assert_allclose(be["cython"].evaluate(mesh, xn, M, s, nu, LAGRANGE), a,
                                   rtol=1e-10, atol=1e-13 * scale)


@pytest.mark.parametrize("backend", sorted(_kernels.backends()))
def test_evaluate_reproduces_polynomials(backend):
    impl = _kernels.backends()[backend]
    mesh = np.array([0.0, 0.2, 0.55, 1.0])
    nodes = np.append((mesh[:-1, None] + np.diff(mesh)[:, None] * np.linspace(0, 1, M + 1)[None, :M]).ravel(), 1.0)
    poly = np.polynomial.Polynomial([0.3, -1.0, 2.0, 0.5, -0.7])
    s = np.linspace(0, 0.999, 37)
    np.testing.assert_allclose(impl.evaluate(mesh, poly(nodes), M, s, 0, LAGRANGE), poly(s), atol=1e-13)
    np.testing.assert_allclose(impl.evaluate(mesh, poly(nodes), M, s, 1, LAGRANGE), poly.deriv()(s), atol=1e-11)


def _dense_jac(mesh, xn, T, alpha, beta, b, impl):
    res, cols, vals, wraps, *_ = impl.assemble(mesh, xn, M, GAUSS, LAGRANGE, T, alpha, beta, b)
    n = len(xn) - 1
    J = np.zeros((len(res), n))
    for r in range(len(res)):
        for c, v in zip(cols[r], vals[r]):
            J[r, c % n] += v
    return J


@pytest.mark.parametrize("backend", sorted(_kernels.backends()))
def test_jacobian_against_finite_differences(backend):
    impl = _kernels.backends()[backend]
    mesh, xn = _profile(7, 12)
    T, alpha, beta, b = 6.0, -0.2, -1.8, 0.3
    J = _dense_jac(mesh, xn, T, alpha, beta, b, impl)
    n = len(xn) - 1
    h = 1e-7
    base = impl.assemble(mesh, xn, M, GAUSS, LAGRANGE, T, alpha, beta, b)[0]
    for j in range(0, n, 5):
        x2 = xn.copy()
        x2[j] += h
        if j == 0:
            x2[-1] += h  # periodic node
        fd = (impl.assemble(mesh, x2, M, GAUSS, LAGRANGE, T, alpha, beta, b)[0] - base) / h
        np.testing.assert_allclose(J[:, j], fd, atol=2e-5)


@pytest.mark.parametrize("backend", sorted(_kernels.backends()))
@pytest.mark.parametrize("name, index, step", [("T", 4, 1e-6), ("alpha", 5, 1e-7),
                                               ("beta", 6, 1e-7), ("b", 7, 1e-7)])
def test_parameter_derivatives(backend, name, index, step):
    impl = _kernels.backends()[backend]
    mesh, xn = _profile(3, 15)
    args = dict(T=7.0, alpha=-0.3, beta=-1.9, b=0.2)
    out = impl.assemble(mesh, xn, M, GAUSS, LAGRANGE, *args.values())
    bumped = dict(args, **{name: args[name] + step})
    fd = (impl.assemble(mesh, xn, M, GAUSS, LAGRANGE, *bumped.values())[0] - out[0]) / step
    np.testing.assert_allclose(out[index], fd, atol=1e-5)
