"""Hot collocation kernels with a compiled backend and a numpy fallback.

The compiled extension is used when it imports; setting the environment
variable ``SDDEBIF_PURE_PYTHON=1`` forces the numpy implementation.
"""
from __future__ import annotations

import os

import numpy as np

from . import _py

BACKEND = "python"
_impl = _py

if os.environ.get("SDDEBIF_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _colloc as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _py


def lagrange_coeffs(m: int) -> np.ndarray:
    """Power-basis coefficients ``L[k, p]`` of the Lagrange polynomials on ``k/m``."""
    nodes = np.linspace(0.0, 1.0, m + 1)
    V = np.vander(nodes, m + 1, increasing=True)
    return np.ascontiguousarray(np.linalg.inv(V).T)


def evaluate(mesh, xn, m, s, nu, L):
    return _impl.evaluate(mesh, xn, m, s, nu, L)


def assemble(mesh, xn, m, gauss, L, T, alpha, beta, b):
    return _impl.assemble(mesh, xn, m, gauss, L, float(T), float(alpha), float(beta), float(b))


def backends() -> dict:
    """All importable backends, for cross-checks and benchmarks."""
    out = {"python": _py}
    try:
        from . import _colloc

        out["cython"] = _colloc
    except ImportError:  # pragma: no cover
        pass
    return out
