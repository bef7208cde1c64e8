"""Vectorised numpy implementation of the collocation kernels.

Profiles are continuous piecewise polynomials of degree ``m`` on a mesh of
``[0, 1]``, stored by their values at ``m + 1`` equidistant nodes per
interval. Node ``i*m + k`` is node ``k`` of interval ``i``; the last node
(index ``N*m``) sits at ``s = 1``.
"""
from __future__ import annotations

import numpy as np


def _locate(mesh, s):
    n_int = len(mesh) - 1
    i = np.searchsorted(mesh, s, side="right") - 1
    i = np.clip(i, 0, n_int - 1)
    h = mesh[i + 1] - mesh[i]
    return i, (s - mesh[i]) / h, h


def _basis(L, xi, nu):
    """Rows ``l_k^{(nu)}(xi)`` (derivative in the local variable)."""
    m = L.shape[0] - 1
    out = np.zeros((len(xi), m + 1))
    for p in range(nu, m + 1):
        fac = 1.0
        for r in range(nu):
            fac *= p - r
        out += np.outer(xi ** (p - nu), L[:, p]) * fac
    return out


def evaluate(mesh, xn, m, s, nu, L):
    """Profile (or its ``nu``-th derivative in ``s``) at ``s`` taken modulo 1."""
    s = np.asarray(s, dtype=float)
    shape = s.shape
    s = s.ravel()
    s = s - np.floor(s)
    i, xi, h = _locate(mesh, s)
    B = _basis(L, xi, nu)
    idx = i[:, None] * m + np.arange(m + 1)[None, :]
    out = np.einsum("ij,ij->i", B, xn[idx]) / h ** nu
    return out.reshape(shape)


def _wrap(a):
    fl = np.floor(a)
    return a - fl, (-fl).astype(np.int64)


def assemble(mesh, xn, m, gauss, L, T, alpha, beta, b):
    """Residual and Jacobian pieces of ``x' = T*(alpha*x(s) + beta*x(eta))``.

    Returns ``res, cols, vals, wraps, dT, dalpha, dbeta, db`` where row ``r``
    of ``cols/vals/wraps`` holds the ``3*(m+1)`` Jacobian entries of residual
    ``r`` with respect to node values (own interval, delayed interval, chain
    term through the inner argument). Columns are unwrapped (``0..N*m``);
    ``wraps`` counts how many periods the argument reaches back.
    """
    n_int = len(mesh) - 1
    hs = np.diff(mesh)
    # collocation points
    s = (mesh[:-1, None] + hs[:, None] * gauss[None, :]).ravel()
    own = np.repeat(np.arange(n_int), len(gauss))
    xi_c = np.tile(gauss, n_int)
    h_c = hs[own]
    Bc = _basis(L, xi_c, 0)
    Dc = _basis(L, xi_c, 1) / h_c[:, None]
    own_idx = own[:, None] * m + np.arange(m + 1)[None, :]
    xloc = xn[own_idx]
    x = np.einsum("ij,ij->i", Bc, xloc)
    dx = np.einsum("ij,ij->i", Dc, xloc)

    sig_raw = s - b / T
    sig, wrap_s = _wrap(sig_raw)
    i_s, xi_s, h_s = _locate(mesh, sig)
    Bs = _basis(L, xi_s, 0)
    idx_s = i_s[:, None] * m + np.arange(m + 1)[None, :]
    w = np.einsum("ij,ij->i", Bs, xn[idx_s])
    dws = np.einsum("ij,ij->i", _basis(L, xi_s, 1), xn[idx_s]) / h_s

    eta_raw = s - (1.0 + w) / T
    eta, wrap_e = _wrap(eta_raw)
    i_e, xi_e, h_e = _locate(mesh, eta)
    Be = _basis(L, xi_e, 0)
    idx_e = i_e[:, None] * m + np.arange(m + 1)[None, :]
    xe = np.einsum("ij,ij->i", Be, xn[idx_e])
    dxe = np.einsum("ij,ij->i", _basis(L, xi_e, 1), xn[idx_e]) / h_e

    f = alpha * x + beta * xe
    res = dx - T * f
    cols = np.concatenate([own_idx, idx_e, idx_s], axis=1)
    vals = np.concatenate([
        Dc - T * alpha * Bc,
        -T * beta * Be,
        (beta * dxe)[:, None] * Bs,
    ], axis=1)
    nb = m + 1
    wraps = np.concatenate([
        np.zeros((len(s), nb), dtype=np.int64),
        np.repeat(wrap_e[:, None], nb, axis=1),
        np.repeat(wrap_s[:, None], nb, axis=1),
    ], axis=1)
    deta_dT = (1.0 + w) / T ** 2 - dws * b / T ** 3
    dT = -f - T * beta * dxe * deta_dT
    dalpha = -T * x
    dbeta = -T * xe
    db = -beta * dxe * dws / T
    return res, cols, vals, wraps, dT, dalpha, dbeta, db
