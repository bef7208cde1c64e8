# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled collocation kernels; same contract as the numpy module ``_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


cdef inline Py_ssize_t _locate(const double[::1] mesh, double s) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = mesh.shape[0] - 1, mid
    # largest i with mesh[i] <= s, clipped to the last interval
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if mesh[mid] <= s:
            lo = mid
        else:
            hi = mid
    return lo


cdef inline void _basis(const double[:, ::1] L, double xi, int nu, double* out) noexcept nogil:
    cdef int m = L.shape[0] - 1
    cdef int k, p, r
    cdef double acc, fac
    for k in range(m + 1):
        acc = 0.0
        for p in range(m, nu - 1, -1):
            fac = 1.0
            for r in range(nu):
                fac *= p - r
            acc = acc * xi + fac * L[k, p]
        out[k] = acc


def evaluate(const double[::1] mesh, const double[::1] xn, int m, s, int nu, const double[:, ::1] L):
    s_arr = np.ascontiguousarray(s, dtype=float)
    shape = s_arr.shape
    cdef const double[::1] sv = s_arr.ravel()
    cdef Py_ssize_t n = sv.shape[0], j, i
    cdef int k
    out = np.empty(n)
    cdef double[::1] ov = out
    cdef double t, xi, h, acc, hp
    cdef double bas[16]
    for j in range(n):
        t = sv[j] - floor(sv[j])
        i = _locate(mesh, t)
        h = mesh[i + 1] - mesh[i]
        xi = (t - mesh[i]) / h
        _basis(L, xi, nu, bas)
        acc = 0.0
        for k in range(m + 1):
            acc += bas[k] * xn[i * m + k]
        hp = 1.0
        for k in range(nu):
            hp *= h
        ov[j] = acc / hp
    return out.reshape(shape)


def assemble(const double[::1] mesh, const double[::1] xn, int m, const double[::1] gauss,
             const double[:, ::1] L, double T, double alpha, double beta, double b):
    cdef Py_ssize_t n_int = mesh.shape[0] - 1
    cdef int ng = gauss.shape[0]
    cdef Py_ssize_t n = n_int * ng
    cdef int nb = m + 1
    res = np.empty(n)
    cols = np.empty((n, 3 * nb), dtype=np.int64)
    vals = np.empty((n, 3 * nb))
    wraps = np.zeros((n, 3 * nb), dtype=np.int64)
    dT = np.empty(n)
    dal = np.empty(n)
    dbe = np.empty(n)
    dbb = np.empty(n)
    cdef double[::1] rv = res, dTv = dT, dav = dal, dbv = dbe, dbbv = dbb
    cdef long long[:, ::1] cv = cols, wv = wraps
    cdef double[:, ::1] vv = vals
    cdef double bc[16]
    cdef double dc[16]
    cdef double bs[16]
    cdef double ds[16]
    cdef double be[16]
    cdef double de[16]
    cdef Py_ssize_t i, r, i_s, i_e
    cdef int c, k
    cdef double h, s, x, dx, sig, w, dws, eta, xe, dxe, f, hs, he, xi
    cdef long long ws, we
    with nogil:
        for i in range(n_int):
            h = mesh[i + 1] - mesh[i]
            for c in range(ng):
                r = i * ng + c
                s = mesh[i] + h * gauss[c]
                _basis(L, gauss[c], 0, bc)
                _basis(L, gauss[c], 1, dc)
                x = 0.0
                dx = 0.0
                for k in range(nb):
                    x += bc[k] * xn[i * m + k]
                    dx += dc[k] * xn[i * m + k]
                dx /= h
                sig = s - b / T
                ws = <long long> (-floor(sig))
                sig = sig - floor(sig)
                i_s = _locate(mesh, sig)
                hs = mesh[i_s + 1] - mesh[i_s]
                xi = (sig - mesh[i_s]) / hs
                _basis(L, xi, 0, bs)
                _basis(L, xi, 1, ds)
                w = 0.0
                dws = 0.0
                for k in range(nb):
                    w += bs[k] * xn[i_s * m + k]
                    dws += ds[k] * xn[i_s * m + k]
                dws /= hs
                eta = s - (1.0 + w) / T
                we = <long long> (-floor(eta))
                eta = eta - floor(eta)
                i_e = _locate(mesh, eta)
                he = mesh[i_e + 1] - mesh[i_e]
                xi = (eta - mesh[i_e]) / he
                _basis(L, xi, 0, be)
                _basis(L, xi, 1, de)
                xe = 0.0
                dxe = 0.0
                for k in range(nb):
                    xe += be[k] * xn[i_e * m + k]
                    dxe += de[k] * xn[i_e * m + k]
                dxe /= he
                f = alpha * x + beta * xe
                rv[r] = dx - T * f
                for k in range(nb):
                    cv[r, k] = i * m + k
                    vv[r, k] = dc[k] / h - T * alpha * bc[k]
                    cv[r, nb + k] = i_e * m + k
                    vv[r, nb + k] = -T * beta * be[k]
                    wv[r, nb + k] = we
                    cv[r, 2 * nb + k] = i_s * m + k
                    vv[r, 2 * nb + k] = beta * dxe * bs[k]
                    wv[r, 2 * nb + k] = ws
                dTv[r] = -f - T * beta * dxe * ((1.0 + w) / (T * T) - dws * b / (T * T * T))
                dav[r] = -T * x
                dbv[r] = -T * xe
                dbbv[r] = -beta * dxe * dws / T
    return res, cols, vals, wraps, dT, dal, dbe, dbb
