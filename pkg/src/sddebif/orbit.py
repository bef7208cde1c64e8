"""Periodic orbits by piecewise-polynomial collocation.

A periodic solution ``u`` of period ``T`` is represented by its profile
``x(s) = u(s*T)`` on ``s in [0, 1)``. The profile is a continuous piecewise
polynomial of degree 4 (values at equidistant nodes per mesh interval) and
satisfies

    x'(s) = T * (alpha*x(s) + beta*x(eta(s))),
    eta(s) = s - (1 + x(s - b/T)) / T   (arguments taken modulo 1),

at Gauss points of every interval.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from . import _kernels
from .core import Params, hopf_point
from .errors import ArgumentError, ConvergenceError, NumericalError, PhysicalityError

__all__ = [
    "PeriodicOrbit",
    "FloquetSet",
    "OrbitSystem",
    "Condition",
    "solve_po",
    "hopf_initial_guess",
    "floquet",
    "orbit_metrics",
    "adapt_mesh",
    "newton",
]

DEGREE = 4
N_MIN = 40
N_MAX = 400
# empirical: max DDE residual ~ RESIDUAL_CONSTANT * (int rho / N)**m / T
RESIDUAL_CONSTANT = 1.5e-3
COLLAPSE_RATIO = 1e-3
_gx, _gw = np.polynomial.legendre.leggauss(DEGREE)
GAUSS = np.ascontiguousarray(0.5 * (_gx + 1.0))
GAUSS_W = 0.5 * _gw
LAGRANGE = _kernels.lagrange_coeffs(DEGREE)


@dataclass
class PeriodicOrbit:
    """Collocation profile with its period and the parameters it solves."""

    mesh: np.ndarray
    values: np.ndarray
    period: float
    params: Params
    residual: float = float("nan")
    newton_steps: int = 0
    degree: int = DEGREE

    def __post_init__(self):
        self.mesh = np.ascontiguousarray(self.mesh, dtype=float)
        self.values = np.ascontiguousarray(self.values, dtype=float)
        if len(self.values) != (len(self.mesh) - 1) * self.degree:
            raise ArgumentError("values must hold degree*N node values")
        if not self.period > 0:
            raise ArgumentError("period must be positive")

    @property
    def N(self) -> int:
        return len(self.mesh) - 1

    @property
    def xn(self) -> np.ndarray:
        """Node values including the closing node at ``s = 1``."""
        return np.append(self.values, self.values[0])

    def __call__(self, s, nu: int = 0):
        out = _kernels.evaluate(self.mesh, self.xn, self.degree, np.asarray(s, dtype=float), nu, LAGRANGE)
        return float(out.item()) if np.ndim(s) == 0 else out

    def u(self, t, nu: int = 0):
        """Solution in original time, ``u(t) = x(t/T)``."""
        return self(np.asarray(t) / self.period, nu) / self.period ** nu

    @property
    def coeffs(self) -> np.ndarray:
        """Node values per interval, shape ``(N, degree + 1)``."""
        xn = self.xn
        idx = np.arange(self.N)[:, None] * self.degree + np.arange(self.degree + 1)[None, :]
        return xn[idx]

    def on_mesh(self, mesh) -> "PeriodicOrbit":
        mesh = np.asarray(mesh, dtype=float)
        s = _node_positions(mesh, self.degree)
        return replace(self, mesh=mesh, values=self(s))

    def shifted(self, ds: float) -> "PeriodicOrbit":
        """Profile ``x(s + ds)``.

        The mesh moves with the profile (one interval is split at ``s = 0``),
        so the shifted orbit is represented exactly.
        """
        pts = (self.mesh[:-1] - ds) % 1.0
        pts = pts[(pts > 1e-12) & (pts < 1.0 - 1e-12)]
        mesh = np.concatenate([[0.0], np.sort(pts), [1.0]])
        s = _node_positions(mesh, self.degree)
        return replace(self, mesh=mesh, values=self(s + ds))

    def dde_residual(self, s) -> np.ndarray:
        """Residual of the delay equation in original time at rescaled times ``s``."""
        p = self.params
        s = np.asarray(s, dtype=float)
        T = self.period
        w = self(s - p.b / T)
        eta = s - (1.0 + w) / T
        return self(s, 1) / T - p.alpha * self(s) - p.beta * self(eta)

    def to_dict(self) -> dict:
        return {
            "alpha": self.params.alpha,
            "beta": self.params.beta,
            "b": self.params.b,
            "period": self.period,
            "degree": self.degree,
            "mesh": self.mesh.tolist(),
            "coeffs": self.coeffs.tolist(),
            "metrics": orbit_metrics(self),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "PeriodicOrbit":
        coeffs = np.asarray(d["coeffs"], dtype=float)
        deg = int(d.get("degree", DEGREE))
        values = coeffs[:, :deg].ravel()
        return cls(np.asarray(d["mesh"]), values, float(d["period"]),
                   Params(d["alpha"], d["beta"], d.get("b", 0.0)), degree=deg)

    @classmethod
    def from_json(cls, text: str) -> "PeriodicOrbit":
        return cls.from_dict(json.loads(text))


def _node_positions(mesh: np.ndarray, m: int = DEGREE) -> np.ndarray:
    h = np.diff(mesh)
    return (mesh[:-1, None] + h[:, None] * (np.arange(m)[None, :] / m)).ravel()


def _fold_periodic(w: np.ndarray) -> np.ndarray:
    """Add the weight of the closing node ``s = 1`` onto node 0."""
    w[..., 0] += w[..., -1]
    return w[..., :-1]


def integral_phase_row(mesh: np.ndarray, ref: np.ndarray, m: int = DEGREE) -> np.ndarray:
    """Weights ``w`` with ``w @ x = int_0^1 x(s) ref'(s) ds`` (Gauss quadrature, exact)."""
    N = len(mesh) - 1
    h = np.diff(mesh)
    xn = np.append(ref, ref[0])
    s = (mesh[:-1, None] + h[:, None] * GAUSS[None, :]).ravel()
    dref = _kernels.evaluate(mesh, xn, m, s, 1, LAGRANGE).reshape(N, m)
    B = _kernels._py._basis(LAGRANGE, GAUSS, 0)
    loc = np.einsum("ic,c,ck->ik", dref * h[:, None], GAUSS_W, B)
    w = np.zeros(N * m + 1)
    idx = np.arange(N)[:, None] * m + np.arange(m + 1)[None, :]
    np.add.at(w, idx, loc)
    return _fold_periodic(w)


def point_row(mesh: np.ndarray, s0: float, nu: int = 0, m: int = DEGREE) -> np.ndarray:
    """Weights ``w`` with ``w @ x = x^{(nu)}(s0)``."""
    N = len(mesh) - 1
    s0 = s0 - math.floor(s0)
    i = min(max(int(np.searchsorted(mesh, s0, side="right")) - 1, 0), N - 1)
    h = mesh[i + 1] - mesh[i]
    xi = (s0 - mesh[i]) / h
    row = np.zeros(N * m + 1)
    row[i * m: i * m + m + 1] += _kernels._py._basis(LAGRANGE, np.array([xi]), nu)[0] / h ** nu
    return _fold_periodic(row)


def collocation_matrices(mesh: np.ndarray, m: int = DEGREE):
    """Sparse maps from periodic node values to values and derivatives at the Gauss points."""
    N = len(mesh) - 1
    n = N * m
    h = np.diff(mesh)
    Bl = _kernels._py._basis(LAGRANGE, GAUSS, 0)
    Dl = _kernels._py._basis(LAGRANGE, GAUSS, 1)
    rows = np.repeat(np.arange(N * m), m + 1)
    cols = ((np.arange(N)[:, None, None] * m + np.arange(m + 1)[None, None, :]) % n
            * np.ones((1, m, 1), dtype=int)).ravel()
    B = sps.csr_matrix((np.tile(Bl.ravel(), N), (rows, cols)), shape=(n, n))
    D = sps.csr_matrix(((Dl[None, :, :] / h[:, None, None]).ravel(), (rows, cols)), shape=(n, n))
    return B, D


@dataclass
class FloquetSet:
    multipliers: np.ndarray
    trivial_index: int

    @property
    def trivial(self) -> complex:
        return complex(self.multipliers[self.trivial_index])

    @property
    def nontrivial(self) -> np.ndarray:
        return np.delete(self.multipliers, self.trivial_index)

    @property
    def n_unstable(self) -> int:
        return int(np.sum(np.abs(self.nontrivial) > 1.0))


# --------------------------------------------------------------------------
# nonlinear system


@dataclass
class Condition:
    """Extra scalar condition ``x^{(nu)}(s0) = target`` on the profile."""

    s0: float = 0.0
    target: float = 0.0
    nu: int = 0


@dataclass
class OrbitSystem:
    """Collocation equations plus phase and extra conditions.

    Unknowns are ``[node values (n), T, *free]``. With ``phase='integral'``
    the phase row is ``int (x - ref) ref' ds = 0``; with ``phase='pin'`` it is
    ``x'(0) = 0``.
    """

    mesh: np.ndarray
    params: Params
    free: tuple = ()
    phase: str = "integral"
    ref: np.ndarray | None = None
    conditions: list = field(default_factory=list)
    degree: int = DEGREE

    def __post_init__(self):
        self.mesh = np.ascontiguousarray(self.mesh, dtype=float)
        self.n = self.N * self.degree
        for name in self.free:
            if name not in ("alpha", "beta", "b"):
                raise ArgumentError(f"unknown free parameter {name!r}")
        if self.phase == "integral":
            if self.ref is None:
                raise ArgumentError("integral phase condition needs a reference profile")
            self._phase_w = integral_phase_row(self.mesh, np.asarray(self.ref, dtype=float), self.degree)
            self._phase_c = float(self._phase_w @ self.ref)
        elif self.phase == "pin":
            self._phase_w = point_row(self.mesh, 0.0, 1, self.degree)
            self._phase_c = 0.0
        else:
            raise ArgumentError(f"unknown phase condition {self.phase!r}")
        self._cond_rows = [point_row(self.mesh, c.s0, c.nu, self.degree) for c in self.conditions]

    @property
    def N(self) -> int:
        return len(self.mesh) - 1

    @property
    def size(self) -> int:
        return self.n + 1 + len(self.free)

    def unpack(self, Z):
        n = self.n
        x = Z[:n]
        T = Z[n]
        p = self.params
        upd = {name: Z[n + 1 + k] for k, name in enumerate(self.free)}
        if upd:
            p = p.replace(**{k: float(v) for k, v in upd.items()})
        return x, T, p

    def pack(self, orbit: PeriodicOrbit) -> np.ndarray:
        extra = [orbit.params.get(name) for name in self.free]
        return np.concatenate([orbit.values, [orbit.period], extra])

    def orbit(self, Z, **kw) -> PeriodicOrbit:
        x, T, p = self.unpack(Z)
        return PeriodicOrbit(self.mesh, x.copy(), float(T), p, degree=self.degree, **kw)

    def collocation(self, Z, jac: bool = True):
        x, T, p = self.unpack(Z)
        if not T > 0:
            raise ConvergenceError("period became non-positive")
        xn = np.append(x, x[0])
        return _kernels.assemble(self.mesh, xn, self.degree, GAUSS, LAGRANGE, T, p.alpha, p.beta, p.b), T, p

    def residual(self, Z) -> np.ndarray:
        (res, *_), T, p = self.collocation(Z)
        x = Z[: self.n]
        out = [res, [self._phase_w @ x - self._phase_c]]
        out.append([row @ x - c.target for row, c in zip(self._cond_rows, self.conditions)])
        return np.concatenate(out)

    def jacobian_parts(self, Z):
        """Residual and sparse Jacobian (rows: collocation, phase, conditions)."""
        (res, cols, vals, wraps, dT, dal, dbe, dbb), T, p = self.collocation(Z)
        n = self.n
        x = Z[:n]
        rows = np.repeat(np.arange(n), cols.shape[1])
        c = cols.ravel() % n
        A = sps.csr_matrix((vals.ravel(), (rows, c)), shape=(n, n))
        pcols = {"alpha": dal, "beta": dbe, "b": dbb}
        extra_cols = [dT] + [pcols[name] for name in self.free]
        top = sps.hstack([A, sps.csr_matrix(np.column_stack(extra_cols))])
        k = len(self.free)
        lower = [np.concatenate([self._phase_w, np.zeros(1 + k)])]
        lower += [np.concatenate([r, np.zeros(1 + k)]) for r in self._cond_rows]
        J = sps.vstack([top, sps.csr_matrix(np.array(lower))]).tocsc()
        F = np.concatenate([res, [self._phase_w @ x - self._phase_c],
                            [r @ x - cnd.target for r, cnd in zip(self._cond_rows, self.conditions)]])
        return F, J

    def scale(self, Z) -> np.ndarray:
        """Row scaling that turns collocation residuals into original-time residuals."""
        T = Z[self.n]
        s = np.ones(self.n + 1 + len(self.conditions))
        s[: self.n] = 1.0 / T
        return s


def newton(system, Z0, tol: float = 1e-9, maxit: int = 15, extra=None,
           min_value: float | None = -1.0, step_tol: float | None = None):
    """Newton's method on ``system`` with optional extra rows.

    ``extra(Z)`` returns ``(values, jac_rows)`` with ``jac_rows`` a dense
    ``(k, len(Z))`` array, appended to the square-up system (arclength
    equations, fold conditions). Steps that push a node value to
    ``min_value`` or below are damped, then rejected with PhysicalityError.
    Returns ``(Z, residual_norm, iterations)``.
    """
    Z = np.array(Z0, dtype=float)
    n = system.n
    # the last accepted update still contracts quadratically, so a loose step test suffices
    step_tol = 1e-6 if step_tol is None else step_tol
    last = np.inf
    for it in range(1, maxit + 1):
        F, J = system.jacobian_parts(Z)
        F = F * system.scale(Z)
        J = sps.diags(system.scale(Z)) @ J
        if extra is not None:
            ev, er = extra(Z)
            F = np.concatenate([F, ev])
            J = sps.vstack([J, sps.csr_matrix(er)]).tocsc()
        rnorm = float(np.max(np.abs(F)))
        if not math.isfinite(rnorm):
            raise ConvergenceError("non-finite residual", residual=rnorm)
        try:
            lu = spla.splu(J.tocsc())
            dZ = lu.solve(-F)
        except RuntimeError as exc:
            raise ConvergenceError(f"singular Newton matrix: {exc}", residual=rnorm) from exc
        if not np.all(np.isfinite(dZ)):
            raise ConvergenceError("singular Newton matrix", residual=rnorm)
        lam = 1.0
        Zn = Z + dZ
        if min_value is not None:
            for _ in range(6):
                if np.min(Zn[:n]) > min_value:
                    break
                lam *= 0.5
                Zn = Z + lam * dZ
            else:
                raise PhysicalityError("profile minimum dropped below -1 during Newton",
                                       min_u=float(np.min(Zn[:n])))
        if Zn[n] <= 0:
            raise ConvergenceError("period became non-positive", residual=rnorm)
        Z = Zn
        dn = float(np.max(np.abs(lam * dZ)) / (1.0 + np.max(np.abs(Z[:n]))))
        if rnorm < tol and dn < step_tol:
            return Z, rnorm, it
        if it > 3 and rnorm > 1e3 * last and rnorm > 1.0:
            raise ConvergenceError("Newton diverged", residual=rnorm)
        last = min(last, rnorm)
    F = system.residual(Z) * system.scale(Z)
    if extra is not None:
        F = np.concatenate([F, extra(Z)[0]])
    rnorm = float(np.max(np.abs(F)))
    if rnorm < tol:
        return Z, rnorm, maxit
    raise ConvergenceError(f"Newton did not converge in {maxit} steps", residual=rnorm)


def solve_po(params: Params, guess: PeriodicOrbit, tol: float = 1e-9, phase: str = "integral",
             free: tuple = (), conditions=(), maxit: int = 15) -> PeriodicOrbit:
    """Newton-converged periodic orbit near ``guess``.

    The default phase condition is the integral condition against ``guess``;
    ``phase='pin'`` fixes ``x'(0) = 0`` instead (peak or trough at ``s = 0``).
    Each name in ``free`` must be balanced by one entry of ``conditions``.
    """
    if len(free) != len(conditions):
        raise ArgumentError("each free parameter needs one extra condition")
    if np.min(guess.values) <= -1.0:
        raise PhysicalityError("guess violates min > -1", min_u=float(np.min(guess.values)))
    sysm = OrbitSystem(guess.mesh, params, tuple(free), phase,
                       guess.values if phase == "integral" else None, list(conditions), guess.degree)
    base = replace(guess, params=params.replace(**{k: guess.params.get(k) for k in free}))
    Z, r, it = newton(sysm, sysm.pack(base), tol=tol, maxit=maxit)
    po = sysm.orbit(Z, residual=r, newton_steps=it)
    if np.ptp(po.values) < COLLAPSE_RATIO * np.ptp(guess.values):
        raise ConvergenceError("Newton collapsed onto the equilibrium", residual=r)
    return po


def hopf_initial_guess(theta: float, eps: float, b: float = 0.0, side: float | None = None,
                       N: int = N_MIN) -> tuple[Params, PeriodicOrbit]:
    """Parameters next to H and the profile ``eps*cos(2*pi*s)`` with period ``2*pi/theta``.

    With ``side=None`` the orbit side is probed: the amplitude-``eps`` orbit
    is solved with ``beta`` free and its ``beta`` is returned. Otherwise
    ``beta = beta_H + side*eps**2``.
    """
    if not 0.0 < theta < math.pi:
        raise ArgumentError("theta must lie in (0, pi)")
    if not 0.0 < eps < 1.0:
        raise ArgumentError("eps must lie in (0, 1)")
    a, bt = hopf_point(theta)
    mesh = uniform_mesh(N)
    s = _node_positions(mesh)
    guess = PeriodicOrbit(mesh, eps * np.cos(2 * np.pi * s), 2 * math.pi / theta, Params(a, bt, b))
    if side is None:
        try:
            po = solve_po(guess.params, guess, phase="pin", free=("beta",),
                          conditions=[Condition(0.0, eps)])
            params = po.params
        except (ConvergenceError, PhysicalityError):
            params = Params(a, bt - eps * eps, b)
    else:
        params = Params(a, bt + side * eps * eps, b)
    return params, replace(guess, params=params)


# --------------------------------------------------------------------------
# Floquet multipliers


def floquet(po: PeriodicOrbit, k: int = 5, dense_limit: int = 2000) -> FloquetSet:
    """Leading Floquet multipliers from the linearised collocation system.

    Floquet solutions satisfy ``y(s - j) = mu**(-j) y(s)``; arguments that
    reach back ``j`` periods carry the factor ``nu**j`` with ``nu = 1/mu``.
    Together with ``nu*y(1) = y(0)`` this gives ``Q(nu) y = sum_j nu**j Q_j y = 0``
    where only ``Q_0`` is large and full rank. Expanding about ``nu0 = -1``
    (a well-conditioned boundary-value operator even for strongly unstable
    orbits) and reducing to the columns touched by wrapped arguments leaves
    a small companion eigenproblem.
    """
    p = po.params
    m = po.degree
    n = po.N * m
    res, cols, vals, wraps, *_ = _kernels.assemble(po.mesh, po.xn, m, GAUSS, LAGRANGE, po.period,
                                                   p.alpha, p.beta, p.b)
    K = int(wraps.max())
    rows = np.repeat(np.arange(n), cols.shape[1])
    c = cols.ravel()
    v = vals.ravel()
    wr = wraps.ravel()
    size = n + 1

    def block(j):
        sel = wr == j
        Aj = sps.csr_matrix((v[sel], (rows[sel], c[sel])), shape=(n, size))
        last = sps.csr_matrix(([-1.0 if j == 0 else 1.0], ([0], [0 if j == 0 else n])), shape=(1, size))
        if j > 1:
            last = sps.csr_matrix((1, size))
        return sps.vstack([Aj, last]).tocsc()

    Q = [block(j) for j in range(K + 1)]
    C = np.unique(np.concatenate([Qj.nonzero()[1] for Qj in Q[1:]]))
    nc = len(C)

    for nu0 in (-1.0, complex(math.cos(2.0), math.sin(2.0))):
        # coefficients of Q(nu0 + delta) = sum_i delta**i Q_i
        shifted = [sum(math.comb(j, i) * nu0 ** (j - i) * Q[j] for j in range(i, K + 1)) for i in range(K + 1)]
        try:
            lu = spla.splu(shifted[0].tocsc())
        except RuntimeError:
            continue
        tops = [(-lu.solve(Qi[:, C].toarray()))[C, :] for Qi in shifted[1:]]
        if all(np.all(np.isfinite(t)) for t in tops):
            break
    else:
        raise NumericalError("singular Floquet operator at both shifts")
    if K == 1:
        Mred = tops[0]
    else:
        Mred = np.zeros((K * nc, K * nc), dtype=tops[0].dtype)
        Mred[:nc, :] = np.hstack(tops)
        Mred[nc:, :-nc] = np.eye((K - 1) * nc)
    want = min(k + 1, Mred.shape[0])
    try:
        if Mred.shape[0] <= dense_limit or Mred.shape[0] <= 2 * want + 2:
            kappa = np.linalg.eigvals(Mred)
        else:
            kappa = spla.eigs(Mred, k=2 * want, sigma=-1.0 / nu0, return_eigenvectors=False,
                              tol=1e-12, maxiter=20000)
    except (np.linalg.LinAlgError, spla.ArpackError) as exc:
        raise NumericalError(f"eigenvalue solver failed: {exc}") from exc
    # kappa = 1/delta, nu = nu0 + delta, mu = 1/nu
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = kappa / (1.0 + nu0 * kappa)
    mu = np.where(np.isfinite(mu), mu, np.inf)
    mu = mu[np.argsort(-np.abs(mu))][:want]
    mu = np.array([complex(z.real, 0.0) if abs(z.imag) < 1e-12 * max(1.0, abs(z)) else complex(z) for z in mu])
    triv = int(np.argmin(np.abs(mu - 1.0)))
    # the trivial multiplier plus the leading k nontrivial ones
    keep = sorted([triv] + [i for i in range(len(mu)) if i != triv][:k])
    mu = mu[keep]
    return FloquetSet(mu, int(np.argmin(np.abs(mu - 1.0))))


# --------------------------------------------------------------------------
# metrics and meshes


def _extrema(po: PeriodicOrbit):
    """Exact min/max of the piecewise profile via derivative roots."""
    m = po.degree
    coeffs = po.coeffs  # node values per interval
    # local power coefficients in xi: c = values @ L
    P = coeffs @ LAGRANGE
    best_min = (np.inf, 0.0)
    best_max = (-np.inf, 0.0)
    ends = P.sum(axis=1)
    for i in range(po.N):
        cand = [0.0]
        d = P[i, 1:] * np.arange(1, m + 1)
        r = np.roots(d[::-1]) if np.any(d[1:]) else np.array([])
        for z in r:
            if abs(z.imag) < 1e-10 and 0.0 <= z.real <= 1.0:
                cand.append(z.real)
        for xi in cand:
            val = np.polyval(P[i, ::-1], xi)
            s = po.mesh[i] + xi * (po.mesh[i + 1] - po.mesh[i])
            if val < best_min[0]:
                best_min = (val, s)
            if val > best_max[0]:
                best_max = (val, s)
    del ends
    return best_min, best_max


def orbit_metrics(po: PeriodicOrbit) -> dict:
    """Period, amplitude, extrema and the slope of the rising segment.

    ``slope_est`` is the median of ``u'(t) = x'(s)/T`` over the central 60 %
    of the rising segment (from the minimum to the next maximum).
    """
    (mn, s_min), (mx, s_max) = _extrema(po)
    rise = (s_max - s_min) % 1.0
    s = s_min + rise * np.linspace(0.2, 0.8, 201)
    slope = float(np.median(po(s, 1) / po.period))
    return {
        "T": float(po.period),
        "amplitude": float(mx - mn),
        "min_u": float(mn),
        "max_u": float(mx),
        "slope_est": slope,
        "s_min": float(s_min % 1.0),
        "s_max": float(s_max % 1.0),
    }


def _error_density(po: PeriodicOrbit):
    """Per-interval estimate of ``|x^{(m+1)}|`` from jumps of ``x^{(m)}``."""
    m = po.degree
    h = np.diff(po.mesh)
    P = po.coeffs @ LAGRANGE
    dm = math.factorial(m) * P[:, m] / h ** m
    dnext = np.roll(dm, -1)
    dprev = np.roll(dm, 1)
    hn = np.roll(h, -1)
    hp = np.roll(h, 1)
    d1 = np.abs(dnext - dm) / (0.5 * (h + hn))
    d0 = np.abs(dm - dprev) / (0.5 * (h + hp))
    return np.maximum(d0, d1)


def adapt_mesh(po: PeriodicOrbit, N: int | None = None, tol: float = 3e-8,
               n_min: int = N_MIN, n_max: int = N_MAX, floor: float = 0.05) -> PeriodicOrbit:
    """Redistribute (and optionally resize) the mesh to equidistribute the error.

    The monitor ``|x^{(m+1)}|^{1/m}`` (plus a floor proportional to its mean)
    equidistributes the derivative error ``h^m |x^{(m+1)}|``. When ``N`` is
    ``None`` the number of intervals is chosen so the predicted residual of
    the delay equation in original time is about ``tol``, clipped to
    ``[n_min, n_max]``.
    """
    m = po.degree
    h = np.diff(po.mesh)
    rho = _error_density(po) ** (1.0 / m)
    rho = rho + floor * max(float(np.sum(rho * h)), 1e-12)
    total = float(np.sum(rho * h))
    if N is None:
        N = int(math.ceil(total * (RESIDUAL_CONSTANT / (po.period * tol)) ** (1.0 / m)))
        N = min(max(N, n_min), n_max)
    cum = np.concatenate([[0.0], np.cumsum(rho * h)])
    cum /= cum[-1]
    mesh = np.interp(np.linspace(0.0, 1.0, N + 1), cum, po.mesh)
    mesh[0], mesh[-1] = 0.0, 1.0
    return po.on_mesh(mesh)


def uniform_mesh(N: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, N + 1)
