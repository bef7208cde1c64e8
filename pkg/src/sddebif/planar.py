"""Truncated planar dynamics on the centre manifold.

The vector field is ``y' = v, v' = F(y, v; p, q, b)`` with ``F`` a polynomial
produced by :func:`sddebif.cmf.emit_planar_vf`.
"""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from numpy.polynomial.polynomial import polyder, polyval2d
import scipy.sparse as sps
from scipy.integrate import solve_ivp

from . import _kernels
from .errors import ArgumentError, ConvergenceError, NumericalError, PreconditionError
from .orbit import (COLLAPSE_RATIO, DEGREE, LAGRANGE, Condition, collocation_matrices,
                    integral_phase_row, newton, point_row, uniform_mesh)

__all__ = [
    "PlanarVF",
    "NumericVF",
    "PlanarTrajectory",
    "simulate_planar",
    "conserved_V",
    "slow_manifold_v",
    "slow_manifold_stability",
    "slow_manifold_residual",
    "v_drift",
    "hopf_q",
    "PlanarOrbit",
    "PlanarSystem",
    "planar_hopf_orbit",
    "planar_criticality",
    "planar_fold_branch",
    "planar_gh",
    "planar_bifurcation_sweep",
    "extrapolate_gh",
    "write_sweep_csv",
]

log = logging.getLogger(__name__)


def _mono_str(e) -> str:
    names = ("y", "v", "p", "q")
    parts = [(n if k == 1 else f"{n}^{k}") for n, k in zip(names, e) if k]
    return "*".join(parts) if parts else "1"


class PlanarVF:
    """Polynomial ``F(y, v; p, q, b)`` with coefficients exact in ``b``.

    ``terms`` maps exponent tuples ``(e_y, e_v, e_p, e_q)`` to univariate
    :class:`~sddebif.cmf.RationalPoly` objects in ``b``.
    """

    def __init__(self, terms: dict, order: int):
        self.terms = {tuple(e): c for e, c in terms.items() if not c.is_zero()}
        self.order = int(order)

    def coefficient(self, ey: int, ev: int, ep: int = 0, eq: int = 0):
        from .cmf import RationalPoly

        return self.terms.get((ey, ev, ep, eq), RationalPoly(vars=("b",)))

    def truncate(self, order: int) -> "PlanarVF":
        if order > self.order:
            raise ArgumentError(f"cannot raise order {self.order} to {order}")
        return PlanarVF({e: c for e, c in self.terms.items() if sum(e) <= order}, order)

    def _at_b(self, b) -> dict:
        cache = self.__dict__.setdefault("_b_cache", {})
        key = float(b)
        if key not in cache:
            cache[key] = {e: float(c.evaluate(b=b)) for e, c in self.terms.items()}
        return cache[key]

    def numeric(self, p: float, q: float, b: float, d: str | None = None) -> "NumericVF":
        """Collapse parameters into float coefficients of ``y**i * v**j``.

        With ``d='p'`` or ``d='q'`` the result is the partial derivative of
        ``F`` with respect to that parameter.
        """
        acc: dict = {}
        for (ey, ev, ep, eq), val in self._at_b(b).items():
            if d == "p":
                if ep == 0:
                    continue
                val, ep = val * ep, ep - 1
            elif d == "q":
                if eq == 0:
                    continue
                val, eq = val * eq, eq - 1
            elif d is not None:
                raise ArgumentError(f"unknown parameter {d!r}")
            acc[(ey, ev)] = acc.get((ey, ev), 0.0) + val * p ** ep * q ** eq
        return NumericVF(acc, p)

    def linear_part(self, p: float, q: float, b: float) -> tuple[float, float]:
        """``(dF/dy, dF/dv)`` at the origin."""
        fy = fv = 0.0
        for (ey, ev, ep, eq), val in self._at_b(b).items():
            if (ey, ev) == (1, 0):
                fy += val * p ** ep * q ** eq
            elif (ey, ev) == (0, 1):
                fv += val * p ** ep * q ** eq
        return fy, fv

    def exact_at(self, b) -> dict:
        """Coefficients with ``b`` substituted exactly (``b`` rational)."""
        b = Fraction(b)
        out = {}
        for e, c in self.terms.items():
            val = c.evaluate(b=b)
            if val:
                out[e] = val
        return out

    def to_dict(self) -> dict:
        mons = {}
        for e in sorted(self.terms):
            coeffs = self.terms[e].coeffs_in("b")
            mons[",".join(map(str, e))] = [str(c) for c in coeffs]
        return {
            "order": self.order,
            "variables": ["y", "v", "p", "q"],
            "coefficient_variable": "b",
            "monomials": mons,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlanarVF":
        from .cmf import RationalPoly

        terms = {}
        for key, coeffs in d["monomials"].items():
            e = tuple(int(x) for x in key.split(","))
            terms[e] = RationalPoly({(k,): Fraction(c) for k, c in enumerate(coeffs)}, ("b",))
        return cls(terms, d["order"])

    def pretty(self) -> str:
        lines = [f"y' = v", f"v' = F(y, v; p, q, b), order {self.order}:"]
        for e in sorted(self.terms, key=lambda e: (sum(e), tuple(-x for x in e))):
            lines.append(f"  + ({self.terms[e].pretty()}) * {_mono_str(e)}")
        return "\n".join(lines)

    def __eq__(self, other):
        return isinstance(other, PlanarVF) and self.order == other.order and self.terms == other.terms


@dataclass
class NumericVF:
    """Floating-point ``F`` for fixed ``(p, q, b)``; ``coeffs[(i, j)]`` multiplies ``y**i v**j``."""

    coeffs: dict
    p: float

    def __post_init__(self):
        deg = max((max(i, j) for i, j in self.coeffs), default=0)
        self._C = np.zeros((deg + 1, deg + 1))
        for (i, j), c in self.coeffs.items():
            self._C[i, j] += c

    def F(self, y, v):
        return polyval2d(y, v, self._C)

    def dF(self, y, v, ny: int = 1, nv: int = 0):
        """Mixed partial derivative ``d^(ny+nv) F / dy^ny dv^nv``."""
        C = self._C
        if ny:
            C = polyder(C, ny, axis=0)
        if nv:
            C = polyder(C, nv, axis=1)
        return polyval2d(y, v, C)

    def rhs(self, t, x):
        return np.array([x[1], self.F(x[0], x[1])])

    def jac(self, t, x):
        y, v = x
        return np.array([[0.0, 1.0], [self.dF(y, v, 1, 0), self.dF(y, v, 0, 1)]])

    def rescaled_rhs(self, s, x):
        """Field in the slow time ``s = -p*t`` with ``w = dy/ds``."""
        p = self.p
        y, w = x
        return np.array([w, self.F(y, -p * w) / (p * p)])


# --------------------------------------------------------------------------
# simulation, conserved quantity, slow manifold


def _as_numeric(vf, params) -> NumericVF:
    if isinstance(vf, NumericVF):
        return vf
    if params is None:
        raise ArgumentError("params (p, q, b) are required for a PlanarVF")
    p, q, b = params
    return vf.numeric(p, q, b)


@dataclass
class PlanarTrajectory:
    t: np.ndarray
    y: np.ndarray
    v: np.ndarray
    sol: object
    diverged: bool
    rescaled: bool

    def __call__(self, t):
        return self.sol(t)


def simulate_planar(vf, init, params=None, tspan=(0.0, 10.0), tol: float = 1e-10,
                    rescaled: bool = False, blowup: float = 1e8) -> PlanarTrajectory:
    """Integrate ``y' = v, v' = F`` (or the slow-time form) with dense output.

    With ``rescaled=True`` time is ``s = -p*t`` and the second coordinate is
    ``dy/ds``. Integration stops with ``diverged=True`` once ``|state|``
    exceeds ``blowup``.
    """
    nvf = _as_numeric(vf, params)
    if rescaled and not nvf.p < 0:
        raise ArgumentError("the slow-time form needs p < 0")
    fun = nvf.rescaled_rhs if rescaled else nvf.rhs

    def blow(t, x):
        return blowup - max(abs(x[0]), abs(x[1]))

    blow.terminal = True
    sol = solve_ivp(fun, tspan, np.asarray(init, dtype=float), method="DOP853", rtol=tol,
                    atol=tol * 1e-2, dense_output=True, events=blow)
    if sol.status < 0:
        raise NumericalError(f"planar integration failed: {sol.message}")
    return PlanarTrajectory(sol.t, sol.y[0], sol.y[1], sol.sol, sol.status == 1, rescaled)


def conserved_V(y, v, p: float):
    """``V = -log(p*v - p/2) - 2*v - 2*y**2/p`` for the slow-time coordinates ``(y, v)``."""
    if not p < 0:
        raise ArgumentError("conserved_V needs p < 0")
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    arg = p * v - p / 2.0
    if np.any(arg <= 0):
        raise ArgumentError("log argument p*v - p/2 must be positive (v < 1/2)")
    out = -np.log(arg) - 2.0 * v - 2.0 * y * y / p
    return float(out) if out.ndim == 0 else out


def slow_manifold_v(y, q: float):
    """Slow manifold ``v = y/(q + 2y)`` of the slow-time second-order system."""
    y = np.asarray(y, dtype=float)
    den = q + 2.0 * y
    if np.any(np.abs(den) < 1e-14):
        raise ArgumentError("pole of the slow manifold at y = -q/2")
    out = y / den
    return float(out) if out.ndim == 0 else out


def slow_manifold_stability(y: float, q: float) -> str:
    """Transversal stability of the slow manifold: stable for ``y < -q/2``."""
    if abs(y + q / 2.0) < 1e-14:
        raise ArgumentError("y = -q/2 is the pole of the slow manifold")
    return "stable" if y < -q / 2.0 else "unstable"


def slow_manifold_residual(vf, y, p: float, q: float, b: float):
    """Residual of the slow-time equation on ``v = y/(q+2y)``; it is ``O(p)``."""
    nvf = _as_numeric(vf, (p, q, b))
    y = np.asarray(y, dtype=float)
    w = slow_manifold_v(y, q)
    dw_dy = q / (q + 2.0 * y) ** 2
    # (-p) w' - F(y, -p w)/(-p) with w' = dw/dy * y' and y' = w
    return -p * dw_dy * w - nvf.F(y, -p * w) / (-p)


def v_drift(vf, p: float, q: float, b: float, y0: float = 0.05, tol: float = 1e-11,
            s_max: float = 200.0) -> dict:
    """Change of ``V`` over one revolution of the slow-time orbit through ``(y0, 0)``.

    A positive drift means the orbit spirals outwards (the focus is weakly
    repelling, subcritical side); negative means inwards.
    """
    nvf = _as_numeric(vf, (p, q, b))
    if not p < 0:
        raise ArgumentError("v_drift needs p < 0")

    def crossing(direction):
        def ev(s, x):
            return x[1]

        ev.direction = direction
        ev.terminal = True
        return ev

    # w decreases first from (y0, 0); the upward crossing is the half turn
    state, s1 = np.array([y0, 0.0]), 0.0
    for direction in (1.0, -1.0):
        sol = solve_ivp(nvf.rescaled_rhs, (s1, s1 + s_max), state, method="DOP853",
                        rtol=tol, atol=tol * 1e-2, events=crossing(direction))
        if sol.status != 1 or not len(sol.t_events[0]):
            raise ConvergenceError("orbit did not complete a revolution")
        s1, state = sol.t_events[0][0], sol.y_events[0][0]
    x1 = state
    V0 = conserved_V(y0, 0.0, p)
    V1 = conserved_V(x1[0], x1[1], p)
    return {"delta_V": float(V1 - V0), "revolution_time": float(s1), "y_return": float(x1[0])}


def hopf_q(vf: PlanarVF, p: float, b: float, q_range: float = 0.5) -> float | None:
    """``q`` where the trace of the Jacobian at the origin vanishes with positive determinant."""
    terms = {}
    for (ey, ev, ep, eq), val in vf._at_b(b).items():
        if (ey, ev) == (0, 1):
            terms[eq] = terms.get(eq, 0.0) + val * p ** ep
    deg = max(terms) if terms else 0
    coeffs = [terms.get(k, 0.0) for k in range(deg, -1, -1)]
    roots = np.roots(coeffs) if deg > 0 else np.array([])
    real = [r.real for r in roots if abs(r.imag) < 1e-12 and abs(r.real) <= q_range]
    if not real:
        return None
    q = min(real, key=abs)
    fy, _ = vf.linear_part(p, q, b)
    return float(q) if -fy > 0 else None


# --------------------------------------------------------------------------
# periodic orbits of the planar field


@dataclass
class PlanarOrbit:
    """Periodic solution ``(y, v)`` of the planar field, stored as periodic node values."""

    mesh: np.ndarray
    y: np.ndarray
    v: np.ndarray
    period: float
    p: float
    q: float
    b: float
    residual: float = float("nan")
    degree: int = DEGREE

    def __call__(self, s, nu: int = 0):
        out = []
        for vals in (self.y, self.v):
            out.append(_kernels.evaluate(self.mesh, np.append(vals, vals[0]), self.degree, s, nu, LAGRANGE))
        return tuple(out)

    def sample(self, k: int = 8):
        s = np.linspace(0.0, 1.0, k * len(self.y), endpoint=False)
        return self(s)

    @property
    def amplitude(self) -> float:
        y, _ = self.sample()
        return float(np.ptp(y))

    def summary(self) -> dict:
        y, v = self.sample()
        return {"period": self.period, "amplitude": float(np.ptp(y)), "y_min": float(y.min()),
                "y_max": float(y.max()), "v_min": float(v.min()), "v_max": float(v.max())}


class PlanarSystem:
    """Collocation equations ``y' = T v, v' = T F(y, v)`` on ``[0, 1]`` plus phase and conditions.

    Unknowns are ``[y (n), v (n), T, *free]`` with ``free`` a subset of
    ``('p', 'q')``. ``phase='pin'`` sets ``v(0) = 0``; ``'integral'`` uses the
    integral condition on ``y`` against ``ref``. ``conditions`` fix ``y`` at
    given points.
    """

    def __init__(self, vf: PlanarVF, mesh, p: float, q: float, b: float, free=(),
                 phase: str = "integral", ref=None, conditions=(), degree: int = DEGREE):
        for name in free:
            if name not in ("p", "q"):
                raise ArgumentError(f"unknown free parameter {name!r}")
        self.vf = vf
        self.mesh = np.ascontiguousarray(mesh, dtype=float)
        self.pars = {"p": float(p), "q": float(q)}
        self.b = float(b)
        self.free = tuple(free)
        self.degree = degree
        self.conditions = list(conditions)
        self.nn = (len(self.mesh) - 1) * degree
        self.n = 2 * self.nn
        self.B, self.D = collocation_matrices(self.mesh, degree)
        zero = np.zeros(self.nn)
        if phase == "pin":
            self._phase_w = np.concatenate([zero, point_row(self.mesh, 0.0, 0, degree)])
            self._phase_c = 0.0
        elif phase == "integral":
            if ref is None:
                raise ArgumentError("integral phase condition needs a reference profile")
            w = integral_phase_row(self.mesh, np.asarray(ref, dtype=float), degree)
            self._phase_w = np.concatenate([w, zero])
            self._phase_c = float(w @ ref)
        else:
            raise ArgumentError(f"unknown phase condition {phase!r}")
        self._cond_rows = [np.concatenate([point_row(self.mesh, c.s0, c.nu, degree), zero])
                           for c in self.conditions]

    @property
    def size(self) -> int:
        return self.n + 1 + len(self.free)

    def params(self, Z) -> dict:
        out = dict(self.pars)
        for k, name in enumerate(self.free):
            out[name] = float(Z[self.n + 1 + k])
        return out

    def pack(self, orbit: PlanarOrbit) -> np.ndarray:
        extra = [getattr(orbit, name) for name in self.free]
        return np.concatenate([orbit.y, orbit.v, [orbit.period], extra])

    def orbit(self, Z, **kw) -> PlanarOrbit:
        nn = self.nn
        pr = self.params(Z)
        return PlanarOrbit(self.mesh, Z[:nn].copy(), Z[nn:2 * nn].copy(), float(Z[self.n]),
                           pr["p"], pr["q"], self.b, degree=self.degree, **kw)

    def _lower(self, Z):
        x = Z[: self.n]
        return np.concatenate([[self._phase_w @ x - self._phase_c],
                               [r @ x - c.target for r, c in zip(self._cond_rows, self.conditions)]])

    def residual(self, Z) -> np.ndarray:
        return self.jacobian_parts(Z, jac=False)

    def jacobian_parts(self, Z, jac: bool = True):
        nn, n = self.nn, self.n
        y, v, T = Z[:nn], Z[nn:n], Z[n]
        if not T > 0:
            raise ConvergenceError("period became non-positive")
        pr = self.params(Z)
        nvf = self.vf.numeric(pr["p"], pr["q"], self.b)
        By, Bv = self.B @ y, self.B @ v
        Fc = nvf.F(By, Bv)
        F = np.concatenate([self.D @ y - T * Bv, self.D @ v - T * Fc, self._lower(Z)])
        if not jac:
            return F
        Fy = sps.diags(nvf.dF(By, Bv, 1, 0)) @ self.B
        Fv = sps.diags(nvf.dF(By, Bv, 0, 1)) @ self.B
        top = sps.bmat([[self.D, -T * self.B], [-T * Fy, self.D - T * Fv]])
        cols = [np.concatenate([-Bv, -Fc])]
        for name in self.free:
            dF = self.vf.numeric(pr["p"], pr["q"], self.b, d=name).F(By, Bv)
            cols.append(np.concatenate([np.zeros(nn), -T * dF]))
        top = sps.hstack([top, sps.csr_matrix(np.column_stack(cols))])
        k = len(self.free)
        lower = [np.concatenate([self._phase_w, np.zeros(1 + k)])]
        lower += [np.concatenate([r, np.zeros(1 + k)]) for r in self._cond_rows]
        J = sps.vstack([top, sps.csr_matrix(np.array(lower))]).tocsc()
        return F, J

    def scale(self, Z) -> np.ndarray:
        s = np.ones(self.n + 1 + len(self.conditions))
        s[: self.n] = 1.0 / Z[self.n]
        return s


def planar_hopf_orbit(vf: PlanarVF, p: float, b: float, amplitude: float, N: int = 40,
                      tol: float = 1e-10) -> PlanarOrbit:
    """Orbit of peak ``y = amplitude`` born at the Hopf point, solved with ``q`` free."""
    qh = hopf_q(vf, p, b)
    if qh is None:
        raise PreconditionError(f"no Hopf point at p={p}, b={b}")
    fy, _ = vf.linear_part(p, qh, b)
    omega = math.sqrt(-fy)
    mesh = uniform_mesh(N)
    s = np.linspace(0.0, 1.0, N * DEGREE, endpoint=False)
    guess = PlanarOrbit(mesh, amplitude * np.cos(2 * np.pi * s),
                        -amplitude * omega * np.sin(2 * np.pi * s), 2 * math.pi / omega, p, qh, b)
    return solve_planar(vf, guess, free=("q",), phase="pin", conditions=[Condition(0.0, amplitude)],
                        tol=tol)


def solve_planar(vf: PlanarVF, guess: PlanarOrbit, free=(), phase: str = "integral",
                 conditions=(), tol: float = 1e-10, maxit: int = 15, extra=None) -> PlanarOrbit:
    """Newton-converged planar orbit near ``guess``; ``free`` balances ``conditions`` (and ``extra``)."""
    sysm = PlanarSystem(vf, guess.mesh, guess.p, guess.q, guess.b, free, phase,
                        guess.y if phase == "integral" else None, conditions, guess.degree)
    Z, r, _ = newton(sysm, sysm.pack(guess), tol=tol, maxit=maxit, min_value=None,
                     extra=extra(sysm) if extra is not None else None)
    po = sysm.orbit(Z, residual=r)
    if po.amplitude < COLLAPSE_RATIO * guess.amplitude:
        raise ConvergenceError("Newton collapsed onto the equilibrium", residual=r)
    return po


# --------------------------------------------------------------------------
# criticality, folds and the sweep

AMPLITUDE_FRACTIONS = np.linspace(0.02, 0.1, 6)


def planar_criticality(vf: PlanarVF, p: float, b: float, fractions=AMPLITUDE_FRACTIONS,
                       min_r2: float = 0.99) -> dict:
    """Fit ``q - q_H = c2*A**2 + c4*A**4`` over small Hopf orbits with peak ``A = f*|p|``.

    The trace at the origin grows with ``q``, so ``c2 > 0`` means orbits
    coexist with the unstable focus (supercritical) and ``c2 < 0`` is
    subcritical.
    """
    qh = hopf_q(vf, p, b)
    if qh is None:
        raise PreconditionError(f"no Hopf point at p={p}, b={b}")
    amps = np.asarray(fractions, dtype=float) * abs(p)
    po = planar_hopf_orbit(vf, p, b, float(amps[0]))
    half, dq = [], []
    for A in amps:
        po = solve_planar(vf, po, free=("q",), phase="pin", conditions=[Condition(0.0, float(A))])
        half.append(0.5 * po.amplitude)
        dq.append(po.q - qh)
    A2 = np.asarray(half) ** 2
    X = np.column_stack([A2, A2 * A2])
    y = np.asarray(dq)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - X @ coef) ** 2)) / ss if ss > 0 else 1.0
    return {"p": p, "b": b, "q": qh, "c2": float(coef[0]), "c4": float(coef[1]), "r2": r2,
            "accepted": r2 >= min_r2}


def refine_planar_fold(vf: PlanarVF, po: PlanarOrbit, tol: float = 1e-10):
    """Fold of planar orbits at fixed ``p``: Newton on the collocation system plus ``g = 0``.

    Returns the orbit and the residual of the extended system.
    """
    from .continuation import FoldCondition

    sysm = PlanarSystem(vf, po.mesh, po.p, po.q, po.b, ("q",), "integral", po.y)
    Z = sysm.pack(po)
    cond = FoldCondition(sysm, Z)
    Z, _, _ = newton(sysm, Z, tol=tol, extra=cond, min_value=None, maxit=20)
    cond.update(Z)
    res = sysm.residual(Z) * sysm.scale(Z)
    r = max(float(np.max(np.abs(res))), abs(cond.solve(Z)[2]))
    return sysm.orbit(Z, residual=r), r


def planar_fold_branch(vf: PlanarVF, p: float, b: float, start: float = 0.1, growth: float = 1.15,
                       max_amplitude: float = 0.8, period_factor: float = 3.0) -> dict:
    """Follow the Hopf branch at fixed ``p`` in the peak value ``A`` and locate its folds in ``q``.

    The branch stops when the period exceeds ``period_factor`` times the
    Hopf period (approach to a homoclinic loop), at ``max_amplitude`` or on
    a Newton failure. Each sign change of ``dq/dA`` is refined.
    """
    A = start * abs(p)
    po = planar_hopf_orbit(vf, p, b, A)
    T0 = po.period
    samples = [po]
    status = "MAX_AMPLITUDE"
    while True:
        A *= growth
        if A > max_amplitude:
            break
        try:
            nxt = solve_planar(vf, samples[-1], free=("q",), phase="pin", conditions=[Condition(0.0, A)])
        except (ConvergenceError, NumericalError) as exc:
            status = "NEWTON_FAILED"
            log.debug("planar branch stopped at A=%.3g: %s", A, exc)
            break
        samples.append(nxt)
        if nxt.period > period_factor * T0:
            status = "PERIOD_LIMIT"
            break
    qs = np.array([o.q for o in samples])
    dq = np.diff(qs)
    folds = []
    for k in range(1, len(dq)):
        if dq[k - 1] * dq[k] < 0:
            try:
                fo, r = refine_planar_fold(vf, samples[k])
            except (ConvergenceError, NumericalError) as exc:
                log.debug("planar fold refinement failed near sample %d: %s", k, exc)
                continue
            folds.append({"orbit": fo, "residual": r, "index": k})
    return {"samples": samples, "folds": folds, "status": status}


def planar_gh(vf: PlanarVF, b: float, bracket: tuple, tol: float = 1e-5) -> dict:
    """Generalized Hopf point on the planar Hopf curve: bisection in ``p`` on the sign of ``c2``."""
    lo, hi = sorted(map(float, bracket))
    if not hi < 0:
        raise ArgumentError("the bracket must lie in p < 0")

    def sign(p):
        c = planar_criticality(vf, p, b)
        if not c["accepted"]:
            raise NumericalError(f"criticality fit rejected at p={p} (R^2={c['r2']:.4f})")
        return math.copysign(1.0, c["c2"])

    s_lo, s_hi = sign(lo), sign(hi)
    if s_lo == s_hi:
        raise PreconditionError("criticality has no sign change over the bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if sign(mid) == s_lo:
            lo = mid
        else:
            hi = mid
    p = 0.5 * (lo + hi)
    return {"b": b, "p": p, "q": hopf_q(vf, p, b)}


def default_p_grid(p_min: float = -0.25, p_max: float = -0.005, n: int = 16) -> np.ndarray:
    """Grid in ``p < 0``, geometrically refined towards ``p = 0``."""
    return -np.geomspace(-p_min, -p_max, n)


def sweep_section(vf: PlanarVF, b: float, p_grid=None, q_grid=None, folds: bool = True,
                  gh_tol: float = 1e-5) -> list:
    """Rows ``(b, p, q, object, summary)`` for one ``b``: H, Z and F samples and GH points."""
    p_grid = default_p_grid() if p_grid is None else np.asarray(p_grid, dtype=float)
    q_grid = np.linspace(-0.01, 0.01, 5) if q_grid is None else q_grid
    rows = []
    signs = []
    for p in p_grid:
        qh = hopf_q(vf, p, b)
        if qh is None:
            continue
        rows.append((b, float(p), qh, "H", None))
        try:
            c = planar_criticality(vf, p, b)
            signs.append((float(p), math.copysign(1.0, c["c2"]) if c["accepted"] else 0.0))
        except (ConvergenceError, NumericalError, PreconditionError) as exc:
            log.debug("criticality failed at b=%.3g p=%.3g: %s", b, p, exc)
            signs.append((float(p), 0.0))
        if folds and signs[-1][1] < 0:
            try:
                br = planar_fold_branch(vf, p, b)
            except (ConvergenceError, NumericalError, PreconditionError) as exc:
                log.debug("fold branch failed at b=%.3g p=%.3g: %s", b, p, exc)
                continue
            for f in br["folds"]:
                o = f["orbit"]
                rows.append((b, float(p), o.q, "F", dict(o.summary(), residual=f["residual"])))
    for (p0, s0), (p1, s1) in zip(signs, signs[1:]):
        if s0 and s1 and s0 != s1:
            try:
                g = planar_gh(vf, b, (p0, p1), tol=gh_tol)
                rows.append((b, g["p"], g["q"], "GH", None))
            except (ConvergenceError, NumericalError, PreconditionError) as exc:
                log.debug("GH bisection failed at b=%.3g: %s", b, exc)
    for q in q_grid:
        rows.append((b, 0.0, float(q), "Z", None))
    return rows


def _section_job(args):
    vf_dict, b, p_grid, folds = args
    return sweep_section(PlanarVF.from_dict(vf_dict), b, p_grid, folds=folds)


def planar_bifurcation_sweep(vf: PlanarVF, b_grid=None, p_grid=None, folds: bool = True,
                             workers: int = 1) -> dict:
    """H, F, GH and Z samples over a grid of ``b`` sections (independent, optionally in parallel)."""
    if vf.order < 5:
        raise PreconditionError("the sweep needs a vector field of order at least 5")
    b_grid = np.round(np.arange(0.25, 0.45 + 1e-9, 0.01), 10) if b_grid is None else b_grid
    jobs = [(vf.to_dict(), float(b), p_grid, folds) for b in b_grid]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            sections = list(ex.map(_section_job, jobs))
    else:
        sections = [sweep_section(vf, float(b), p_grid, folds=folds) for b in b_grid]
    out = {"H": [], "F": [], "GH": [], "Z": []}
    for rows in sections:
        for row in rows:
            out[row[3]].append(row)
    return out


def extrapolate_gh(gh_rows, degree: int = 2, max_points: int = 6) -> float:
    """Fit ``b`` as a polynomial in ``p`` through the GH points nearest ``p = 0``; return ``b(0)``."""
    pts = sorted(((r[1], r[0]) for r in gh_rows), key=lambda t: -t[0])[:max_points]
    if len(pts) < degree + 1:
        raise PreconditionError(f"need at least {degree + 1} GH points, got {len(pts)}")
    p, b = np.array(pts).T
    return float(np.polyval(np.polyfit(p, b, degree), 0.0))


SWEEP_COLUMNS = ("b", "p", "q", "object", "period", "amplitude", "y_min", "y_max", "residual")


def write_sweep_csv(result: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for kind in ("H", "F", "GH", "Z"):
            for b, p, q, obj, summ in result[kind]:
                extra = [""] * 5 if summ is None else [
                    format(summ[k], ".17g") for k in ("period", "amplitude", "y_min", "y_max", "residual")]
                w.writerow([format(b, ".17g"), format(p, ".17g"), format(q, ".17g"), obj, *extra])
