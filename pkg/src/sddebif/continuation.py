"""Continuation of periodic orbits in one and two parameters.

One-parameter branches use pseudo-arclength continuation (secant predictor,
Newton corrector on the collocation system bordered by the arclength
equation). Two-parameter curves follow folds of periodic orbits (curve F)
and orbits whose minimum equals -1 (locus M).
"""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .core import Params, hopf_point
from .errors import ArgumentError, ConvergenceError, NumericalError, PhysicalityError, PreconditionError
from .orbit import (N_MAX, Condition, OrbitSystem, PeriodicOrbit, adapt_mesh, floquet, newton,
                    orbit_metrics, solve_po)

__all__ = [
    "BranchPoint",
    "Event",
    "Branch",
    "Curve",
    "ContinuationOptions",
    "make_point",
    "start_from_hopf",
    "continue_po",
    "refine_fold",
    "fold_residual",
    "FoldCondition",
    "continue_fold",
    "continue_M",
    "criticality_indicator",
    "locate_GH",
    "scaling_diagnostics",
    "write_branch_csv",
    "write_curve_csv",
    "run_branches",
]

log = logging.getLogger(__name__)

PARAM_NAMES = ("alpha", "beta", "b")
MIN_FLOOR = 1e-6
PERIOD_CAP = 500.0
# orbits with min_u + 1 above this are not yet in a scaling regime
ASYMPTOTIC_MIN_GAP = 0.1
NA_GUARD = 1e-9
SMALL_FOLD_AMPLITUDE = 0.2


@dataclass
class ContinuationOptions:
    ds: float = 0.05
    ds_min: float = 1e-6
    ds_max: float = 10.0
    max_points: int = 400
    newton_tol: float = 1e-9
    newton_maxit: int = 10
    # corrector iterations below which the step grows
    newton_target: int = 5
    period_cap: float = PERIOD_CAP
    min_floor: float = MIN_FLOOR
    bounds: dict = field(default_factory=dict)
    remesh_every: int = 3
    mesh_tol: float = 3e-8
    floquet_k: int = 5
    stability: bool = True


@dataclass
class BranchPoint:
    params: Params
    orbit: PeriodicOrbit
    metrics: dict
    tests: dict

    @property
    def period(self) -> float:
        return self.orbit.period


@dataclass
class Event:
    interval: tuple
    kind: str
    params: Params
    orbit: PeriodicOrbit | None = None
    residual: float = float("nan")


@dataclass
class Branch:
    free: str
    points: list = field(default_factory=list)
    events: list = field(default_factory=list)
    status: str = "OPEN"

    def column(self, key: str) -> np.ndarray:
        out = []
        for pt in self.points:
            if key in PARAM_NAMES:
                out.append(pt.params.get(key))
            elif key == "period":
                out.append(pt.period)
            elif key in pt.metrics:
                out.append(pt.metrics[key])
            else:
                out.append(pt.tests[key])
        return np.asarray(out, dtype=float)

    def events_of(self, kind: str) -> list:
        return [e for e in self.events if e.kind == kind]


@dataclass
class Curve:
    """Two-parameter curve (F or M)."""

    kind: str
    free: tuple
    points: list = field(default_factory=list)
    endpoints: list = field(default_factory=list)
    cusps: list = field(default_factory=list)
    status: str = "OPEN"


def _fold_tf(fs) -> float:
    """Product of (mu - 1) over the nontrivial leading multipliers."""
    z = fs.nontrivial - 1.0
    if not np.all(np.isfinite(z)):
        return float("nan")
    if np.any(z == 0):
        return 0.0
    # phase and log-magnitude separately: huge multipliers on long orbits overflow the plain product
    phase = np.prod(z / np.abs(z))
    return float(np.real(phase) * np.exp(min(float(np.sum(np.log(np.abs(z)))), 700.0)))


def make_point(po: PeriodicOrbit, stability: bool = True, k: int = 5) -> BranchPoint:
    metrics = orbit_metrics(po)
    tests = {"min_plus_one": metrics["min_u"] + 1.0}
    if stability:
        fs = floquet(po, k=k)
        tests["fold_tf"] = _fold_tf(fs)
        tests["stability"] = fs.n_unstable
        tests["trivial_error"] = abs(fs.trivial - 1.0)
    else:
        tests["fold_tf"] = float("nan")
        tests["stability"] = -1
        tests["trivial_error"] = float("nan")
    return BranchPoint(po.params, po, metrics, tests)


def start_from_hopf(theta: float, free: str, b: float = 0.0, eps: float = 0.05,
                    fixed: dict | None = None) -> BranchPoint:
    """Small-amplitude orbit of amplitude ``eps`` born at the H point of angle ``theta``.

    The parameter ``free`` is solved for; the other takes its H value.
    """
    if free not in ("alpha", "beta"):
        raise ArgumentError("free must be 'alpha' or 'beta'")
    a, bt = hopf_point(theta)
    params = Params(a, bt, b)
    mesh = np.linspace(0.0, 1.0, 41)
    from .orbit import _node_positions

    s = _node_positions(mesh)
    guess = PeriodicOrbit(mesh, eps * np.cos(2 * np.pi * s), 2 * math.pi / theta, params)
    po = solve_po(params, guess, phase="pin", free=(free,), conditions=[Condition(0.0, eps)])
    return make_point(po)


# --------------------------------------------------------------------------
# generic arclength machinery


class _Track:
    """Unknown layout ``[x, T, *free]`` for a fixed mesh and fixed base parameters."""

    def __init__(self, free: tuple, base: Params):
        self.free = tuple(free)
        self.base = base

    def pack(self, po: PeriodicOrbit) -> np.ndarray:
        return np.concatenate([po.values, [po.period], [po.params.get(k) for k in self.free]])

    def orbit(self, mesh, Z, **kw) -> PeriodicOrbit:
        n = len(Z) - 1 - len(self.free)
        p = self.base.replace(**{k: float(Z[n + 1 + i]) for i, k in enumerate(self.free)})
        return PeriodicOrbit(mesh, Z[:n].copy(), float(Z[n]), p, **kw)

    def weights(self, n: int, T: float) -> np.ndarray:
        # profile weighted 1/sqrt(n) in the norm, period relative to its size
        w = np.ones(n + 1 + len(self.free))
        w[:n] = 1.0 / n
        w[n] = 1.0 / max(1.0, T) ** 2
        return w


def _secant(Z1, Z0, w) -> np.ndarray:
    d = Z1 - Z0
    nrm = math.sqrt(float(np.sum(w * d * d)))
    if nrm == 0.0:
        raise NumericalError("zero secant")
    return d / nrm


def _initial_tangent(system: OrbitSystem, Z, w, free_index: int, direction: float, extra_rows=None):
    """Null vector of the (underdetermined) Jacobian, oriented along ``direction``."""
    F, J = system.jacobian_parts(Z)
    rows = [J]
    if extra_rows is not None:
        rows.append(sps.csr_matrix(extra_rows))
    e = np.zeros(len(Z))
    e[free_index] = 1.0
    A = sps.vstack(rows + [sps.csr_matrix(e)]).tocsc()
    rhs = np.zeros(A.shape[0])
    rhs[-1] = 1.0
    t = spla.splu(A).solve(rhs)
    t /= math.sqrt(float(np.sum(w * t * t)))
    return t * math.copysign(1.0, direction)


def _arclength_row(Zp, t, w):
    wt = w * t

    def extra(Z):
        return np.array([float(wt @ (Z - Zp))]), wt[None, :]

    return extra


def _stack_extra(*fns):
    fns = [f for f in fns if f is not None]

    def extra(Z):
        vals, rows = zip(*(f(Z) for f in fns))
        return np.concatenate(vals), np.vstack(rows)

    return extra


def _remesh_pair(po_new: PeriodicOrbit, po_old: PeriodicOrbit, tol: float):
    target = adapt_mesh(po_new, tol=tol)
    return target, po_old.on_mesh(target.mesh)


# --------------------------------------------------------------------------
# fold conditions


class FoldCondition:
    """Minimally extended fold condition ``g = 0`` from a bordered system.

    ``J_xT`` is the Jacobian of collocation and phase rows with respect to
    profile and period. ``g`` vanishes where ``J_xT`` is singular. Works
    with any system exposing ``n``, ``jacobian_parts`` and ``scale``.
    """

    def __init__(self, system, Z):
        self.system = system
        self.n1 = system.n + 1
        F, J = system.jacobian_parts(Z)
        A = J[:, : self.n1].tocsc()
        # bordering vectors from a smallest singular direction estimate
        lu = spla.splu(A)
        rng = np.random.default_rng(0)
        v = rng.standard_normal(self.n1)
        u = rng.standard_normal(self.n1)
        for _ in range(4):
            v = lu.solve(v)
            v /= np.linalg.norm(v)
            u = lu.solve(u, trans="T")
            u /= np.linalg.norm(u)
        self.bvec = u
        self.cvec = v

    def _bordered(self, A):
        n1 = self.n1
        top = sps.hstack([A, sps.csr_matrix(self.bvec[:, None])])
        bot = sps.csr_matrix(np.append(self.cvec, 0.0)[None, :])
        return spla.splu(sps.vstack([top, bot]).tocsc())

    def solve(self, Z):
        F, J = self.system.jacobian_parts(Z)
        scale = self.system.scale(Z)
        J = sps.diags(scale) @ J
        A = J[:, : self.n1].tocsc()
        lu = self._bordered(A)
        rhs = np.zeros(self.n1 + 1)
        rhs[-1] = 1.0
        vg = lu.solve(rhs)
        wg = lu.solve(rhs, trans="T")
        return vg[:-1], wg[:-1], float(vg[-1]), J

    def __call__(self, Z):
        v, w, g, J = self.solve(Z)
        eps = 1e-7 * (1.0 + np.linalg.norm(Z[: self.n1])) / max(np.linalg.norm(v), 1e-300)
        Zp = Z.copy()
        Zp[: self.n1] += eps * v
        _, Jp = self.system.jacobian_parts(Zp)
        Jp = sps.diags(self.system.scale(Zp)) @ Jp
        grad = -((Jp.T @ w) - (J.T @ w)) / eps
        return np.array([g]), grad[None, :]

    def update(self, Z):
        v, w, g, _ = self.solve(Z)
        self.cvec = v / np.linalg.norm(v)
        self.bvec = w / np.linalg.norm(w)


def fold_residual(po: PeriodicOrbit) -> float:
    """Rank-deficiency indicator ``|g|`` of the period/profile Jacobian at ``po``."""
    sysm = OrbitSystem(po.mesh, po.params, (), "integral", po.values)
    Z = np.concatenate([po.values, [po.period]])
    cond = FoldCondition(sysm, Z)
    cond.update(Z)
    return abs(cond.solve(Z)[2])


def refine_fold(po: PeriodicOrbit, free: str, tol: float = 1e-9) -> tuple[PeriodicOrbit, float]:
    """Newton on the collocation system extended by the fold condition."""
    sysm = OrbitSystem(po.mesh, po.params, (free,), "integral", po.values)
    Z = sysm.pack(po)
    cond = FoldCondition(sysm, Z)
    Z, r, it = newton(sysm, Z, tol=tol, extra=cond, maxit=15)
    cond.update(Z)
    g = abs(cond.solve(Z)[2])
    return sysm.orbit(Z, residual=r, newton_steps=it), g


def _refine_M(po: PeriodicOrbit, free: tuple, extra=None, tol: float = 1e-9) -> PeriodicOrbit:
    """Orbit with minimum exactly -1: pin the minimum at s = 0 and impose x(0) = -1."""
    m = orbit_metrics(po)
    shifted = po.shifted(m["s_min"])
    conds = [Condition(0.0, -1.0)]
    sysm = OrbitSystem(shifted.mesh, shifted.params, tuple(free), "pin", None, conds)
    Z = sysm.pack(shifted)
    Z[0] = -1.0
    Z, r, it = newton(sysm, Z, tol=tol, extra=extra, min_value=-1.05)
    return sysm.orbit(Z, residual=r, newton_steps=it)


def _refine_period(po: PeriodicOrbit, free: str, cap: float, tol: float = 1e-9) -> PeriodicOrbit:
    sysm = OrbitSystem(po.mesh, po.params, (free,), "integral", po.values)
    n = sysm.n

    def extra(Z):
        row = np.zeros((1, len(Z)))
        row[0, n] = 1.0 / cap
        return np.array([(Z[n] - cap) / cap]), row

    Z, r, it = newton(sysm, sysm.pack(po), tol=tol, extra=extra)
    return sysm.orbit(Z, residual=r, newton_steps=it)


# --------------------------------------------------------------------------
# one-parameter continuation


def _in_bounds(params: Params, bounds: dict) -> bool:
    for k, (lo, hi) in bounds.items():
        v = params.get(k)
        if v < lo or v > hi:
            return False
    return True


def continue_po(start, free: str, direction: float = 1.0, opts: ContinuationOptions | None = None,
                **kw) -> Branch:
    """Pseudo-arclength continuation of periodic orbits in ``free``.

    ``start`` is a BranchPoint or a converged PeriodicOrbit. Stops at the
    period cap, when the minimum reaches ``-1 + min_floor`` (M_HIT), on
    leaving ``bounds`` or after ``max_points`` points. Folds are detected by
    a sign change of the ``free`` component of the secant and refined with
    the extended fold system. From a small-amplitude start next to H the
    first step always grows the orbit, whatever ``direction`` says.
    """
    if free not in PARAM_NAMES:
        raise ArgumentError(f"unknown parameter {free!r}")
    opts = replace(opts or ContinuationOptions(), **kw)
    if isinstance(start, PeriodicOrbit):
        start = make_point(start, opts.stability, opts.floquet_k)
    branch = Branch(free)
    branch.points.append(start)
    hopf_start = start.metrics["amplitude"] < 0.2
    if hopf_start:
        branch.events.append(Event((0, 0), "HOPF_START", start.params, start.orbit))
    track = _Track((free,), start.params)

    po = adapt_mesh(start.orbit, tol=opts.mesh_tol)
    po = solve_po(po.params, po, tol=opts.newton_tol)
    n = len(po.values)
    w = track.weights(n, po.period)
    sysm = OrbitSystem(po.mesh, po.params, (free,), "integral", po.values)
    Z = track.pack(po)
    tangent = _initial_tangent(sysm, Z, w, n + 1, direction)
    if hopf_start and float(Z[:n] @ tangent[:n]) < 0:
        # stepping towards H would cross the equilibrium and fake a fold
        tangent = -tangent
    prev_Z = None
    ds = opts.ds
    failures = 0
    since_remesh = 0
    mesh = po.mesh
    last_secant_sign = math.copysign(1.0, tangent[n + 1])

    while len(branch.points) < opts.max_points:
        Zp = Z + ds * tangent
        sysm = OrbitSystem(mesh, track.base, (free,), "integral", Z[:n])
        try:
            Zn, r, it = newton(sysm, Zp, tol=opts.newton_tol, maxit=opts.newton_maxit,
                               extra=_arclength_row(Zp, tangent, w))
        except PhysicalityError:
            hit = _try_M_hit(branch, track, mesh, Z, free, tangent, opts)
            if hit:
                return branch
            ds *= 0.5
            failures += 1
            if ds < opts.ds_min or failures >= 3 and ds <= 4 * opts.ds_min:
                branch.status = "TRUNCATED"
                return branch
            continue
        except (ConvergenceError, np.linalg.LinAlgError):
            ds *= 0.5
            failures += 1
            if ds < opts.ds_min:
                if failures >= 3:
                    branch.status = "TRUNCATED"
                    log.info("branch truncated after %d failures", failures)
                    return branch
                ds = opts.ds_min
            continue
        failures = 0
        log.debug("step ds=%.3g it=%d", ds, it)
        new_po = track.orbit(mesh, Zn, residual=r, newton_steps=it)
        try:
            pt = make_point(new_po, opts.stability, opts.floquet_k)
        except NumericalError as exc:
            log.warning("floquet failed: %s", exc)
            pt = make_point(new_po, False)
        idx = len(branch.points)
        branch.points.append(pt)
        prev_Z, Z = Z, Zn
        w = track.weights(n, Z[n])
        tangent = _secant(Z, prev_Z, w)
        sign = math.copysign(1.0, tangent[n + 1])
        if sign != last_secant_sign:
            _record_fold(branch, idx, free, opts)
        last_secant_sign = sign

        if new_po.period >= opts.period_cap:
            try:
                capped = _refine_period(new_po, free, opts.period_cap)
                cp = make_point(capped, opts.stability, opts.floquet_k)
                branch.points[-1] = cp
            except (ConvergenceError, PhysicalityError):
                cp = pt
            branch.events.append(Event((idx - 1, idx), "PERIOD_CAP", cp.params, cp.orbit))
            branch.status = "PERIOD_CAP"
            return branch
        if pt.tests["min_plus_one"] <= opts.min_floor:
            if not _try_M_hit(branch, track, mesh, prev_Z, free, tangent, opts, replace_last=True):
                branch.events.append(Event((idx - 1, idx), "M_HIT", pt.params, pt.orbit))
                branch.status = "M_HIT"
            return branch
        if not _in_bounds(pt.params, opts.bounds):
            branch.status = "BOUNDS"
            return branch

        # step control
        if it <= opts.newton_target:
            ds = min(ds * 1.5, opts.ds_max)
        elif it >= opts.newton_target + 3:
            ds = max(ds * 0.6, opts.ds_min)

        since_remesh += 1
        target_N = adapt_mesh(new_po, tol=opts.mesh_tol).N
        if since_remesh >= opts.remesh_every or abs(target_N - len(mesh) + 1) > 0.2 * (len(mesh) - 1):
            new_mesh_po, old_on_new = _remesh_pair(new_po, track.orbit(mesh, prev_Z), opts.mesh_tol)
            mesh = new_mesh_po.mesh
            n = len(new_mesh_po.values)
            Z = track.pack(new_mesh_po)
            prev_Z = track.pack(old_on_new)
            w = track.weights(n, Z[n])
            tangent = _secant(Z, prev_Z, w)
            since_remesh = 0
    branch.status = "MAX_POINTS"
    return branch


def _record_fold(branch: Branch, idx: int, free: str, opts: ContinuationOptions):
    # the turning point lies near the previous point
    cand = branch.points[idx - 1]
    try:
        po, g = refine_fold(cand.orbit, free, tol=opts.newton_tol)
        branch.events.append(Event((idx - 2, idx), "FOLD", po.params, po, g))
    except (ConvergenceError, PhysicalityError, NumericalError, RuntimeError) as exc:
        log.info("fold refinement failed: %s", exc)
        branch.events.append(Event((idx - 2, idx), "FOLD", cand.params, None))


def _try_M_hit(branch, track, mesh, Z, free, tangent, opts, replace_last=False) -> bool:
    """Locate the orbit with minimum -1 ahead of the last point; stop the branch on success."""
    n = len(Z) - 2
    last = track.orbit(mesh, Z)
    if orbit_metrics(last)["min_u"] + 1.0 > 0.05:
        return False
    try:
        hit = _refine_M(last, (free,), tol=opts.newton_tol)
    except (ConvergenceError, PhysicalityError):
        return False
    ahead = (hit.params.get(free) - last.params.get(free)) * tangent[n + 1]
    if ahead < -1e-12 and not replace_last:
        return False
    pt = make_point(hit, opts.stability, opts.floquet_k)
    idx = len(branch.points)
    if replace_last:
        branch.points[-1] = pt
        idx -= 1
    else:
        branch.points.append(pt)
    branch.events.append(Event((idx - 1, idx), "M_HIT", pt.params, pt.orbit, abs(pt.metrics["min_u"] + 1)))
    branch.status = "M_HIT"
    return True


# --------------------------------------------------------------------------
# two-parameter curves


def _two_param_run(kind: str, start_po: PeriodicOrbit, free: tuple, make_system, make_cond,
                   direction: float, opts: ContinuationOptions, stop) -> Curve:
    curve = Curve(kind, tuple(free))
    track = _Track(free, start_po.params)
    po = start_po
    mesh = po.mesh
    n = len(po.values)
    Z = track.pack(po)
    sysm = make_system(mesh, track.base, Z[:n])
    cond = make_cond(sysm, Z)
    w = track.weights(n, Z[n])
    cval, crow = cond(Z) if cond is not None else (None, None)
    tangent = _initial_tangent(sysm, Z, w, n + 1, direction, crow)
    curve.points.append(make_point(po, opts.stability, opts.floquet_k))
    ds = opts.ds
    failures = 0
    since_remesh = 0
    signs = [np.sign(tangent[n + 1:])]
    while len(curve.points) < opts.max_points:
        Zp = Z + ds * tangent
        sysm = make_system(mesh, track.base, Z[:n])
        if cond is not None:
            cond.system = sysm
        try:
            Zn, r, it = newton(sysm, Zp, tol=opts.newton_tol, maxit=opts.newton_maxit,
                               extra=_stack_extra(cond, _arclength_row(Zp, tangent, w)),
                               min_value=-1.05 if kind == "M" else -1.0)
        except (ConvergenceError, PhysicalityError, np.linalg.LinAlgError, RuntimeError) as exc:
            ds *= 0.5
            failures += 1
            if ds < opts.ds_min:
                if failures >= 3:
                    curve.status = "TRUNCATED"
                    curve.endpoints.append(("TRUNCATED", track.orbit(mesh, Z).params))
                    log.info("%s curve truncated: %s", kind, exc)
                    return curve
                ds = opts.ds_min
            continue
        failures = 0
        po = track.orbit(mesh, Zn, residual=r, newton_steps=it)
        try:
            pt = make_point(po, opts.stability, opts.floquet_k)
        except NumericalError:
            pt = make_point(po, False)
        curve.points.append(pt)
        prev_Z, Z = Z, Zn
        w = track.weights(n, Z[n])
        tangent = _secant(Z, prev_Z, w)
        if cond is not None and hasattr(cond, "update"):
            cond.update(Z)
        reason = stop(pt)
        if reason:
            curve.endpoints.append((reason, pt.params))
            curve.status = reason
            return curve
        signs.append(np.sign(tangent[n + 1:]))
        if len(signs) >= 3 and _is_cusp(signs):
            curve.cusps.append(pt.params)
        if not _in_bounds(pt.params, opts.bounds):
            curve.status = "BOUNDS"
            return curve
        if it <= opts.newton_target:
            ds = min(ds * 1.5, opts.ds_max)
        elif it >= opts.newton_target + 3:
            ds = max(ds * 0.6, opts.ds_min)
        since_remesh += 1
        if since_remesh >= opts.remesh_every:
            new_po, old_po = _remesh_pair(po, track.orbit(mesh, prev_Z), opts.mesh_tol)
            if kind == "M":
                # keep the pinned minimum on a mesh point
                new_po = po.on_mesh(new_po.mesh)
            mesh = new_po.mesh
            n = len(new_po.values)
            Z = track.pack(new_po)
            prev_Z = track.pack(old_po)
            w = track.weights(n, Z[n])
            tangent = _secant(Z, prev_Z, w)
            sysm = make_system(mesh, track.base, Z[:n])
            if cond is not None:
                cond = make_cond(sysm, Z)
            since_remesh = 0
    curve.status = "MAX_POINTS"
    return curve


def _is_cusp(signs) -> bool:
    """Both parameter components of the tangent reverse within the last two steps."""
    a, b, c = signs[-3], signs[-2], signs[-1]
    flips = (a != c)
    return bool(np.all(flips)) and bool(np.any(a != b) or np.any(b != c))


def continue_fold(start, free: tuple = ("alpha", "beta"), direction: float = 1.0,
                  opts: ContinuationOptions | None = None, fold_tol: float = 1e-6, **kw) -> Curve:
    """Curve F of folds of periodic orbits in two parameters.

    Ends when the minimum reaches -1 (MF), when the amplitude passes a
    minimum below ``SMALL_FOLD_AMPLITUDE`` (approach to GH or DZ), at the
    period cap or on leaving ``bounds``.
    """
    opts = replace(opts or ContinuationOptions(), **kw)
    po = start.orbit if isinstance(start, BranchPoint) else start
    if len(free) != 2:
        raise ArgumentError("continue_fold needs two free parameters")
    if fold_residual(po) > fold_tol:
        raise PreconditionError("start is not a fold point (fold residual too large)")

    def make_system(mesh, base, ref):
        return OrbitSystem(mesh, base, tuple(free), "integral", ref)

    def make_cond(sysm, Z):
        return FoldCondition(sysm, Z)

    amps = []

    def stop(pt):
        if pt.tests["min_plus_one"] <= opts.min_floor:
            return "MF"
        amps.append(pt.metrics["amplitude"])
        # passing GH the curve reflects, so a small-amplitude minimum ends it
        if amps[-1] < 1e-3 or len(amps) >= 2 and amps[-1] > amps[-2] and amps[-2] < SMALL_FOLD_AMPLITUDE:
            return "SMALL_AMPLITUDE"
        if pt.period >= opts.period_cap:
            return "PERIOD_CAP"
        return None

    return _two_param_run("F", po, free, make_system, make_cond, direction, opts, stop)


def continue_M(start, free: tuple = ("alpha", "beta"), direction: float = 1.0,
               opts: ContinuationOptions | None = None, **kw) -> Curve:
    """Locus M: orbits whose minimum equals -1, with both parameters free.

    The minimum is pinned at ``s* = 0`` (``x'(0) = 0``, ``x(0) = -1``); the
    phase freedom makes ``s*`` redundant as an unknown.
    """
    opts = replace(opts or ContinuationOptions(), **kw)
    po = start.orbit if isinstance(start, BranchPoint) else start
    if abs(orbit_metrics(po)["min_u"] + 1.0) > 1e-6:
        raise PreconditionError("start orbit minimum is not within 1e-6 of -1")
    m = orbit_metrics(po)
    po = po.shifted(m["s_min"])
    cond = [Condition(0.0, -1.0)]

    def make_system(mesh, base, ref):
        return OrbitSystem(mesh, base, tuple(free), "pin", None, cond)

    def stop(pt):
        if pt.period >= opts.period_cap:
            return "PERIOD_CAP"
        if pt.metrics["amplitude"] < 1e-3:
            return "SMALL_AMPLITUDE"
        return None

    return _two_param_run("M", po, free, make_system, lambda s, Z: None, direction, opts, stop)


# --------------------------------------------------------------------------
# generalized Hopf


AMPLITUDES = np.linspace(0.01, 0.05, 6)


def criticality_indicator(theta: float, b: float = 0.0, amplitudes=AMPLITUDES,
                          min_r2: float = 0.99) -> dict:
    """Fit ``beta - beta_H = c2*A**2 + c4*A**4`` over small orbits born at H(theta).

    ``c2 < 0`` means orbits exist where the equilibrium is unstable
    (supercritical); ``c2 > 0`` is subcritical.
    """
    a, bt = hopf_point(theta)
    pt = start_from_hopf(theta, "beta", b, eps=float(amplitudes[0]))
    po = pt.orbit
    amps, dbeta = [], []
    for A in amplitudes:
        po = solve_po(po.params, po, phase="pin", free=("beta",), conditions=[Condition(0.0, float(A))])
        amps.append(0.5 * float(np.ptp(po.values)))
        dbeta.append(po.params.beta - bt)
    A2 = np.asarray(amps) ** 2
    X = np.column_stack([A2, A2 * A2])
    y = np.asarray(dbeta)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    fit = X @ coef
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - fit) ** 2)) / ss if ss > 0 else 1.0
    return {"theta": theta, "alpha": a, "beta": bt, "c2": float(coef[0]), "c4": float(coef[1]),
            "r2": r2, "accepted": r2 >= min_r2}


def locate_GH(b: float, bracket: tuple, tol: float = 1e-4) -> tuple[float, float]:
    """Point on H where the sign of the criticality indicator changes, by bisection in theta."""
    lo, hi = map(float, bracket)
    if not 0.0 < lo < hi < math.pi:
        raise ArgumentError("bracket must satisfy 0 < lo < hi < pi")

    def sign(theta):
        ci = criticality_indicator(theta, b)
        if not ci["accepted"]:
            raise NumericalError(f"criticality fit rejected at theta={theta} (R^2={ci['r2']:.4f})")
        return math.copysign(1.0, ci["c2"])

    s_lo, s_hi = sign(lo), sign(hi)
    if s_lo == s_hi:
        raise PreconditionError("criticality indicator has no sign change over the bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        s_mid = sign(mid)
        if s_mid == s_lo:
            lo = mid
        else:
            hi = mid
    return hopf_point(0.5 * (lo + hi))


# --------------------------------------------------------------------------
# diagnostics and output


def scaling_diagnostics(branch: Branch, tail: int = 5) -> dict:
    """Rescaled period ``T*alpha/|1+beta|`` and amplitude ``A/(T*(1-alpha))`` per point.

    Entries within ``NA_GUARD`` of a singular denominator are NaN. The tail
    spread is ``(max - min)/|mean|`` over the last ``tail`` valid entries.
    The result is flagged PRE_ASYMPTOTIC when the last orbit is still far
    from the minimum -1 of the saw-tooth regime.
    """
    if len(branch.points) < 10:
        raise PreconditionError("scaling diagnostics need at least 10 branch points")
    T = branch.column("period")
    A = branch.column("amplitude")
    al = branch.column("alpha")
    be = branch.column("beta")
    den1 = np.abs(1.0 + be)
    den2 = T * (1.0 - al)
    period_scaled = np.where((den1 > NA_GUARD) & (np.abs(al) > NA_GUARD), T * np.abs(al) / np.maximum(den1, NA_GUARD), np.nan)
    amplitude_scaled = np.where(np.abs(1.0 - al) > NA_GUARD, A / np.where(np.abs(den2) > 0, den2, np.nan), np.nan)

    def spread(x):
        x = x[np.isfinite(x)][-tail:]
        if len(x) < tail:
            return float("nan")
        return float((x.max() - x.min()) / abs(x.mean()))

    def monotone(x):
        x = x[np.isfinite(x)][-tail:]
        d = np.diff(x)
        return bool(np.all(d >= 0) or np.all(d <= 0))

    flags = []
    if branch.points[-1].tests["min_plus_one"] > ASYMPTOTIC_MIN_GAP:
        flags.append("PRE_ASYMPTOTIC")
    return {
        "period_scaled": period_scaled,
        "amplitude_scaled": amplitude_scaled,
        "period_spread": spread(period_scaled),
        "amplitude_spread": spread(amplitude_scaled),
        "period_monotone": monotone(period_scaled),
        "amplitude_monotone": monotone(amplitude_scaled),
        "flags": flags,
    }


BRANCH_COLUMNS = ["index", "alpha", "beta", "b", "period", "amplitude", "min_u", "max_u",
                  "slope_est", "n_unstable", "fold_tf", "min_plus_one", "event"]
CURVE_COLUMNS = ["alpha", "beta", "b", "period", "s_star", "endpoint_kind"]


def _g17(x) -> str:
    return format(float(x), ".17g")


def write_branch_csv(branch: Branch, path) -> None:
    marks = {}
    for e in branch.events:
        marks.setdefault(e.interval[1], []).append(e.kind)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(BRANCH_COLUMNS)
        for i, pt in enumerate(branch.points):
            p, m, t = pt.params, pt.metrics, pt.tests
            wr.writerow([i, _g17(p.alpha), _g17(p.beta), _g17(p.b), _g17(m["T"]), _g17(m["amplitude"]),
                         _g17(m["min_u"]), _g17(m["max_u"]), _g17(m["slope_est"]), t["stability"],
                         _g17(t["fold_tf"]), _g17(t["min_plus_one"]), "|".join(marks.get(i, []))])
        for e in branch.events:
            if e.kind in ("FOLD",):
                p = e.params
                wr.writerow(["", _g17(p.alpha), _g17(p.beta), _g17(p.b),
                             _g17(e.orbit.period) if e.orbit is not None else "", "", "", "", "", "", "", "",
                             e.kind])
        if branch.status == "TRUNCATED":
            wr.writerow([""] * (len(BRANCH_COLUMNS) - 1) + ["TRUNCATED"])


def write_curve_csv(curve: Curve, path) -> None:
    ends = {id(p): k for k, p in curve.endpoints}
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(CURVE_COLUMNS)
        for i, pt in enumerate(curve.points):
            p = pt.params
            kind = ends.get(id(p), "")
            if not kind and i == len(curve.points) - 1:
                kind = curve.status
            wr.writerow([_g17(p.alpha), _g17(p.beta), _g17(p.b), _g17(pt.period),
                         _g17(pt.metrics["s_min"]) if curve.kind == "M" else "", kind])


def _run_job(job):
    kind, args, kwargs = job
    fn = {"branch": continue_po, "fold": continue_fold, "M": continue_M}[kind]
    return fn(*args, **kwargs)


def run_branches(jobs, workers: int = 1) -> list:
    """Run independent continuation jobs ``(kind, args, kwargs)``, optionally in processes."""
    jobs = list(jobs)
    if workers <= 1 or len(jobs) <= 1:
        return [_run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_run_job, jobs))
