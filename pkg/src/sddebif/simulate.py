"""Initial-value solver with dense output and breakpoint tracking.

The stepper is the Dormand-Prince 5(4) pair with its fourth-order continuous
extension. Steps are clipped at propagated derivative discontinuities, and
deviating arguments that land inside the current step are resolved by
fixed-point iteration on the step's own dense polynomial.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

from .core import HistorySegment, Params, PiecewisePolynomial
from .errors import ArgumentError, ConvergenceError, PreconditionError

__all__ = [
    "IntegratorOptions",
    "Trajectory",
    "integrate",
    "deviating_argument",
    "propagate_breakpoints",
]

_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
)
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# continuous extension: y(t + th*h) = y + h * sum_j (K @ _P)[j] * th**(j+1)
_P = np.array([
    [1.0, -2.8535800653862835, 3.0717434641059005, -1.1270175653862835],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 4.023133379230305, -6.249321565289, 2.675424484351598],
    [0.0, -3.7324019615885042, 10.068970589843675, -5.685526961588504],
    [0.0, 2.5548038301849423, -6.399112377351017, 3.5219323679207912],
    [0.0, -1.3744241142186024, 3.272657752246729, -1.7672812570757455],
    [0.0, 1.3824689317781436, -3.764937863556287, 2.382468931778144],
])

DEG = 5  # stored local degree (history pieces may use it fully)
MAX_GENERATION = 5
DEFECT_POINTS = (0.2, 0.5, 0.8)
DEFECT_SAFETY = 2.0


@dataclass
class IntegratorOptions:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = 0.1
    event_tol: float = 1e-10
    t_end: float = 10.0
    first_step: float = 1e-3

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0 and self.event_tol > 0 and self.max_step > 0):
            raise ArgumentError("tolerances and max_step must be positive")


@dataclass
class Trajectory:
    """Dense solution on ``[t0, t1]`` with the history kept for ``t < t0``."""

    params: Params
    history: HistorySegment
    t0: float
    xs: np.ndarray
    cs: np.ndarray
    breakpoints: list = field(default_factory=list)
    events: list = field(default_factory=list)
    n_steps: int = 0
    n_rejected: int = 0

    def __post_init__(self):
        self.poly = PiecewisePolynomial(self.xs, self.cs)

    @property
    def tspan(self) -> tuple[float, float]:
        return self.t0, float(self.xs[-1])

    @property
    def t1(self) -> float:
        return float(self.xs[-1])

    def __call__(self, t, nu: int = 0):
        t = np.asarray(t, dtype=float)
        lo = self.t0 - self.history.tau_max
        if np.any(t < lo - 1e-12) or np.any(t > self.t1 + 1e-12):
            raise ArgumentError(f"evaluation outside [{lo}, {self.t1}]")
        out = np.where(t < self.t0, self.history(np.minimum(t, self.t0), nu), self.poly(t, nu))
        return float(out) if out.ndim == 0 else out

    def derivative(self, t):
        return self(t, 1)

    def residual(self, t) -> np.ndarray:
        """``u'(t) - alpha*u(t) - beta*u(t - 1 - u(t - b))`` at the given times."""
        p = self.params
        t = np.atleast_1d(np.asarray(t, dtype=float))
        u = self(t)
        eta = t - 1.0 - self(t - p.b)
        return self(t, 1) - p.alpha * u - p.beta * self(eta)

    def sample(self, n: int = 1001):
        t = np.linspace(self.t0, self.t1, n)
        return t, self(t)


class _Dense:
    """Growing piecewise-polynomial store with fast scalar evaluation."""

    def __init__(self, history: HistorySegment, t0: float):
        self.hist = history
        self.t0 = t0
        self.lo = t0 - history.tau_max
        self.xs = [t0]
        self.cs: list = []
        # tentative polynomial of the step in progress
        self.trial = None

    def __call__(self, t: float) -> float:
        if t < self.t0:
            if t < self.lo - 1e-12:
                raise ArgumentError(f"deviating argument {t} left of history domain {self.lo}")
            return float(self.hist(t))
        if self.trial is not None and t >= self.trial[0]:
            return _horner(self.trial[1], t - self.trial[0])
        if not self.cs:
            # predictor inside the first step; the overlap iteration corrects it
            return float(self.hist(self.t0))
        i = bisect.bisect_right(self.xs, t) - 1
        i = min(max(i, 0), len(self.cs) - 1)
        return _horner(self.cs[i], t - self.xs[i])

    def append(self, t_next: float, c: np.ndarray):
        self.cs.append(c)
        self.xs.append(t_next)


def _horner(c, dt: float) -> float:
    out = 0.0
    for a in reversed(c):
        out = out * dt + a
    return out


def _step_poly(y0: float, K: np.ndarray, h: float) -> np.ndarray:
    Q = K @ _P
    c = np.zeros(DEG + 1)
    c[0] = y0
    hj = 1.0
    for j in range(4):
        c[j + 1] = Q[j] / hj
        hj *= h
    return c


def _rk_step(params: Params, dense: _Dense, t: float, y: float, h: float):
    alpha, beta, b = params.alpha, params.beta, params.b
    K = np.empty(7)
    ys = y
    delays = []
    for s in range(7):
        if s < 6:
            ts = t + _C[s] * h
            ys = y + h * sum(a * K[j] for j, a in enumerate(_A[s]))
        else:
            ts = t + h
            ys = y + h * float(_B[:6] @ K[:6])
        w = ys if b == 0.0 else dense(ts - b)
        eta = ts - 1.0 - w
        if eta > ts:
            eta = ts
        ud = ys if eta >= ts else dense(eta)
        delays.append(1.0 + w)
        K[s] = alpha * ys + beta * ud
    y_new = y + h * float(_B @ K)
    err = h * float(_E @ K)
    return y_new, err, K, min(delays)


def integrate(params: Params, history: HistorySegment, opts: IntegratorOptions | None = None,
              t0: float = 0.0) -> Trajectory:
    """Integrate ``u'(t) = alpha*u(t) + beta*u(t - 1 - u(t - b))`` from ``t0``.

    Stops early with a ``DELAY_ZERO`` event if ``1 + u(t - b)`` reaches zero.
    """
    opts = opts or IntegratorOptions()
    p = params
    u_b = float(history(-p.b)) if p.b > 0 else float(history(0.0))
    if 1.0 + u_b <= 0.0:
        raise PreconditionError(f"delay 1 + u(-b) = {1.0 + u_b} is not positive at the start")
    if -history.tau_max > min(-p.b, -1.0 - u_b) + 1e-12:
        raise PreconditionError("history domain does not cover the first deviating argument")
    dense = _Dense(history, t0)
    t = t0
    y = float(history(0.0))
    t_end = t0 + opts.t_end
    h = min(opts.first_step, opts.max_step, opts.t_end)
    # (time, generation)
    bps: list[tuple[float, int]] = [(t0, 0)]
    pending: list[float] = []
    events: list[tuple[float, str]] = []
    n_steps = n_rej = 0
    h_min_rel = 1e-13
    fails = 0
    while t < t_end - 1e-14 * max(1.0, abs(t_end)):
        h = min(h, opts.max_step, t_end - t)
        # clip at known constant-delay breakpoints
        nxt = bisect.bisect_right(pending, t + 1e-14)
        if nxt < len(pending) and pending[nxt] < t + h:
            h = pending[nxt] - t
        if h < h_min_rel * max(1.0, abs(t)):
            raise ConvergenceError("step size underflow", time=t)
        dense.trial = None
        y_new, err, K, dmin = _rk_step(p, dense, t, y, h)
        overlap = dmin < h or (0.0 < p.b < h)
        if overlap:
            # fixed-point iteration on the step polynomial
            ok = False
            for _ in range(10):
                dense.trial = (t, _step_poly(y, K, h))
                y2, err2, K2, dmin = _rk_step(p, dense, t, y, h)
                change = abs(y2 - y_new)
                y_new, err, K = y2, err2, K2
                if change <= 0.1 * (opts.abs_tol + opts.rel_tol * abs(y_new)):
                    ok = True
                    break
            dense.trial = None
            if not ok:
                h *= 0.5
                n_rej += 1
                continue
        scale = opts.abs_tol + opts.rel_tol * max(abs(y), abs(y_new))
        enorm = abs(err) / scale
        if enorm > 1.0 or not math.isfinite(y_new):
            fac = 0.9 * enorm ** -0.2 if math.isfinite(enorm) and enorm > 0 else 0.2
            h *= max(0.2, fac)
            n_rej += 1
            fails += 1
            continue
        c = _step_poly(y, K, h)
        # defect control keeps the dense output itself accurate, not just the step ends
        dnorm = _defect(p, dense, t, h, c) / (DEFECT_SAFETY * scale)
        if dnorm > 1.0:
            h *= max(0.2, 0.9 * dnorm ** -0.25)
            n_rej += 1
            continue
        # state-dependent breakpoint inside the step: shorten the step
        hit = _first_sd_breakpoint(p, dense, t, h, c, bps, opts.event_tol)
        if hit is not None and hit[0] < t + h - opts.event_tol:
            h = hit[0] - t
            continue
        dense.append(t + h, c)
        t_new = t + h
        n_steps += 1
        fails = 0
        if hit is not None:
            bps.append((t_new, hit[1]))
        for xi, gen in list(bps):
            if gen < MAX_GENERATION and p.b > 0:
                tb = xi + p.b
                if tb > t_new + 1e-14 and tb not in pending:
                    bisect.insort(pending, tb)
        if pending and abs(pending[0] - t_new) <= 1e-12 * max(1.0, abs(t_new)):
            gen = 1 + min((g for x, g in bps if abs(x + p.b - t_new) < 1e-9), default=0)
            if all(abs(x - t_new) > 1e-12 for x, _ in bps):
                bps.append((t_new, gen))
        pending = [x for x in pending if x > t_new + 1e-12 * max(1.0, abs(t_new))]
        # delay-zero event
        d_new = 1.0 + (dense(t_new - p.b) if p.b > 0 else y_new)
        if d_new <= 0.0:
            ts = _bisect_root(lambda s: 1.0 + dense(s - p.b), t, t_new, opts.event_tol)
            dense.xs[-1] = ts
            events.append((float(ts), "DELAY_ZERO"))
            t = ts
            y = _horner(c, ts - (t_new - h))
            break
        t, y = t_new, y_new
        fac = min(0.9 * enorm ** -0.2 if enorm > 0 else 5.0,
                  0.9 * dnorm ** -0.25 if dnorm > 0 else 5.0)
        h *= min(5.0, max(0.2, fac))
    cs = np.array(dense.cs) if dense.cs else np.zeros((1, DEG + 1))
    xs = np.array(dense.xs)
    if len(xs) < 2:
        xs = np.array([t0, t0])
        cs[0, 0] = y
    traj = Trajectory(params, history, t0, xs, cs, sorted(float(x) for x, _ in bps), events, n_steps, n_rej)
    return traj


def _defect(p: Params, dense: _Dense, t: float, h: float, c: np.ndarray) -> float:
    """Largest ``|u' - f|`` of the step polynomial at interior sample points."""
    dc = c[1:] * np.arange(1, len(c))
    dense.trial = (t, c)
    try:
        worst = 0.0
        for th in DEFECT_POINTS:
            dt = th * h
            s = t + dt
            u = _horner(c, dt)
            w = dense(s - p.b) if p.b > 0 else u
            eta = s - 1.0 - w
            ud = dense(eta) if eta < s else u
            worst = max(worst, abs(_horner(dc, dt) - p.alpha * u - p.beta * ud))
        return worst
    finally:
        dense.trial = None


def _first_sd_breakpoint(p: Params, dense: _Dense, t: float, h: float, c: np.ndarray,
                         bps: list, tol: float):
    """Earliest ``s`` in ``(t, t+h]`` with ``s - 1 - u(s - b)`` equal to a breakpoint."""
    dense.trial = (t, c)
    try:
        def g(s):
            w = dense(s - p.b) if p.b > 0 else _horner(c, s - t)
            return s - 1.0 - w

        g0, g1 = g(t), g(t + h)
        best = None
        for xi, gen in bps:
            if gen >= MAX_GENERATION:
                continue
            a, bb = g0 - xi, g1 - xi
            if a < 0.0 < bb or bb < 0.0 < a or (bb == 0.0 and a != 0.0):
                r = _bisect_root(lambda s: g(s) - xi, t, t + h, tol)
                if best is None or r < best[0]:
                    best = (r, gen + 1)
        return best
    finally:
        dense.trial = None


def _bisect_root(f, a: float, b: float, tol: float) -> float:
    a, b = float(a), float(b)
    fa = f(a)
    for _ in range(200):
        if b - a <= tol:
            break
        m = 0.5 * (a + b)
        fm = f(m)
        if (fm > 0) == (fa > 0) and fm != 0.0:
            a, fa = m, fm
        else:
            b = m
    return b


def deviating_argument(traj: Trajectory, t: float, params: Params) -> float:
    """``t - 1 - u(t - b)`` evaluated on the dense output."""
    return float(t - 1.0 - traj(t - params.b))


def propagate_breakpoints(traj: Trajectory, params: Params, horizon: float,
                          generations: int = MAX_GENERATION, tol: float = 1e-10) -> list:
    """Breakpoints up to ``horizon`` generated from ``traj.breakpoints``.

    A time ``t`` is added when ``t - b`` or ``t - 1 - u(t - b)`` equals an
    earlier breakpoint. Roots are bracketed on a fine grid and bisected on the
    dense output. The returned list includes the seed breakpoints.
    """
    t_hi = min(horizon, traj.t1)
    seeds = sorted(set(traj.breakpoints[:1] or [traj.t0]))
    found = list(seeds)
    frontier = list(seeds)
    grid = np.linspace(traj.t0, t_hi, max(200, int(400 * (t_hi - traj.t0)) + 1))
    lo = traj.t0 - traj.history.tau_max
    grid = grid[grid - params.b >= lo]
    if len(grid) == 0:
        return found
    dev = grid - 1.0 - traj(grid - params.b)
    for _ in range(generations):
        new = []
        for xi in frontier:
            if params.b > 0:
                tb = xi + params.b
                if traj.t0 <= tb <= t_hi:
                    new.append(tb)
            d = dev - xi
            idx = np.nonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0)[0]
            for i in idx:
                f = lambda s, xi=xi: s - 1.0 - traj(s - params.b) - xi
                new.append(_bisect_root(f, grid[i], grid[i + 1], tol))
            exact = np.nonzero(d == 0.0)[0]
            new.extend(grid[exact].tolist())
        new = [x for x in new if all(abs(x - y) > tol for y in found)]
        if not new:
            break
        new = sorted(new)
        dedup = [new[0]]
        for x in new[1:]:
            if x - dedup[-1] > tol:
                dedup.append(x)
        found.extend(dedup)
        frontier = dedup
    return sorted(float(x) for x in found)
