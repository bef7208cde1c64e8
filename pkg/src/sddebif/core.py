"""Model definition, parameter transforms and closed-form loci.

The model is the scalar delay equation

    u'(t) = alpha*u(t) + beta*u(t - 1 - u(t - b)),

with the state-dependent delay ``1 + u(t - b)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ArgumentError

__all__ = [
    "Params",
    "ReducedParams",
    "PiecewisePolynomial",
    "HistorySegment",
    "to_reduced",
    "from_reduced",
    "hopf_point",
    "locus_L",
    "on_locus_L",
    "straightline_slope",
    "rhs",
]

# (alpha; beta) = (1; -1) + REDUCED_MATRIX @ (p; q)
REDUCED_MATRIX = np.array([[1.0 / 3.0, 0.5], [1.0 / 6.0, -0.5]])
_REDUCED_INV = np.linalg.inv(REDUCED_MATRIX)

L_TOL = 1e-10


@dataclass(frozen=True)
class Params:
    """A model point ``(alpha, beta, b)``."""

    alpha: float
    beta: float
    b: float = 0.0

    def __post_init__(self):
        if not self.b >= 0:
            raise ArgumentError(f"b must be >= 0, got {self.b}")

    @property
    def physical(self) -> bool:
        """Advisory flag for the physically relevant range ``alpha + beta < 0``."""
        return self.alpha + self.beta < 0

    def replace(self, **kw) -> "Params":
        d = {"alpha": self.alpha, "beta": self.beta, "b": self.b}
        d.update(kw)
        return Params(**d)

    def get(self, name: str) -> float:
        return getattr(self, name)

    def as_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "b": self.b}


@dataclass(frozen=True)
class ReducedParams:
    """Unfolding parameters ``(p, q)`` centred at the double-zero point."""

    p: float
    q: float


def to_reduced(params: Params) -> ReducedParams:
    """Map ``(alpha, beta)`` to the unfolding parameters ``(p, q)``.

    The map is affine with ``(1, -1) -> (0, 0)``; the line ``alpha + beta = 0``
    becomes ``p = 0`` and the Hopf curve leaves the double-zero point tangent
    to ``q = 0``.
    """
    d = np.array([params.alpha - 1.0, params.beta + 1.0])
    p, q = _REDUCED_INV @ d
    return ReducedParams(float(p), float(q))


def from_reduced(rp: ReducedParams, b: float = 0.0) -> Params:
    a, c = REDUCED_MATRIX @ np.array([rp.p, rp.q])
    return Params(1.0 + float(a), -1.0 + float(c), b)


def hopf_point(theta: float) -> tuple[float, float]:
    """Point ``(theta*cot(theta), -theta*csc(theta))`` of the Hopf curve H.

    At this point the characteristic equation has the roots ``+-i*theta``.
    ``theta = 0`` returns the double-zero point ``(1, -1)``.
    """
    if not 0.0 <= theta < np.pi:
        raise ArgumentError(f"theta must lie in [0, pi), got {theta}")
    if theta < 1e-4:
        # series of the removable singularity
        t2 = theta * theta
        return 1.0 - t2 / 3.0 - t2 * t2 / 45.0, -1.0 - t2 / 6.0 - 7.0 * t2 * t2 / 360.0
    return float(theta / np.tan(theta)), float(-theta / np.sin(theta))


def locus_L(alpha: float, b: float) -> float:
    """Return ``beta*`` at which straight-line solutions ``u = k*t`` exist."""
    if not 0.0 <= b < 1.0:
        raise ArgumentError(f"locus L needs 0 <= b < 1, got {b}")
    if not 0.0 <= alpha <= 1.0:
        raise ArgumentError(f"locus L needs 0 <= alpha <= 1, got {alpha}")
    return -(1.0 - alpha * b) / (1.0 - b)


def on_locus_L(alpha: float, beta: float, b: float, tol: float = L_TOL) -> bool:
    """Membership test for L (slanted segment plus the half-line ``alpha = 0``)."""
    if not 0.0 <= b < 1.0:
        raise ArgumentError(f"locus L needs 0 <= b < 1, got {b}")
    if not (-tol <= alpha <= 1.0 + tol):
        return False
    on_segment = abs(beta + (1.0 - alpha * b) / (1.0 - b)) <= tol
    on_half_line = abs(alpha) <= tol and beta <= -1.0 / (1.0 - b) + tol
    return on_segment or on_half_line


def straightline_slope(alpha: float, b: float) -> float:
    """Slope ``k* = (1 - alpha)/(1 - alpha*b)`` of the straight-line orbit."""
    upper = 1.0 if b <= 1.0 else min(1.0, 1.0 / b)
    if not 0.0 <= alpha <= upper:
        raise ArgumentError(
            f"straight-line orbit needs 0 <= alpha <= min(1, 1/b); got alpha={alpha}, b={b}"
        )
    return (1.0 - alpha) / (1.0 - alpha * b)


def rhs(params: Params, u_now, u_delayed):
    """Right-hand side ``alpha*u(t) + beta*u(t - tau)``."""
    return params.alpha * u_now + params.beta * u_delayed


class PiecewisePolynomial:
    """Continuous piecewise polynomial in the local power basis.

    On ``[x[k], x[k+1]]`` the function is ``sum_j c[k, j] * (t - x[k])**j``.
    Evaluation left of ``x[0]`` or right of ``x[-1]`` extrapolates with the
    first or last piece.
    """

    def __init__(self, x, c):
        self.x = np.ascontiguousarray(x, dtype=float)
        self.c = np.ascontiguousarray(c, dtype=float)
        if self.c.ndim != 2 or self.c.shape[0] != len(self.x) - 1:
            raise ArgumentError("coefficient array must have shape (len(x)-1, degree+1)")

    @classmethod
    def constant(cls, value: float, t0: float, t1: float) -> "PiecewisePolynomial":
        return cls([t0, t1], [[float(value)]])

    @classmethod
    def from_callable(cls, fun: Callable, t0: float, t1: float, pieces: int = 64,
                      degree: int = 5) -> "PiecewisePolynomial":
        """Interpolate ``fun`` at Chebyshev points of each piece."""
        x = np.linspace(t0, t1, pieces + 1)
        k = np.arange(degree + 1)
        nodes = 0.5 * (1.0 - np.cos(np.pi * (k + 0.5) / (degree + 1)))
        V = np.vander(nodes, degree + 1, increasing=True)
        c = np.empty((pieces, degree + 1))
        for i in range(pieces):
            h = x[i + 1] - x[i]
            vals = np.array([fun(x[i] + h * s) for s in nodes], dtype=float)
            local = np.linalg.solve(V, vals)
            c[i] = local / h ** k
        return cls(x, c)

    @property
    def degree(self) -> int:
        return self.c.shape[1] - 1

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.x[0]), float(self.x[-1])

    def _index(self, t):
        idx = np.searchsorted(self.x, t, side="right") - 1
        return np.clip(idx, 0, len(self.x) - 2)

    def __call__(self, t, nu: int = 0):
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = self._index(t)
        dt = t - self.x[idx]
        c = self.c[idx]
        deg = self.degree
        out = np.zeros_like(t)
        for j in range(deg, nu - 1, -1):
            fac = 1.0
            for r in range(nu):
                fac *= j - r
            out = out * dt + fac * c[:, j]
        return float(out[0]) if scalar else out

    def derivative(self) -> "PiecewisePolynomial":
        deg = self.degree
        if deg == 0:
            return PiecewisePolynomial(self.x, np.zeros((len(self.x) - 1, 1)))
        k = np.arange(1, deg + 1)
        return PiecewisePolynomial(self.x, self.c[:, 1:] * k)

    def extend(self, other: "PiecewisePolynomial") -> "PiecewisePolynomial":
        """Concatenate ``other``, which must start where this one ends."""
        if abs(other.x[0] - self.x[-1]) > 1e-12 * max(1.0, abs(self.x[-1])):
            raise ArgumentError("pieces are not adjacent")
        deg = max(self.degree, other.degree)
        c1 = np.zeros((self.c.shape[0], deg + 1))
        c1[:, : self.c.shape[1]] = self.c
        c2 = np.zeros((other.c.shape[0], deg + 1))
        c2[:, : other.c.shape[1]] = other.c
        return PiecewisePolynomial(np.concatenate([self.x, other.x[1:]]), np.vstack([c1, c2]))

    def jumps(self, nu: int = 0) -> np.ndarray:
        """Jumps of the ``nu``-th derivative at interior breakpoints."""
        left = PiecewisePolynomial(self.x, self.c)
        xs = self.x[1:-1]
        if len(xs) == 0:
            return np.zeros(0)
        right_vals = left(xs, nu)
        idx = np.arange(len(xs))
        dt = xs - self.x[idx]
        c = self.c[idx]
        deg = self.degree
        lv = np.zeros(len(xs))
        for j in range(deg, nu - 1, -1):
            fac = 1.0
            for r in range(nu):
                fac *= j - r
            lv = lv * dt + fac * c[:, j]
        return right_vals - lv


@dataclass(frozen=True)
class HistorySegment:
    """Initial history on ``[-tau_max, 0]``."""

    poly: PiecewisePolynomial

    @property
    def tau_max(self) -> float:
        return -self.poly.domain[0]

    @classmethod
    def constant(cls, value: float, tau_max: float | None = None, b: float = 0.0) -> "HistorySegment":
        if tau_max is None:
            tau_max = default_tau_max(b, abs(value))
        return cls(PiecewisePolynomial.constant(value, -tau_max, 0.0))

    @classmethod
    def from_callable(cls, fun: Callable, tau_max: float, pieces: int = 64) -> "HistorySegment":
        return cls(PiecewisePolynomial.from_callable(fun, -tau_max, 0.0, pieces=pieces))

    def __call__(self, s, nu: int = 0):
        return self.poly(s, nu)

    def max_abs(self) -> float:
        s = np.linspace(-self.tau_max, 0.0, 2001)
        return float(np.max(np.abs(self.poly(s))))

    def covers(self, b: float) -> bool:
        """Whether every deviating argument of the first step lands in the domain."""
        return self.tau_max >= max(b, 1.0 + self.max_abs())


def default_tau_max(b: float, max_abs: float) -> float:
    return 1.0 + max(b, max_abs) + 0.5
