"""Characteristic roots of the zero equilibrium and analytic stability boundaries.

The linearisation about ``u = 0`` is ``x' = alpha*x(t) + beta*x(t-1)`` for any
``b``; its characteristic function is ``lambda - alpha - beta*exp(-lambda)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import Params, hopf_point
from .errors import ArgumentError

__all__ = ["CharRoot", "RootList", "char_fn", "char_fn_prime", "rightmost_roots",
           "hopf_theta_at", "cheb_generator"]

N_CHEB = 40
MERGE_TOL = 1e-6


@dataclass(frozen=True)
class CharRoot:
    value: complex
    multiplicity: int = 1

    @property
    def real(self) -> float:
        return self.value.real

    @property
    def imag(self) -> float:
        return self.value.imag


@dataclass
class RootList:
    """Rightmost characteristic roots; ``dropped`` counts failed refinements."""

    roots: list = field(default_factory=list)
    dropped: int = 0

    def __iter__(self):
        return iter(self.roots)

    def __len__(self):
        return len(self.roots)

    def __getitem__(self, i):
        return self.roots[i]

    @property
    def values(self) -> np.ndarray:
        return np.array([r.value for r in self.roots])


def char_fn(lam, params: Params):
    return lam - params.alpha - params.beta * np.exp(-lam)


def char_fn_prime(lam, params: Params):
    return 1.0 + params.beta * np.exp(-lam)


def cheb_generator(params: Params, n: int = N_CHEB) -> np.ndarray:
    """Chebyshev collocation of the generator of ``x' = alpha x + beta x(t-1)``.

    Nodes are Chebyshev extreme points mapped to ``[-1, 0]``; node 0 is
    ``theta = 0`` and carries the splicing condition.
    """
    k = np.arange(n + 1)
    xc = np.cos(np.pi * k / n)
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** k
    X = np.tile(xc, (n + 1, 1)).T
    dX = X - X.T
    D = np.outer(c, 1.0 / c) / (dX + np.eye(n + 1))
    D -= np.diag(D.sum(axis=1))
    D *= 2.0  # [-1, 1] -> [-1, 0]
    A = D.copy()
    A[0, :] = 0.0
    A[0, 0] = params.alpha
    A[0, n] += params.beta
    return A


def _newton(lam: complex, params: Params, tol=1e-14, maxit=100):
    for _ in range(maxit):
        f = char_fn(lam, params)
        df = char_fn_prime(lam, params)
        if df == 0:
            break
        step = f / df
        lam -= step
        if abs(step) <= tol * max(1.0, abs(lam)):
            return lam, True
    return lam, abs(char_fn(lam, params)) < 1e-10


def _newton_double(lam: complex, params: Params, tol=1e-15, maxit=60):
    # root of chi' (chi'' = -beta*exp(-lambda))
    for _ in range(maxit):
        f = char_fn_prime(lam, params)
        df = -params.beta * np.exp(-lam)
        if df == 0:
            break
        step = f / df
        lam -= step
        if abs(step) <= tol * max(1.0, abs(lam)):
            break
    return lam


def _clean(z: complex) -> complex:
    re, im = z.real, z.imag
    if abs(im) < 1e-13 * max(1.0, abs(re)):
        im = 0.0
    return complex(re, im)


def rightmost_roots(params: Params, n: int = 6, nodes: int = N_CHEB) -> RootList:
    """Return the ``n`` characteristic roots with largest real part.

    Seeds come from the eigenvalues of :func:`cheb_generator` and are refined
    by Newton's method on the characteristic function. Conjugate partners are
    always returned together, so the list may hold ``n + 1`` entries.
    """
    if n < 1:
        raise ArgumentError("n must be >= 1")
    seeds = np.linalg.eigvals(cheb_generator(params, nodes))
    seeds = seeds[np.argsort(-seeds.real)]
    # spurious eigenvalues of the discretisation have huge modulus
    seeds = seeds[np.abs(seeds) < 0.5 * nodes ** 2]
    refined = []
    dropped = 0
    for s in seeds[: 2 * n + 4]:
        if s.imag < -1e-8:
            continue
        lam, ok = _newton(complex(s), params)
        if not ok or not np.isfinite(lam):
            dropped += 1
            continue
        refined.append(_clean(lam))
    roots = _merge(refined, params)
    roots.sort(key=lambda r: (-r.value.real, abs(r.value.imag)))
    out = []
    for r in roots:
        if len(out) >= n:
            break
        out.append(r)
        if r.value.imag != 0.0:
            out.append(CharRoot(r.value.conjugate(), r.multiplicity))
    if dropped:
        warnings.warn(f"{dropped} characteristic-root candidates failed to converge")
    return RootList(out, dropped)


def _merge(cands, params: Params) -> list:
    roots: list[CharRoot] = []
    used = [False] * len(cands)
    for i, a in enumerate(cands):
        if used[i]:
            continue
        used[i] = True
        mult = 1
        val = a
        for j in range(i + 1, len(cands)):
            if used[j]:
                continue
            b = cands[j]
            mid = 0.5 * (a + b)
            if abs(a - b) < MERGE_TOL and abs(char_fn_prime(mid, params)) < MERGE_TOL:
                used[j] = True
                mult = 2
                val = _clean(_newton_double(mid, params))
            elif abs(a - b) < 1e-10:
                used[j] = True
        if mult == 1 and abs(char_fn_prime(val, params)) < MERGE_TOL:
            # the discretisation resolved only one copy of a double root
            mult = 2
            val = _clean(_newton_double(val, params))
        roots.append(CharRoot(val, mult))
    return roots


def hopf_theta_at(alpha: float, tol: float = 1e-15) -> float:
    """Solve ``theta*cot(theta) = alpha`` for ``theta`` in ``(0, pi)`` by bisection."""
    if not alpha < 1.0:
        raise ArgumentError(f"no Hopf frequency for alpha >= 1 (got {alpha})")
    lo, hi = 0.0, np.pi
    # theta*cot(theta) decreases from 1 to -inf on (0, pi)
    g = lambda th: hopf_point(th)[0] - alpha
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def hopf_theta_at_beta(beta: float, tol: float = 1e-15) -> float:
    """Solve ``-theta*csc(theta) = beta`` on ``(0, pi)``; needs ``beta < -1``."""
    if not beta < -1.0:
        raise ArgumentError(f"no Hopf frequency for beta >= -1 (got {beta})")
    lo, hi = 0.0, np.pi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hopf_point(mid)[1] > beta:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def is_stable(params: Params) -> bool:
    roots = rightmost_roots(params, 2)
    return roots[0].real < 0
