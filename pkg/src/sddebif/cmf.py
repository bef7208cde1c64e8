"""Exact centre-manifold expansion at the double-zero point ``(alpha, beta) = (1, -1)``.

All arithmetic is done in :class:`fractions.Fraction`; the delay ``b`` stays a
symbol, so every coefficient is a polynomial in ``b`` with rational
coefficients.

The manifold is expanded over ``z = (x1, x2, p, q)`` as

    h(z)(theta) = x1 + theta*x2 + sum_{j>=2} sum_{|m|=j} c_m(theta) z**m,

and the reduced vector field as ``dx/dt = J0 x + sum_m a_m z**m``. Each
monomial coefficient is fixed by one 3x3 system with the constant matrix
:data:`M_MATRIX` for ``(c_m(0), a_m)`` followed by an exact integration in
``theta``. Monomials of one order are swept in lexicographic order of their
non-decreasing index tuples, because the transport term ``x2*d/dx1`` couples
a monomial to its lexicographic predecessors only.
"""
from __future__ import annotations

import itertools
import json
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from math import factorial

__all__ = [
    "RationalPoly",
    "CmfExpansion",
    "basis_objects",
    "expand",
    "emit_planar_vf",
    "M_MATRIX",
    "J0",
    "second_order_check",
]

ZVARS = ("x1", "x2", "p", "q")
NZ = 4


class RationalPoly:
    """Sparse multivariate polynomial with exact rational coefficients.

    ``terms`` maps exponent tuples (one entry per variable in ``vars``) to
    :class:`~fractions.Fraction` coefficients; zero coefficients are never
    stored.
    """

    __slots__ = ("vars", "terms")

    def __init__(self, terms=None, vars=("theta", "b")):
        self.vars = tuple(vars)
        self.terms = {}
        if terms:
            for e, c in terms.items():
                c = Fraction(c)
                if c:
                    self.terms[tuple(e)] = c

    # construction -------------------------------------------------------
    @classmethod
    def const(cls, c, vars=("theta", "b")):
        return cls({(0,) * len(vars): c}, vars)

    @classmethod
    def var(cls, name, vars=("theta", "b")):
        e = [0] * len(vars)
        e[vars.index(name)] = 1
        return cls({tuple(e): 1}, vars)

    def _new(self, terms):
        p = RationalPoly.__new__(RationalPoly)
        p.vars = self.vars
        p.terms = terms
        return p

    def _coerce(self, other):
        if isinstance(other, RationalPoly):
            if other.vars != self.vars:
                raise ValueError(f"variable mismatch {self.vars} vs {other.vars}")
            return other
        return RationalPoly.const(other, self.vars)

    # arithmetic ---------------------------------------------------------
    def __add__(self, other):
        other = self._coerce(other)
        t = dict(self.terms)
        for e, c in other.terms.items():
            s = t.get(e, 0) + c
            if s:
                t[e] = s
            else:
                t.pop(e, None)
        return self._new(t)

    __radd__ = __add__

    def __neg__(self):
        return self._new({e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, RationalPoly):
            c = Fraction(other)
            if not c:
                return self._new({})
            return self._new({e: v * c for e, v in self.terms.items()})
        other = self._coerce(other)
        t = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                s = t.get(e, 0) + c1 * c2
                if s:
                    t[e] = s
                else:
                    t.pop(e, None)
        return self._new(t)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        out = RationalPoly.const(1, self.vars)
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, other):
        if isinstance(other, RationalPoly):
            return self.vars == other.vars and self.terms == other.terms
        return (self - other).is_zero()

    def __hash__(self):
        return hash((self.vars, frozenset(self.terms.items())))

    def is_zero(self) -> bool:
        return not self.terms

    # calculus ------------------------------------------------------------
    def diff(self, name: str) -> "RationalPoly":
        i = self.vars.index(name)
        t = {}
        for e, c in self.terms.items():
            if e[i]:
                ne = list(e)
                ne[i] -= 1
                t[tuple(ne)] = c * e[i]
        return self._new(t)

    def antiderivative(self, name: str) -> "RationalPoly":
        """Antiderivative in ``name`` vanishing at ``name = 0``."""
        i = self.vars.index(name)
        t = {}
        for e, c in self.terms.items():
            ne = list(e)
            ne[i] += 1
            t[tuple(ne)] = c / ne[i]
        return self._new(t)

    def subs(self, name: str, value) -> "RationalPoly":
        """Substitute a number or a polynomial (same variables) for ``name``."""
        i = self.vars.index(name)
        if not isinstance(value, RationalPoly):
            value = Fraction(value)
            t = {}
            for e, c in self.terms.items():
                ne = e[:i] + (0,) + e[i + 1:]
                s = t.get(ne, 0) + c * value ** e[i]
                if s:
                    t[ne] = s
                else:
                    t.pop(ne, None)
            return self._new(t)
        out = self._new({})
        powers = [RationalPoly.const(1, self.vars)]
        for e, c in self.terms.items():
            while len(powers) <= e[i]:
                powers.append(powers[-1] * value)
            rest = self._new({e[:i] + (0,) + e[i + 1:]: c})
            out = out + rest * powers[e[i]]
        return out

    def integrate(self, name: str, lo, hi) -> "RationalPoly":
        F = self.antiderivative(name)
        return F.subs(name, hi) - F.subs(name, lo)

    def degree(self, name: str) -> int:
        i = self.vars.index(name)
        return max((e[i] for e in self.terms), default=-1)

    def drop(self, name: str) -> "RationalPoly":
        """Remove variable ``name``; the polynomial must not depend on it."""
        i = self.vars.index(name)
        if any(e[i] for e in self.terms):
            raise ValueError(f"polynomial depends on {name}")
        vars = self.vars[:i] + self.vars[i + 1:]
        return RationalPoly({e[:i] + e[i + 1:]: c for e, c in self.terms.items()}, vars)

    def coeffs_in(self, name: str) -> list:
        """Univariate coefficient list in ``name`` (ascending); others must be absent."""
        i = self.vars.index(name)
        if any(any(x for k, x in enumerate(e) if k != i) for e in self.terms):
            raise ValueError("polynomial depends on other variables")
        d = self.degree(name)
        out = [Fraction(0)] * (d + 1)
        for e, c in self.terms.items():
            out[e[i]] = c
        return out

    def evaluate(self, **values):
        out = 0
        for e, c in self.terms.items():
            term = c
            for name, k in zip(self.vars, e):
                if k:
                    term = term * values[name] ** k
            out = out + term
        return out

    def __repr__(self):
        return f"RationalPoly({self.pretty()})"

    def pretty(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for e in sorted(self.terms, key=lambda e: (sum(e), e)):
            c = self.terms[e]
            mono = "*".join(
                (v if k == 1 else f"{v}^{k}") for v, k in zip(self.vars, e) if k
            )
            if not mono:
                parts.append(str(c))
            elif c == 1:
                parts.append(mono)
            elif c == -1:
                parts.append("-" + mono)
            else:
                parts.append(f"{c}*{mono}")
        s = " + ".join(parts)
        return s.replace("+ -", "- ")


# ---------------------------------------------------------------------------
# series in z = (x1, x2, p, q) with RationalPoly coefficients

def _zkey(kappa) -> tuple:
    e = [0] * NZ
    for k in kappa:
        e[k] += 1
    return tuple(e)


def _zdeg(e) -> int:
    return sum(e)


def _zs_add(a: dict, b: dict, scale=1) -> dict:
    out = dict(a)
    for e, c in b.items():
        s = out[e] + c * scale if e in out else c * scale
        if s.is_zero():
            out.pop(e, None)
        else:
            out[e] = s
    return out


def _zs_mul(a: dict, b: dict, maxdeg: int, mindeg: int = 0) -> dict:
    out = {}
    for e1, c1 in a.items():
        d1 = _zdeg(e1)
        for e2, c2 in b.items():
            d = d1 + _zdeg(e2)
            if d > maxdeg:
                continue
            e = tuple(x + y for x, y in zip(e1, e2))
            prod = c1 * c2
            if e in out:
                prod = out[e] + prod
            if prod.is_zero():
                out.pop(e, None)
            else:
                out[e] = prod
    if mindeg:
        out = {e: c for e, c in out.items() if _zdeg(e) >= mindeg}
    return out


def _zs_map(a: dict, fn) -> dict:
    out = {}
    for e, c in a.items():
        r = fn(c)
        if not r.is_zero():
            out[e] = r
    return out


def _zs_part(a: dict, deg: int) -> dict:
    return {e: c for e, c in a.items() if _zdeg(e) == deg}


def _zs_diff(a: dict, k: int) -> dict:
    out = {}
    for e, c in a.items():
        if e[k]:
            ne = list(e)
            ne[k] -= 1
            out[tuple(ne)] = c * e[k]
    return out


def multinomial(kappa) -> int:
    """Number of distinct orderings of the index tuple ``kappa``."""
    out = factorial(len(kappa))
    for c in Counter(kappa).values():
        out //= factorial(c)
    return out


# ---------------------------------------------------------------------------
# linear algebra of the splitting

THETA = RationalPoly.var("theta")
ONE = RationalPoly.const(1)

J0 = ((Fraction(0), Fraction(1)), (Fraction(0), Fraction(0)))

# rows: boundary condition, orthogonality (first, second component)
# columns: c_m(0), a_m[0], a_m[1]
M_MATRIX = (
    (Fraction(0), Fraction(0), Fraction(1, 2)),
    (Fraction(1), Fraction(0), Fraction(-1, 36)),
    (Fraction(0), Fraction(1), Fraction(-1, 3)),
)

M_PRINTED = (
    (Fraction(0), Fraction(-1), Fraction(3, 2)),
    (Fraction(1), Fraction(0), Fraction(-1, 36)),
    (Fraction(0), Fraction(1), Fraction(-1, 3)),
)


def _inv3(m):
    (a, b, c), (d, e, f), (g, h, i) = m
    det = a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)
    if det == 0:
        raise ZeroDivisionError("singular 3x3 matrix")
    adj = (
        (e * i - f * h, -(b * i - c * h), b * f - c * e),
        (-(d * i - f * g), a * i - c * g, -(a * f - c * d)),
        (d * h - e * g, -(a * h - b * g), a * e - b * d),
    )
    return tuple(tuple(x / det for x in row) for row in adj)


def det3(m) -> Fraction:
    (a, b, c), (d, e, f), (g, h, i) = m
    return a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)


_M_INV = _inv3(M_MATRIX)

# B-dagger: u -> (2/3; 2) u(0) + int_{-1}^0 (2s + 4/3; -2) u(s) ds
BDAG_POINT = (Fraction(2, 3), Fraction(2))
BDAG_WEIGHT = (
    RationalPoly({(1, 0): 2, (0, 0): Fraction(4, 3)}),
    RationalPoly({(0, 0): -2}),
)


def b_dagger(f: RationalPoly) -> tuple:
    """Apply the spectral projection functional to a polynomial in ``theta``."""
    f0 = f.subs("theta", 0)
    out = []
    for pt, w in zip(BDAG_POINT, BDAG_WEIGHT):
        out.append(f0 * pt + (w * f).integrate("theta", -1, 0))
    return tuple(out)


def linear_functional_L(f: RationalPoly) -> RationalPoly:
    """``L f = f(0) - f(-1)``, the linear part of the right-hand side at DZ."""
    return f.subs("theta", 0) - f.subs("theta", -1)


def basis_objects() -> dict:
    """Exact linear objects of the splitting at the double-zero point.

    Returns
    -------
    dict
        ``B`` (the two basis polynomials ``1`` and ``theta``),
        ``B_dagger_weights`` (point weights at 0 and the polynomial densities
        on ``[-1, 0]``), ``J0`` and ``M``.
    """
    return {
        "B": (ONE, THETA),
        "B_dagger_weights": {"point": BDAG_POINT, "density": BDAG_WEIGHT},
        "J0": J0,
        "M": M_MATRIX,
    }


def projected_generator() -> tuple:
    """``B-dagger A B`` computed from the definitions (``A`` is d/dtheta)."""
    cols = [b_dagger(basis.diff("theta")) for basis in (ONE, THETA)]
    return tuple(tuple(cols[j][i].subs("b", 0).terms.get((0, 0), Fraction(0))
                       for j in range(2)) for i in range(2))


# ---------------------------------------------------------------------------

def _param_series() -> tuple[dict, dict]:
    """``alpha(p, q)`` and ``beta(p, q)`` as z-series."""
    c = lambda v: RationalPoly.const(v)
    alpha = {(0, 0, 0, 0): c(1), (0, 0, 1, 0): c(Fraction(1, 3)), (0, 0, 0, 1): c(Fraction(1, 2))}
    beta = {(0, 0, 0, 0): c(-1), (0, 0, 1, 0): c(Fraction(1, 6)), (0, 0, 0, 1): c(Fraction(-1, 2))}
    return alpha, beta


def _theta_taylor(h: dict, at, nmax: int) -> list:
    """``[H_0, H_1, ...]`` with ``h(at + d) = sum_n H_n d**n`` (theta-free coefficients)."""
    out = []
    cur = h
    fact = 1
    for n in range(nmax + 1):
        if n:
            fact *= n
            cur = _zs_map(cur, lambda c: c.diff("theta"))
        if not cur:
            break
        out.append(_zs_map(cur, lambda c: c.subs("theta", at) * Fraction(1, fact)))
    return out


def rhs_series(h: dict, order: int) -> dict:
    """Right-hand side ``alpha h(0) + beta h(-1 - h(-b))`` truncated at ``order``."""
    alpha, beta = _param_series()
    h0 = _zs_map(h, lambda c: c.subs("theta", 0))
    minus_b = RationalPoly({(0, 1): -1})
    w = _zs_map(h, lambda c: c.subs("theta", minus_b))
    neg_w = _zs_map(w, lambda c: -c)
    taylor = _theta_taylor(h, -1, order)
    comp = dict(taylor[0]) if taylor else {}
    power = None
    for n in range(1, len(taylor)):
        power = neg_w if power is None else _zs_mul(power, neg_w, order)
        comp = _zs_add(comp, _zs_mul(taylor[n], power, order))
    out = _zs_mul(alpha, h0, order)
    out = _zs_add(out, _zs_mul(beta, comp, order))
    return out


@dataclass
class CmfExpansion:
    """Centre-manifold expansion to a given order.

    ``h_coeffs`` and ``A_coeffs`` hold symmetric multilinear coefficients for
    non-decreasing index tuples ``kappa`` over ``(x1, x2, p, q)`` (indices
    1..4). Monomial coefficients are recovered by multiplying with
    :func:`multinomial`.
    """

    order: int
    h_coeffs: dict = field(default_factory=dict)
    A_coeffs: dict = field(default_factory=dict)
    # monomial form, keyed by exponent tuples of z
    h_mono: dict = field(default_factory=dict, repr=False)
    g_mono: tuple = field(default_factory=lambda: ({}, {}), repr=False)

    def manifold(self) -> dict:
        """Full ``h`` including the linear part, in monomial form."""
        h = {(1, 0, 0, 0): ONE, (0, 1, 0, 0): THETA}
        h.update(self.h_mono)
        return h

    def vector_field(self) -> tuple[dict, dict]:
        """Components of ``dx/dt`` in monomial form (linear part included)."""
        g1 = dict(self.g_mono[0])
        g1[(0, 1, 0, 0)] = ONE
        return g1, dict(self.g_mono[1])

    # exact checks -----------------------------------------------------------
    def orthogonality_residual(self) -> list:
        bad = []
        for e, c in self.h_mono.items():
            if any(not x.is_zero() for x in b_dagger(c)):
                bad.append(e)
        return bad

    def boundary_residual(self) -> dict:
        """Degree-by-degree residual of ``h'(0) = F(h)``; empty when exact."""
        h = self.manifold()
        F = rhs_series(h, self.order)
        dh0 = _zs_map(h, lambda c: c.diff("theta").subs("theta", 0))
        res = _zs_add(dh0, F, scale=-1)
        return {e: c for e, c in res.items() if _zdeg(e) <= self.order}

    def invariance_residual(self) -> dict:
        """Residual of ``D_z h . dz/dt = d/dtheta h`` up to the expansion order."""
        h = self.manifold()
        g1, g2 = self.vector_field()
        lhs = _zs_add(_zs_mul(_zs_diff(h, 0), g1, self.order), _zs_mul(_zs_diff(h, 1), g2, self.order))
        rhs = _zs_map(h, lambda c: c.diff("theta"))
        return _zs_add(lhs, rhs, scale=-1)


def _bdag_components(R: RationalPoly):
    return b_dagger(R)


def expand(order: int = 5) -> CmfExpansion:
    """Compute the expansion through ``order`` (>= 2)."""
    if order < 2:
        raise ValueError("order must be >= 2")
    h = {(1, 0, 0, 0): ONE, (0, 1, 0, 0): THETA}
    g1: dict = {}
    g2: dict = {}
    exp = CmfExpansion(order)
    for j in range(2, order + 1):
        F = _zs_part(rhs_series(h, j), j)
        hnl = {e: c for e, c in h.items() if _zdeg(e) >= 2}
        trans = _zs_add(
            _zs_mul(_zs_diff(hnl, 0), g1, j, j),
            _zs_mul(_zs_diff(hnl, 1), g2, j, j),
        )
        hj: dict = {}
        for kappa in itertools.combinations_with_replacement(range(NZ), j):
            m = _zkey(kappa)
            r = trans.get(m, RationalPoly())
            if m[1] >= 1:
                prev = (m[0] + 1, m[1] - 1) + m[2:]
                if prev in hj:
                    r = r + hj[prev] * (m[0] + 1)
            R = r.antiderivative("theta")
            N = F.get(m, RationalPoly())
            rhs_bc = N - r.subs("theta", 0) - R.subs("theta", -1)
            o1, o2 = _bdag_components(R)
            rhs = (rhs_bc, -o1, -o2)
            c0, a0, a1 = (sum((rhs[k] * _M_INV[i][k] for k in range(3)), RationalPoly())
                          for i in range(3))
            cm = c0 + THETA * a0 + THETA * THETA * a1 * Fraction(1, 2) + R
            if not cm.is_zero():
                hj[m] = cm
            if not a0.is_zero():
                g1[m] = a0
            if not a1.is_zero():
                g2[m] = a1
            w = Fraction(1, multinomial(kappa))
            key = tuple(k + 1 for k in kappa)
            exp.h_coeffs[key] = cm * w
            exp.A_coeffs[key] = (a0 * w, a1 * w)
        h.update(hj)
    exp.h_mono = {e: c for e, c in h.items() if _zdeg(e) >= 2}
    exp.g_mono = (g1, g2)
    return exp


def _linear_subst(series: dict, order: int) -> dict:
    """Substitute ``x1 = y + v/3, x2 = v``; result keyed by ``(y, v, p, q)`` exponents."""
    y_of = {(1, 0, 0, 0): ONE, (0, 1, 0, 0): ONE * Fraction(1, 3)}
    v_of = {(0, 1, 0, 0): ONE}
    p_of = {(0, 0, 1, 0): ONE}
    q_of = {(0, 0, 0, 1): ONE}
    cache = {}

    def power(base, key, n):
        if (key, n) not in cache:
            cache[(key, n)] = ({(0, 0, 0, 0): ONE} if n == 0
                               else _zs_mul(power(base, key, n - 1), base, order))
        return cache[(key, n)]

    out: dict = {}
    for e, c in series.items():
        term = {(0, 0, 0, 0): c}
        for base, key, n in ((y_of, "x1", e[0]), (v_of, "x2", e[1]), (p_of, "p", e[2]), (q_of, "q", e[3])):
            if n:
                term = _zs_mul(term, power(base, key, n), order)
        out = _zs_add(out, term)
    return out


def emit_planar_vf(exp: CmfExpansion, order: int | None = None):
    """Second-order scalar form ``y'' = F(y, y'; p, q, b)`` truncated at ``order``.

    Uses ``x1 = y + y'/3, x2 = y'``; the first component then reads
    ``y' = v`` identically, which is verified here.
    """
    from .planar import PlanarVF

    k = exp.order if order is None else order
    if k > exp.order:
        raise ValueError(f"expansion only computed to order {exp.order}")
    g1, g2 = exp.vector_field()
    g1k = {e: c for e, c in g1.items() if _zdeg(e) <= k}
    g2k = {e: c for e, c in g2.items() if _zdeg(e) <= k}
    ydot = _linear_subst(_zs_add(g1k, g2k, scale=Fraction(-1, 3)), k)
    if ydot != {(0, 1, 0, 0): ONE}:
        raise ArithmeticError("transformed first component is not y' = v")
    F = _linear_subst(g2k, k)
    terms = {e: c.drop("theta") for e, c in F.items()}
    return PlanarVF(terms, k)


def export_json(vf) -> str:
    return json.dumps(vf.to_dict(), indent=1, sort_keys=True)


def _in_b(*coeffs) -> RationalPoly:
    return RationalPoly({(k,): Fraction(c) for k, c in enumerate(coeffs)}, ("b",))


def _second_order_reference() -> dict:
    return {
        (1, 0, 1, 0): _in_b(1),
        (0, 1, 0, 1): _in_b(1),
        (1, 1, 0, 0): _in_b(2),
        (0, 2, 0, 0): _in_b(Fraction(2, 3), -2),
    }


def second_order_check(vf) -> list[dict]:
    """Compare the terms of degree <= 2 with ``p*y + q*v + 2*y*v + (2/3 - 2b)*v**2``.

    One record per monomial that is nonzero in either; ``match`` is exact.
    """
    ref = _second_order_reference()
    got = {e: c for e, c in vf.terms.items() if sum(e) <= 2}
    rows = []
    for e in sorted(set(ref) | set(got)):
        want = ref.get(e, RationalPoly(vars=("b",)))
        have = got.get(e, RationalPoly(vars=("b",)))
        rows.append({"monomial": e, "expected": str(want), "computed": str(have), "match": want == have})
    return rows
