"""Independent centre-manifold oracle built on sympy.

Each order is found by one sparse linear solve over all unknown profile
coefficients (generic polynomials in theta) and vector-field coefficients,
imposing the invariance equation, the boundary condition and orthogonality
together. The delayed composition ``h(-1 - h(-b))`` is evaluated by direct
substitution of the polynomial profile, truncated by degree as it is built.
No part of the production recursion (its 3x3 matrix or its Taylor shifts) is
reused.
"""
import itertools

import sympy as sp
from sympy import QQ
from sympy.polys.matrices import DomainMatrix
from sympy.polys.rings import ring

b_sym = sp.Symbol("b")
NZ = 4


def _setup(bval):
    if bval is None:
        dom = QQ.frac_field(b_sym)
    else:
        dom = QQ
    R, x1, x2, p, q, th = ring("x1,x2,p,q,theta", dom)
    bel = dom.convert(b_sym) if bval is None else QQ(bval)
    return R, (x1, x2, p, q), th, bel


def _zdeg(mon):
    return sum(mon[:NZ])


def _trunc(f, j):
    return f.ring({m: c for m, c in f.terms() if _zdeg(m) <= j})


def _part(f, j):
    return f.ring({m: c for m, c in f.terms() if _zdeg(m) == j})


def _subs_theta(f, val, j, R, th):
    """``f(theta = val)`` truncated at z-degree ``j`` (Horner in theta)."""
    coeffs = {}
    for m, c in f.terms():
        k = m[NZ]
        mono = R({m[:NZ] + (0,): c})
        coeffs[k] = coeffs.get(k, R.zero) + mono
    out = R.zero
    for k in range(max(coeffs, default=0), -1, -1):
        out = _trunc(out * val, j) + coeffs.get(k, R.zero)
    return out


def expand_oracle(order, bval=None):
    """Return ``(R, h, g1, g2)``; ``bval=None`` keeps ``b`` symbolic."""
    R, (x1, x2, p, q), th, bel = _setup(bval)
    dom = R.domain
    h = x1 + th * x2
    g1 = x2
    g2 = R.zero
    alpha = 1 + p * QQ(1, 3) + q * QQ(1, 2)
    beta = -1 + p * QQ(1, 6) - q * QQ(1, 2)
    for j in range(2, order + 1):
        # known parts from lower orders
        w = _subs_theta(h, -bel, j, R, th)
        comp = _subs_theta(h, -1 - w, j, R, th)
        F = _part(alpha * _subs_theta(h, R.zero, j, R, th) + beta * comp, j)
        hl = h - x1 - th * x2
        known_inv = _part(hl.diff(x1) * (g1 - x2) + hl.diff(x2) * g2, j)
        mons = [tuple(sum(1 for k in kap if k == i) for i in range(NZ))
                for kap in itertools.combinations_with_replacement(range(NZ), j)]
        index = {m: i for i, m in enumerate(mons)}
        deg = 2 * j
        nunk = len(mons) * (deg + 3)

        def cvar(mi, k):
            return mi * (deg + 3) + k

        def avar(mi):
            return mi * (deg + 3) + deg + 1

        def evar(mi):
            return mi * (deg + 3) + deg + 2

        rows = []
        rhs = []
        # invariance: d/dtheta hj - x2 * d/dx1 hj - gj1 - theta*gj2 = known
        for mi, m in enumerate(mons):
            for k in range(deg + 1):
                row = {}
                if k + 1 <= deg:
                    row[cvar(mi, k + 1)] = row.get(cvar(mi, k + 1), 0) + (k + 1)
                if m[1] >= 1:
                    src = (m[0] + 1, m[1] - 1) + m[2:]
                    row[cvar(index[src], k)] = row.get(cvar(index[src], k), 0) - (m[0] + 1)
                if k == 0:
                    row[avar(mi)] = -1
                if k == 1:
                    row[evar(mi)] = -1
                rows.append(row)
                rhs.append(known_inv.coeff(_mono(R, m, k)))
        # boundary: hj'(0) - hj(0) + hj(-1) = F
        for mi, m in enumerate(mons):
            row = {cvar(mi, 1): 1, cvar(mi, 0): -1}
            for k in range(deg + 1):
                row[cvar(mi, k)] = row.get(cvar(mi, k), 0) + (-1) ** k
            rows.append(row)
            rhs.append(F.coeff(_mono(R, m, 0)))
        # orthogonality
        for mi, m in enumerate(mons):
            r1 = {}
            r2 = {}
            for k in range(deg + 1):
                f0 = 1 if k == 0 else 0
                r1[cvar(mi, k)] = QQ(2, 3) * f0 + 2 * QQ((-1) ** (k + 1), k + 2) + QQ(4, 3) * QQ((-1) ** k, k + 1)
                r2[cvar(mi, k)] = 2 * f0 - 2 * QQ((-1) ** k, k + 1)
            rows += [r1, r2]
            rhs += [dom.zero, dom.zero]
        sol = _solve(rows, rhs, nunk, dom)
        hj = R.zero
        gj1 = R.zero
        gj2 = R.zero
        for mi, m in enumerate(mons):
            for k in range(deg + 1):
                hj += R({_mono_key(m, k): sol[cvar(mi, k)]}) if sol[cvar(mi, k)] else R.zero
            gj1 += R({_mono_key(m, 0): sol[avar(mi)]}) if sol[avar(mi)] else R.zero
            gj2 += R({_mono_key(m, 0): sol[evar(mi)]}) if sol[evar(mi)] else R.zero
        h += hj
        g1 += gj1
        g2 += gj2
    return R, h, g1, g2


def _mono_key(m, k):
    return tuple(m) + (k,)


def _mono(R, m, k):
    return R({_mono_key(m, k): R.domain.one})


def _solve(rows, rhs, n, dom):
    field = dom.get_field()
    data = {}
    for i, (row, r) in enumerate(zip(rows, rhs)):
        d = {c: field.convert(v) for c, v in row.items() if v}
        if r:
            d[n] = field.convert(r)
        if d:
            data[i] = d
    M = DomainMatrix(data, (len(rows), n + 1), field)
    Rr, pivots = M.rref()
    if len(pivots) != n or n in pivots:
        raise RuntimeError("oracle system is not uniquely solvable")
    sol = [field.zero] * n
    rr = Rr.to_sdm()
    for i, pc in enumerate(pivots):
        sol[pc] = rr.get(i, {}).get(n, field.zero)
    return sol


def planar_oracle(order, bval=None):
    """``(ydot, F)`` as dicts ``{(ey, ev, ep, eq): coefficient}`` after ``x1 = y + v/3, x2 = v``."""
    R, h, g1, g2 = expand_oracle(order, bval)
    S, y, v, p, q = ring("y,v,p,q", R.domain)

    def conv(g):
        out = S.zero
        for m, c in g.terms():
            assert m[NZ] == 0
            out += c * (y + v * QQ(1, 3)) ** m[0] * v ** m[1] * p ** m[2] * q ** m[3]
        return out

    ydot = conv(g1) - conv(g2) * QQ(1, 3)
    F = conv(g2)
    return dict(ydot.terms()), dict(F.terms()), R.domain
