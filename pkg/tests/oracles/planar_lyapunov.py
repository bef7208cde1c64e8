"""First Lyapunov coefficient of ``y' = v, v' = F(y, v)`` at a planar Hopf point.

Independent of the collocation fit in ``sddebif.planar``: the field is put in
the form ``X' = -w Y + f, Y' = w X`` and the classical third-order formula is
evaluated symbolically. ``a < 0`` means a supercritical Hopf point.
"""
import sympy as sp
from scipy.optimize import brentq

from sddebif.planar import hopf_q

X, Y = sp.symbols("X Y")


def first_lyapunov(vf, p, b):
    q = hopf_q(vf, p, b)
    coeffs = vf.numeric(p, q, b).coeffs
    fy = coeffs.get((1, 0), 0.0)
    w = sp.sqrt(sp.Float(-fy, 30))
    y, v = Y, w * X
    N = sum(sp.Float(c, 30) * y**i * v**j for (i, j), c in coeffs.items() if i + j >= 2)
    f = sp.expand(N / w)

    def d(*vars_):
        return float(sp.diff(f, *vars_).subs({X: 0, Y: 0}))

    fxx, fyy, fxy = d(X, X), d(Y, Y), d(X, Y)
    return (d(X, X, X) + d(X, Y, Y)) / 16 + fxy * (fxx + fyy) / (16 * float(w))


def gh_b(vf, p, lo=0.25, hi=0.45):
    """``b`` at which the first Lyapunov coefficient vanishes for fixed ``p``."""
    return brentq(lambda b: first_lyapunov(vf, p, b), lo, hi, xtol=1e-10)
