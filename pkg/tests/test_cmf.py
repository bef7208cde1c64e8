import json
from fractions import Fraction
from pathlib import Path

import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from sddebif import cmf
from sddebif.cmf import RationalPoly
from sddebif.planar import PlanarVF

from oracles.cmf_sympy import planar_oracle

DATA = Path(__file__).parent / "data"
B = sp.Symbol("b")


@pytest.fixture(scope="module")
def expansion5():
    return cmf.expand(5)


def _to_sympy(poly: RationalPoly):
    syms = [sp.Symbol(v) for v in poly.vars]
    return sum(sp.Rational(c.numerator, c.denominator) * sp.Mul(*[s**k for s, k in zip(syms, e)])
               for e, c in poly.terms.items())


# --- exact rational polynomials -------------------------------------------

small = st.fractions(min_value=-5, max_value=5, max_denominator=12)
polys = st.dictionaries(st.tuples(st.integers(0, 3), st.integers(0, 2)), small, max_size=5).map(
    RationalPoly)


@settings(max_examples=60, deadline=None)
@given(polys, polys)
def test_rational_poly_ring_matches_sympy(f, g):
    assert sp.expand(_to_sympy(f * g) - _to_sympy(f) * _to_sympy(g)) == 0
    assert sp.expand(_to_sympy(f + g) - _to_sympy(f) - _to_sympy(g)) == 0


@settings(max_examples=60, deadline=None)
@given(polys)
def test_rational_poly_calculus_matches_sympy(f):
    th = sp.Symbol("theta")
    assert sp.expand(_to_sympy(f.diff("theta")) - sp.diff(_to_sympy(f), th)) == 0
    got = _to_sympy(f.integrate("theta", -1, 0))
    assert sp.expand(got - sp.integrate(_to_sympy(f), (th, -1, 0))) == 0


def test_zero_terms_are_dropped():
    f = RationalPoly({(1, 0): Fraction(1), (0, 0): Fraction(2)})
    assert (f - f).is_zero()
    assert (f - f).terms == {}


# --- linear objects -------------------------------------------------------

def test_projection_is_identity_on_basis():
    basis = cmf.basis_objects()["B"]
    gram = [[cmf.b_dagger(col)[i] for col in basis] for i in range(2)]
    assert gram == [[RationalPoly.const(1), RationalPoly.const(0)],
                    [RationalPoly.const(0), RationalPoly.const(1)]]


def test_projected_generator_is_nilpotent_block():
    assert cmf.projected_generator() == cmf.J0 == ((0, 1), (0, 0))


def test_splitting_matrix_invertible():
    assert cmf.det3(cmf.basis_objects()["M"]) != 0


# --- expansion ------------------------------------------------------------

def test_second_order_field():
    vf = cmf.emit_planar_vf(cmf.expand(2))
    report = cmf.second_order_check(vf)
    assert all(r["match"] for r in report)
    assert set(vf.terms) == {(1, 0, 1, 0), (0, 1, 0, 1), (1, 1, 0, 0), (0, 2, 0, 0)}
    vdot2 = vf.coefficient(0, 2)
    assert vdot2 == RationalPoly({(0,): Fraction(2, 3), (1,): Fraction(-2)}, ("b",))
    assert vdot2.subs("b", Fraction(1, 3)).is_zero()


def test_slow_time_form_of_second_order_field():
    # (-p) w' = -y + q w + 2 y w - (2/3 - 2b) p w^2 in slow time
    vf = cmf.emit_planar_vf(cmf.expand(2))
    for p, q, b, y, w in [(-0.3, 0.1, 0.2, 0.4, -0.7), (-0.05, -0.2, 0.5, -0.1, 1.3)]:
        lhs = -p * vf.numeric(p, q, b).rescaled_rhs(0.0, [y, w])[1]
        rhs = -y + q * w + 2 * y * w - (2 / 3 - 2 * b) * p * w * w
        assert lhs == pytest.approx(rhs, rel=1e-13, abs=1e-15)


def test_exact_residuals_vanish(expansion5):
    assert expansion5.orthogonality_residual() == []
    assert expansion5.boundary_residual() == {}
    assert all(c.is_zero() for c in expansion5.invariance_residual().values())


def test_symmetric_storage_weights(expansion5):
    for kappa, c in expansion5.h_coeffs.items():
        e = tuple(sum(1 for k in kappa if k == i + 1) for i in range(4))
        assert expansion5.h_mono.get(e, RationalPoly.const(0)) == c * cmf.multinomial(kappa)


@pytest.mark.parametrize("order", [2, 3, 4, 5])
def test_field_vanishes_when_p_and_v_vanish(expansion5, order):
    vf = cmf.emit_planar_vf(expansion5, order)
    assert all(e[1] > 0 or e[2] > 0 for e in vf.terms)


def test_golden_order5(expansion5):
    vf = cmf.emit_planar_vf(expansion5)
    golden = PlanarVF.from_dict(json.loads((DATA / "planar_vf_order5.json").read_text()))
    assert vf == golden
    assert len(vf.terms) == 88


@pytest.mark.slow
def test_order5_matches_independent_sympy_derivation(expansion5):
    ydot, F, dom = planar_oracle(5)
    assert ydot == {(0, 1, 0, 0): 1}
    vf = cmf.emit_planar_vf(expansion5)
    assert set(F) == set(vf.terms)
    for e, c in F.items():
        assert sp.expand(dom.to_sympy(c) - _to_sympy(vf.terms[e]).subs(sp.Symbol("b"), B)) == 0


def test_order3_at_fixed_b_matches_oracle():
    ydot, F, _ = planar_oracle(3, Fraction(1, 3))
    vf = cmf.emit_planar_vf(cmf.expand(3))
    exact = vf.exact_at(Fraction(1, 3))
    nonzero = {e: c for e, c in exact.items() if c != 0}
    assert {e: Fraction(int(c.numerator), int(c.denominator)) for e, c in F.items()} == nonzero


def test_export_round_trip():
    vf = cmf.emit_planar_vf(cmf.expand(3))
    assert PlanarVF.from_dict(json.loads(cmf.export_json(vf))) == vf
