import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sddebif.core import Params, hopf_point
from sddebif.errors import ArgumentError
from sddebif.linstab import (char_fn, char_fn_prime, cheb_generator, hopf_theta_at,
                             hopf_theta_at_beta, rightmost_roots)


def test_char_fn_examples():
    assert char_fn(0.0, Params(0.7, -0.7)) == 0
    assert abs(char_fn(1j * math.pi / 2, Params(0.0, -math.pi / 2))) < 1e-15
    assert char_fn(-1.0, Params(-1.0, 0.0)) == 0
    assert char_fn_prime(0.0, Params(1.0, -1.0)) == 0


def test_double_zero_root():
    roots = rightmost_roots(Params(1.0, -1.0))
    top = roots[0]
    assert top.multiplicity == 2
    assert abs(top.value) < 1e-8
    assert abs(char_fn(top.value, Params(1.0, -1.0))) < 1e-10
    assert abs(char_fn_prime(top.value, Params(1.0, -1.0))) < 1e-8


def test_beta_axis_crossing():
    roots = rightmost_roots(Params(0.0, -math.pi / 2))
    pair = sorted(roots.values[:2], key=lambda z: z.imag)
    assert np.allclose(np.imag(pair), [-math.pi / 2, math.pi / 2], atol=1e-10)
    assert np.max(np.abs(np.real(pair))) < 1e-10


def test_stable_region_against_finer_discretization():
    p = Params(-1.0, -0.5)
    roots = rightmost_roots(p)
    assert max(r.real for r in roots) < 0
    fine = np.linalg.eigvals(cheb_generator(p, n=80))
    fine = fine[np.abs(fine) < 30]
    assert np.max(fine.real) == pytest.approx(roots[0].real, abs=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, math.pi - 0.05))
def test_roots_on_hopf_curve(theta):
    a, b = hopf_point(theta)
    roots = rightmost_roots(Params(a, b))
    top = max(roots, key=lambda r: r.real)
    assert abs(top.real) < 1e-8
    assert abs(abs(top.imag) - theta) < 1e-8


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 1.5), st.floats(-4, 1))
def test_root_invariants(alpha, beta):
    p = Params(alpha, beta)
    roots = rightmost_roots(p)
    vals = roots.values
    for r in roots:
        assert abs(char_fn(r.value, p)) < 1e-10
    # closed under conjugation
    for z in vals:
        assert np.min(np.abs(vals - np.conj(z))) < 1e-12
    assert np.all(np.diff(vals.real) <= 1e-12)


def test_hopf_theta_examples():
    assert hopf_theta_at(0.0) == pytest.approx(math.pi / 2, abs=1e-14)
    th = hopf_theta_at(-5.0)
    assert math.pi / 2 < th < math.pi
    assert abs(th / math.tan(th) + 5.0) < 1e-12
    with pytest.raises(ArgumentError):
        hopf_theta_at(1.0)


def test_double_zero_taylor_expansion():
    # both offsets must scale like omega**4
    consts = []
    for w in (1e-2, 5e-3):
        th = hopf_theta_at(1 - w * w / 3)
        assert abs(th - w) / w < 1e-3
        a, b = hopf_point(w)
        consts.append((abs(a - (1 - w * w / 3)) / w**4, abs(b + 1 + w * w / 6) / w**4))
    assert max(max(c) for c in consts) < 1.0
    assert consts[0] == pytest.approx(consts[1], rel=1e-2)


def test_hopf_theta_at_beta_inverts():
    for beta in (-1.6, -2.0, -3.0):
        th = hopf_theta_at_beta(beta)
        assert hopf_point(th)[1] == pytest.approx(beta, abs=1e-12)
