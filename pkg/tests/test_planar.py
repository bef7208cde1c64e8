import csv
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sddebif import cmf
from sddebif.errors import ArgumentError, PreconditionError
from sddebif.planar import (SWEEP_COLUMNS, PlanarVF, conserved_V, extrapolate_gh, hopf_q,
                            planar_criticality, planar_fold_branch, planar_gh, refine_planar_fold,
                            simulate_planar, slow_manifold_residual, slow_manifold_stability,
                            slow_manifold_v, sweep_section, v_drift, write_sweep_csv)

from oracles.planar_lyapunov import first_lyapunov, gh_b


@pytest.fixture(scope="module")
def vf5():
    return cmf.emit_planar_vf(cmf.expand(5), 5)


@pytest.fixture(scope="module")
def vf2(vf5):
    return vf5.truncate(2)


@pytest.fixture(scope="module")
def fold_branch(vf5):
    # just below the GH value of b at p = -0.1: one fold of cycles
    return planar_fold_branch(vf5, -0.1, 0.34)


# --- vector field ---------------------------------------------------------

def test_line_of_equilibria_exact(vf5):
    # no pure-y terms survive at p = 0
    assert all(not (ev == 0 and ep == 0) for (ey, ev, ep, eq) in vf5.terms)


@pytest.mark.parametrize("y0", [-0.4, 0.1, 0.7])
def test_line_of_equilibria_is_stationary(vf5, y0):
    tr = simulate_planar(vf5, (y0, 0.0), (0.0, 0.02, 0.3), (0, 50))
    assert np.max(np.abs(tr.y - y0)) < 1e-12
    assert np.max(np.abs(tr.v)) < 1e-12


def test_origin_is_equilibrium(vf5):
    tr = simulate_planar(vf5, (0.0, 0.0), (-0.2, 0.1, 0.25), (0, 20))
    assert np.all(tr.y == 0) and np.all(tr.v == 0)


def test_blowup_flagged(vf2):
    tr = simulate_planar(vf2, (2.0, 1.0), (0.0, 0.0, 0.0), (0, 50), blowup=1e3)
    assert tr.diverged
    assert max(abs(tr.y[-1]), abs(tr.v[-1])) == pytest.approx(1e3, rel=1e-6)


def test_dict_round_trip(vf5):
    assert PlanarVF.from_dict(vf5.to_dict()) == vf5


def test_truncation_keeps_second_order_form(vf2):
    b = Fraction(1, 3)
    assert vf2.coefficient(0, 2).evaluate(b=b) == 0
    assert vf2.coefficient(1, 1).evaluate(b=b) == 2


# --- conserved quantity and slow manifold ---------------------------------

def test_conserved_V_examples():
    assert conserved_V(0.0, 0.0, -1.0) == pytest.approx(math.log(2))
    with pytest.raises(ArgumentError):
        conserved_V(0.0, 0.0, 0.5)
    with pytest.raises(ArgumentError):
        conserved_V(0.0, 0.6, -1.0)


@given(st.floats(-5, 5), st.floats(-3, 0.49), st.floats(-3, -1e-3))
def test_conserved_V_even_in_y(y, v, p):
    assert conserved_V(y, v, p) == conserved_V(-y, v, p)


def test_V_conserved_at_degenerate_point(vf2):
    tr = simulate_planar(vf2, (0.1, 0.0), (-0.5, 0.0, 1 / 3), (0, 100), tol=1e-10, rescaled=True)
    V = conserved_V(tr.y, tr.v, -0.5)
    assert np.max(np.abs(V - V[0])) < 1e-8
    # closed-orbit-like: the orbit keeps turning
    assert np.sum(np.diff(np.sign(tr.v)) != 0) >= 4


@pytest.mark.parametrize("vf_name", ["vf2", "vf5"])
@pytest.mark.parametrize("p", [-0.05, -0.01])
def test_V_drift_flips_across_one_third(vf_name, p, request):
    vf = request.getfixturevalue(vf_name)
    below = [v_drift(vf, p, 0.0, b)["delta_V"] for b in (0.25, 0.3)]
    above = [v_drift(vf, p, 0.0, b)["delta_V"] for b in (0.36, 0.4)]
    assert all(d > 0 for d in below) and all(d < 0 for d in above)
    # monotone in b on each side
    assert below[0] > below[1] and above[0] > above[1]


def test_V_drift_same_sign_each_revolution(vf2):
    first = v_drift(vf2, -0.05, 0.0, 0.3)
    second = v_drift(vf2, -0.05, 0.0, 0.3, y0=first["y_return"])
    assert first["delta_V"] > 0 and second["delta_V"] > 0


def test_slow_manifold_examples():
    assert slow_manifold_v(1e9, 0.0) == pytest.approx(0.5)
    assert slow_manifold_v(0.0, 0.3) == 0.0
    with pytest.raises(ArgumentError):
        slow_manifold_v(-0.15, 0.3)
    assert slow_manifold_stability(-0.2, 0.3) == "stable"
    assert slow_manifold_stability(0.0, 0.3) == "unstable"


@pytest.mark.parametrize("q", [0.1, 0.01, 0.0])
def test_slow_manifold_residual_is_order_p(vf2, q):
    y = np.array([-0.3, -0.1, 0.1, 0.3])
    r = [np.max(np.abs(slow_manifold_residual(vf2, y, p, q, 0.3))) for p in (-1e-2, -1e-3)]
    assert r[1] == pytest.approx(r[0] / 10, rel=0.05)


# --- Hopf, criticality, folds, GH ----------------------------------------

@pytest.mark.parametrize("p, b", [(-0.1, 0.3), (-0.01, 0.36), (-0.2, 0.25)])
def test_hopf_q_trace_zero(vf5, p, b):
    q = hopf_q(vf5, p, b)
    fy, fv = vf5.linear_part(p, q, b)
    assert abs(fv) < 1e-14
    assert fy < 0


def test_hopf_q_absent_for_positive_p(vf5):
    assert hopf_q(vf5, 0.1, 0.3) is None
    with pytest.raises(PreconditionError):
        planar_criticality(vf5, 0.1, 0.3)


@pytest.mark.parametrize("p, b", [(-0.05, 0.3), (-0.05, 0.36), (-0.1, 0.3), (-0.01, 0.34)])
def test_criticality_sign_matches_lyapunov_oracle(vf5, p, b):
    c = planar_criticality(vf5, p, b)
    assert c["accepted"]
    assert math.copysign(1, c["c2"]) == -math.copysign(1, first_lyapunov(vf5, p, b))


def test_fold_of_cycles_found(fold_branch):
    assert len(fold_branch["folds"]) == 1
    fold = fold_branch["folds"][0]
    assert fold["residual"] < 1e-8
    qs = [o.q for o in fold_branch["samples"]]
    assert min(qs) >= fold["orbit"].q - 1e-12


def test_fold_reconverges(vf5, fold_branch):
    fold = fold_branch["folds"][0]["orbit"]
    start = fold_branch["samples"][fold_branch["folds"][0]["index"] + 1]
    again, r = refine_planar_fold(vf5, start)
    assert r < 1e-8
    assert again.q == pytest.approx(fold.q, abs=1e-10)
    assert again.amplitude == pytest.approx(fold.amplitude, rel=1e-4)


def test_planar_gh_matches_oracle(vf5):
    lo, hi = -0.12, -0.08
    ref = -0.1
    b = gh_b(vf5, ref)
    # frozen oracle root
    assert b == pytest.approx(0.352328936, abs=1e-8)
    g = planar_gh(vf5, b, (lo, hi), tol=1e-6)
    assert g["p"] == pytest.approx(ref, abs=1e-4)
    with pytest.raises(PreconditionError):
        planar_gh(vf5, 0.25, (-0.2, -0.1))


def test_gh_tends_to_one_third(vf5):
    bs = [gh_b(vf5, p) for p in (-0.05, -0.01)]
    assert abs(bs[1] - 1 / 3) < abs(bs[0] - 1 / 3) < 0.01


def test_extrapolate_gh():
    rows = [(1 / 3 + 0.2 * p - p * p, p, 0.0, "GH", None) for p in (-0.05, -0.04, -0.03, -0.02)]
    assert extrapolate_gh(rows) == pytest.approx(1 / 3, abs=1e-12)
    with pytest.raises(PreconditionError):
        extrapolate_gh(rows[:2])


def test_sweep_section_csv(vf5, tmp_path):
    rows = sweep_section(vf5, 0.34, p_grid=[-0.1, -0.02], q_grid=[0.0])
    out = {"H": [], "F": [], "GH": [], "Z": []}
    for r in rows:
        out[r[3]].append(r)
    assert len(out["H"]) == 2 and len(out["Z"]) == 1
    assert len(out["GH"]) == 1
    assert gh_b(vf5, out["GH"][0][1]) == pytest.approx(0.34, abs=1e-4)
    assert len(out["F"]) >= 1
    path = tmp_path / "sweep.csv"
    write_sweep_csv(out, path)
    table = list(csv.reader(open(path)))
    assert tuple(table[0]) == SWEEP_COLUMNS
    f_rows = [r for r in table[1:] if r[3] == "F"]
    assert all(float(r[-1]) < 1e-8 for r in f_rows)
