import math

import numpy as np
import pytest
import scipy.special as sps
from hypothesis import given, settings
from hypothesis import strategies as st

from cavopt.assembly import assemble, build_space
from cavopt.eigen import C0, solve_gevp
from cavopt.oracle import (
    OracleError,
    PillboxSpec,
    bessel_j,
    bessel_jp,
    bessel_roots_below,
    bessel_zero,
    box_freqs,
    box_lambda,
    crossing_radius,
    parse_label,
    pillbox_freqs,
)

from conftest import unit_square_net


def test_frozen_roots():
    assert bessel_zero("J", 0, 1) == pytest.approx(2.404825557695773, abs=1e-12)
    assert bessel_zero("J'", 1, 1) == pytest.approx(1.841183781340659, abs=1e-12)
    assert bessel_roots_below("J", 0, 10.0) == 3


@pytest.mark.parametrize("m", range(4))
def test_roots_against_scipy(m):
    ours_j = [bessel_zero("J", m, n) for n in (1, 2)]
    ours_jp = [bessel_zero("J'", m, n) for n in (1, 2)]
    np.testing.assert_allclose(ours_j, sps.jn_zeros(m, 2), rtol=0, atol=1e-12)
    np.testing.assert_allclose(ours_jp, sps.jnp_zeros(m, 2), rtol=0, atol=1e-12)


@settings(max_examples=60)
@given(st.integers(0, 4), st.floats(0.0, 12.0))
def test_series_against_scipy(m, x):
    assert bessel_j(m, x) == pytest.approx(sps.jv(m, x), abs=1e-12)
    assert bessel_jp(m, x) == pytest.approx(sps.jvp(m, x), abs=1e-12)


def test_interlacing():
    j01, j11, j02 = bessel_zero("J", 0, 1), bessel_zero("J", 1, 1), bessel_zero("J", 0, 2)
    assert bessel_zero("J'", 1, 1) < j01 < j11 < j02


@pytest.mark.parametrize("args", [("Y", 0, 1), ("J", -1, 1), ("J", 0, 0), ("J", 0, 5)])
def test_unsupported_roots(args):
    with pytest.raises(OracleError):
        bessel_zero(*args)


@pytest.mark.parametrize("label", ["TM01", "TX010", "TE110", "TM000", ""])
def test_invalid_labels(label):
    with pytest.raises(OracleError):
        parse_label(label)


def test_tm010_at_optimal_radius():
    f = pillbox_freqs(PillboxSpec(0.03825, 0.1), ["TM010"])["TM010"]
    assert abs(f - 3e9) / 3e9 <= 2e-3


def test_start_ordering():
    f = pillbox_freqs(PillboxSpec(0.06, 0.1), ["TM010", "TE111"])
    assert f["TM010"] < f["TE111"]


def test_te111_long_limit():
    r = 0.05
    f = pillbox_freqs(PillboxSpec(r, 1e6), "TE111")["TE111"]
    assert f == pytest.approx(C0 * bessel_zero("J'", 1, 1) / (2 * math.pi * r), rel=1e-12)


def test_crossing_radius():
    r = crossing_radius(0.1)
    assert r == pytest.approx(0.04924, abs=5e-6)
    assert crossing_radius(0.2) == pytest.approx(2 * r, rel=1e-14)
    f = pillbox_freqs(PillboxSpec(r, 0.1), ["TM010", "TE111"])
    assert abs(f["TM010"] - f["TE111"]) <= 1e-10 * f["TM010"]


@settings(max_examples=40)
@given(st.floats(0.01, 0.1), st.floats(0.01, 0.1), st.floats(0.5, 3.0),
       st.sampled_from(["TM010", "TE111", "TM011", "TE211", "TM110"]))
def test_pillbox_monotone_and_scaling(r1, r2, s, label):
    L = 0.1
    f1 = pillbox_freqs(PillboxSpec(r1, L), label)[label]
    f2 = pillbox_freqs(PillboxSpec(r2, L), label)[label]
    if r1 < r2:
        assert f1 >= f2
    scaled = pillbox_freqs(PillboxSpec(s * r1, s * L), label)[label]
    assert scaled == pytest.approx(f1 / s, rel=1e-12)


def test_box_examples():
    assert box_freqs(1.0, 1.0, math.inf, "110") == pytest.approx(C0 / math.sqrt(2), rel=1e-15)
    assert box_freqs(1.0, 1.0, 1.0, (2, 1, 0)) == box_freqs(1.0, 1.0, 1.0, "(1,2,0)")
    assert box_freqs(1.2, 1.0, 1.0, "210") < box_freqs(1.2, 1.0, 1.0, "120")
    assert box_freqs(1.3, 1.0, 1.0, "210") != box_freqs(1.3, 1.0, 1.0, "120")
    with pytest.raises(OracleError):
        box_lambda(1.0, 1.0, "010")


def test_box_matches_discrete_solve(unit_square_scalar):
    _, _, system = unit_square_scalar
    lam = solve_gevp(system, 1).eigenvalues[0]
    assert lam == pytest.approx(box_lambda(1.0, 1.0, "110"), rel=1e-3)
    f = C0 * math.sqrt(lam) / (2 * math.pi)
    assert f == pytest.approx(box_freqs(1.0, 1.0, math.inf, "110"), rel=1e-3)


def test_rectangle_discretization_against_box_oracle():
    net = unit_square_net().with_points(unit_square_net().points * [1.2, 1.0])
    space = build_space(net, "scalar", 2, subdivisions=(12, 12))
    lam = solve_gevp(assemble(space, net), 3).eigenvalues
    assert lam[1] == pytest.approx(box_lambda(1.2, 1.0, "210"), rel=1e-3)
    assert lam[2] == pytest.approx(box_lambda(1.2, 1.0, "120"), rel=1e-3)
