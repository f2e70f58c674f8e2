import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cavopt.assembly import build_space
from cavopt.geometry import (
    ChainLayout,
    DisplacementField,
    ExplicitControlPath,
    GeometryError,
    MultiCellChain,
    ParameterDomainError,
    ScaledRectangle,
    arc_weight,
    check_box,
    control_velocity,
    default_fd_step,
    eval_displacement,
    family_from_dict,
    family_net,
    uniform_scaling,
)
from cavopt.splines import NurbsNet, eval_point, identity_net, rectangle_net, uniform_knots

RECT = ScaledRectangle([[0.5, 1.5]])


def test_rectangle_midpoint_is_unit_square():
    np.testing.assert_allclose(family_net(RECT, [0.5]).points, rectangle_net().points)


def test_rectangle_lower_bound():
    pts = family_net(RECT, [0.0]).points
    assert pts[:, 0].max() == pytest.approx(0.5)
    assert pts[:, 1].max() == pytest.approx(1.0)


@pytest.mark.parametrize("p", [[-0.1], [1.0000001], [np.nan], [0.2, 0.3]])
def test_box_violations(p):
    with pytest.raises(ParameterDomainError):
        family_net(RECT, p)


def test_bounds_map_to_physical_extremes(chain_fixture):
    fam, _, _ = chain_fixture
    np.testing.assert_allclose(fam.physical([0, 0, 0]), fam.bounds[:, 0])
    np.testing.assert_allclose(fam.physical([1, 1, 1]), fam.bounds[:, 1])
    np.testing.assert_allclose(fam.normalized(fam.physical([0.2, 0.4, 0.9])), [0.2, 0.4, 0.9])


def test_chain_fixture_net(chain_fixture):
    fam, p, net_dict = chain_fixture
    fixture = NurbsNet.from_dict(net_dict)
    net = family_net(fam, p)
    np.testing.assert_allclose(net.points, fixture.points, rtol=0, atol=1e-15)
    np.testing.assert_allclose(net.weights, fixture.weights, rtol=0, atol=0)


@pytest.mark.parametrize("delta", [1e-1, 1e-3, 0.7])
def test_rectangle_velocity_is_exact(delta):
    df = control_velocity(RECT, [0.3], 0, delta)
    xhat = rectangle_net().points[:, 0]
    np.testing.assert_array_equal(df.velocities[:, 0], 1.0 * xhat)
    np.testing.assert_array_equal(df.velocities[:, 1], 0.0)


def test_parameter_moving_nothing_gives_zero_field():
    base = rectangle_net()
    paths = np.zeros((2, 4, 2))
    paths[0, :, 0] = 1.0
    fam = ExplicitControlPath([[0, 1], [0, 1]], base, paths)
    assert not np.any(control_velocity(fam, [0.2, 0.2], 1).velocities)


def test_default_fd_step_floor():
    assert default_fd_step(0.0) == 1e-3
    assert default_fd_step(0.5) == pytest.approx(5e-3)


def test_affine_consistency_exact():
    fam = uniform_scaling([[1.0, 2.0]])
    p, d = np.array([0.4]), 0.25
    df = control_velocity(fam, p, 0)
    np.testing.assert_allclose(fam.net(p + d).points, fam.net(p).points + d * df.velocities, atol=1e-15)


def test_chain_velocity_first_order(chain_fixture):
    fam, p, _ = chain_fixture
    for n in range(3):
        ref = control_velocity(fam, p, n, 1e-4).velocities
        diffs = [np.linalg.norm(control_velocity(fam, p, n, d).velocities - ref) for d in (1e-2, 5e-3, 2.5e-3)]
        if diffs[0] == 0:
            continue
        ratios = np.array(diffs[:-1]) / np.array(diffs[1:])
        assert np.all(np.abs(ratios - 2.0) < 0.1)
        assert diffs[0] <= 1.0 * 1e-2 * max(np.linalg.norm(ref), 1.0)


def test_chain_consistency_is_little_o(chain_fixture):
    fam, p, _ = chain_fixture
    for n in range(3):
        v = control_velocity(fam, p, n, 1e-6).velocities
        errs = []
        for d in (1e-2, 1e-3):
            q = p.copy()
            q[n] += d
            errs.append(np.linalg.norm(fam.net(q).points - fam.net(p).points - d * v) / d)
        assert errs[1] < 0.2 * errs[0] + 1e-9


def test_chain_velocity_backward_at_upper_face(chain_fixture):
    fam, _, _ = chain_fixture
    p = np.array([1.0, 0.5, 1.0])
    v = control_velocity(fam, p, 2, 1e-3).velocities
    q = p.copy()
    q[2] -= 1e-3
    np.testing.assert_allclose(v, (fam.net(p).points - fam.net(q).points) / 1e-3)


def test_chain_is_nonlinear_in_amplitude(chain_fixture):
    fam, _, _ = chain_fixture
    pts = [fam.net([0.5, 0.5, a]).points for a in (0.0, 0.5, 1.0)]
    assert np.abs(pts[0] + pts[2] - 2 * pts[1]).max() > 1e-6


def test_chain_regular_on_grid(chain_fixture):
    fam, p, _ = chain_fixture
    space = build_space(fam.net(p), "scalar", 2, subdivisions=(8, 4))
    grid = np.linspace(0.0, 1.0, 5)
    for q in itertools.product(grid, repeat=3):
        geo = space.geometry_at_quadrature(fam.net(np.array(q)))
        assert geo["det"].min() > 0


def test_cell_windows_partition(chain_fixture):
    fam, _, _ = chain_fixture
    cells = fam.cells
    assert cells[0, 0] == 0.0 and cells[-1, 1] == 1.0
    np.testing.assert_array_equal(cells[1:, 0], cells[:-1, 1])
    assert np.all(cells[:, 1] > cells[:, 0])


def test_chain_arc_weight_matches_default_layout():
    assert arc_weight(0.015, 0.05) == pytest.approx(ChainLayout().bump_weight, rel=1e-15)


def test_chain_validation():
    with pytest.raises(ValueError):
        MultiCellChain([[0.09, 0.13], [0.09, 0.13], [0.01, 0.05]])
    with pytest.raises(ValueError):
        MultiCellChain([[0.09, 0.13], [0.09, 0.13]])
    with pytest.raises(ValueError):
        ChainLayout(n_cells=1)


def test_family_round_trip(chain_fixture):
    fam, p, _ = chain_fixture
    for f in (fam, RECT, uniform_scaling([[1, 2]])):
        again = family_from_dict(f.to_dict())
        q = np.full(f.n_params, 0.3)
        np.testing.assert_array_equal(again.net(q).points, f.net(q).points)
    with pytest.raises(ValueError):
        family_from_dict({"kind": "torus", "bounds": [[0, 1]]})


def test_translation_field_has_zero_gradient():
    net = rectangle_net(2.0, 1.0)
    df = DisplacementField(np.tile([0.3, -1.2], (4, 1)), net)
    v, grad = eval_displacement(df, [0.2, 0.9])
    np.testing.assert_allclose(v, [0.3, -1.2])
    np.testing.assert_allclose(grad, 0.0, atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_scaling_field_has_identity_gradient(u, v):
    net = identity_net(uniform_knots([0, 0.5, 1], 2), uniform_knots([0, 1], 2))
    net = net.with_points(net.points * [1.5, 0.7] + [0.2, 0.1])
    df = DisplacementField(net.points, net)
    _, grad = eval_displacement(df, [u, v])
    np.testing.assert_allclose(grad, np.eye(2), atol=1e-12)


def test_chain_displacement_matches_fd(chain_fixture):
    fam, p, _ = chain_fixture
    h = 1e-6
    for n in range(3):
        df = control_velocity(fam, p, n)
        for xhat in ([0.21, 0.37], [0.5, 0.5], [0.83, 0.9]):
            xhat = np.array(xhat)
            value, grad = eval_displacement(df, xhat)
            _, jac = eval_point(df.net, xhat)
            for ax in range(2):
                e = np.eye(2)[ax] * h
                fd = (eval_displacement(df, xhat + e)[0] - eval_displacement(df, xhat - e)[0]) / (2 * h)
                scale = max(np.linalg.norm(grad @ jac), 1.0)
                assert np.linalg.norm(fd - grad @ jac[:, ax]) <= 1e-7 * scale


def test_singular_jacobian_reported():
    net = rectangle_net()
    flat = net.with_points(net.points * [1.0, 0.0])
    with pytest.raises(GeometryError, match="reference point"):
        eval_displacement(DisplacementField(np.zeros((4, 2)), flat), [0.5, 0.5])


def test_check_box_returns_array():
    assert check_box(0.5).shape == (1,)
