import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cavopt.assembly import assemble, build_space
from cavopt.eigen import C0, EigenError, freq_to_lambda, gevp_residuals, lambda_to_freq, solve_gevp

from conftest import unit_square_net


def test_diagonal_example():
    sol = solve_gevp((np.diag([2.0, 8.0]), np.eye(2)), 2)
    np.testing.assert_allclose(sol.eigenvalues, [2.0, 8.0])
    np.testing.assert_allclose(np.abs(sol.eigenvectors), np.eye(2), atol=1e-15)


def test_sign_convention():
    rng = np.random.default_rng(3)
    A = rng.random((6, 6))
    sol = solve_gevp((A + A.T + 6 * np.eye(6), np.eye(6)), 4)
    for v in sol.eigenvectors.T:
        assert v[np.argmax(np.abs(v))] > 0


def test_mass_not_definite():
    with pytest.raises(EigenError):
        solve_gevp((np.eye(2), np.diag([1.0, -1.0])), 1)


def test_frequency_examples():
    assert lambda_to_freq(0.0) == 0.0
    assert lambda_to_freq(1.0) == pytest.approx(C0 / (2 * math.pi), rel=1e-15)
    assert lambda_to_freq(1.0) == pytest.approx(4.7713e7, rel=1e-4)
    lam = (2 * math.pi * 1.3e9 / C0) ** 2
    assert lambda_to_freq(lam) == pytest.approx(1.3e9, rel=1e-12)
    with pytest.raises(ValueError):
        lambda_to_freq(-1.0)


@settings(max_examples=100)
@given(st.floats(1e-3, 1e12), st.floats(1e-3, 1e12))
def test_frequency_round_trip_and_monotone(a, b):
    assert freq_to_lambda(lambda_to_freq(a)) == pytest.approx(a, rel=1e-12)
    if a < b:
        assert lambda_to_freq(a) <= lambda_to_freq(b)


def test_unit_square_scalar_spectrum(unit_square_scalar):
    _, _, system = unit_square_scalar
    sol = solve_gevp(system, 3)
    exact = np.pi ** 2 * np.array([2.0, 5.0, 5.0])
    assert np.all(np.abs(sol.eigenvalues - exact) / exact <= 1e-3)
    assert sol.kernel_cut == 0
    assert (1, 2) in sol.degenerate or np.isclose(sol.eigenvalues[1], sol.eigenvalues[2], rtol=1e-6)


def test_solution_invariants(unit_square_scalar):
    _, _, system = unit_square_scalar
    sol = solve_gevp(system, 6)
    assert np.all(np.diff(sol.eigenvalues) >= 0)
    E = sol.eigenvectors
    np.testing.assert_allclose(E.T @ (system.M @ E), np.eye(6), atol=1e-10)
    assert gevp_residuals(system, sol).max() <= 1e-9


@pytest.fixture(scope="module")
def curl_square():
    net = unit_square_net()
    space = build_space(net, "curl", 2, subdivisions=(8, 8))
    system = assemble(space, net)
    return space, system, solve_gevp(system, 4, kernel_hint=space.kernel_dim)


def test_curl_first_physical_pair(curl_square):
    _, _, sol = curl_square
    np.testing.assert_allclose(sol.eigenvalues[:2], np.pi ** 2, rtol=1e-3)
    assert sol.eigenvalues[2] == pytest.approx(2 * np.pi ** 2, rel=1e-3)


def test_kernel_filter(curl_square):
    space, system, sol = curl_square
    assert sol.kernel_cut == space.kernel_dim
    assert np.all(sol.kernel_eigenvalues < sol.threshold)
    assert np.all(sol.eigenvalues > sol.threshold)
    assert sol.threshold < 1e-3 * sol.eigenvalues[0]


def test_kernel_hint_only_sizes_the_subset(curl_square):
    _, system, sol = curl_square
    other = solve_gevp(system, 4)
    np.testing.assert_allclose(other.eigenvalues, sol.eigenvalues, rtol=1e-12)


def test_ordering_stable_under_tiny_perturbation(unit_square_scalar):
    _, _, system = unit_square_scalar
    K = system.K.toarray()
    rng = np.random.default_rng(4)
    E = rng.standard_normal(K.shape)
    E = 1e-12 * np.linalg.norm(K) * (E + E.T) / np.linalg.norm(E + E.T)
    a = solve_gevp((K, system.M), 6)
    b = solve_gevp((K + E, system.M), 6)
    lam = a.eigenvalues
    rel = np.abs(lam[:, None] - lam[None, :]) / lam[None, :]
    np.fill_diagonal(rel, np.inf)
    isolated = np.flatnonzero(rel.min(axis=1) > 1e-6)
    assert isolated.size >= 2
    overlap = np.abs(np.einsum("ij,ij->j", a.eigenvectors, system.M @ b.eigenvectors))
    assert np.all(overlap[isolated] > 0.99)
    np.testing.assert_allclose(b.eigenvalues, a.eigenvalues, rtol=1e-9)
