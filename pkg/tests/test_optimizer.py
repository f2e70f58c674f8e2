import numpy as np
import pytest

from cavopt.config import load
from cavopt.objective import Objective, ObjectiveSpec
from cavopt.optimizer import OptimizationError, OptimizerConfig, fd_gradient, optimize
from cavopt.tracking import Tracker

from conftest import StubPipeline


def quadratic(n=1, target=0.3):
    """``0.5 (lam_ref - lam)^2`` with ``lam = 1 + sum(p)``, minimized on the plane ``sum(p) = target``."""
    pipe = StubPipeline(lambda p: 1.0 + p.sum(), lambda p: np.ones(p.size), n_params=n)
    return Objective(ObjectiveSpec("squared-error-lambda", lambda_ref=1.0 + target), pipe, Tracker(0))


def test_quadratic_converges():
    run = optimize(quadratic(), [0.9], OptimizerConfig(g_tol=1e-20, max_iterations=30))
    assert run.p_opt[0] == pytest.approx(0.3, abs=1e-6)
    assert run.iterations <= 30
    assert run.reason in ("g_tol", "step_tol", "stationary")


def test_solution_on_box_face():
    run = optimize(quadratic(target=-0.5), [0.6], OptimizerConfig(max_iterations=30))
    assert run.p_opt[0] == 0.0
    assert run.reason == "stationary"


def test_run_invariants():
    obj = quadratic(n=2, target=0.7)
    run = optimize(obj, [0.95, 0.9], OptimizerConfig(max_iterations=40, g_tol=1e-20))
    assert all(np.all((q >= 0) & (q <= 1)) for q in run.evaluated)
    g = [r.g for r in run.records]
    assert np.all(np.diff(g) <= 0)
    assert run.p_opt.sum() == pytest.approx(0.7, abs=1e-6)
    assert run.function_calls == len(run.evaluated)


def test_deterministic():
    a = optimize(quadratic(n=2), [0.8, 0.1], OptimizerConfig(g_tol=1e-20))
    b = optimize(quadratic(n=2), [0.8, 0.1], OptimizerConfig(g_tol=1e-20))
    np.testing.assert_array_equal(a.p_opt, b.p_opt)
    assert [r.g for r in a.records] == [r.g for r in b.records]


def test_fd_gradient_at_upper_corner_stays_in_box():
    obj = quadratic(n=2)
    ev = obj.evaluate([1.0, 1.0])
    grad = fd_gradient(obj, ev)
    np.testing.assert_allclose(grad, -(1.3 - 3.0) * np.ones(2), rtol=1e-5)
    assert all(np.all(q <= 1.0) for q in obj.evaluated)
    assert obj.evaluated[1][0] < 1.0 and obj.evaluated[2][1] < 1.0


def test_config_validation():
    for bad in ({"backtrack": 1.0}, {"g_tol": 0.0}, {"max_iterations": -1}, {"gradient": "adjoint"}):
        with pytest.raises(ValueError):
            OptimizerConfig(**bad)


def test_failure_is_wrapped_with_partial_result():
    def lam(p):
        if p[0] < 0.5:
            raise ArithmeticError("mesh folded")
        return 1.0 + p[0]

    pipe = StubPipeline(lam, lambda p: np.ones(1), n_params=1)
    obj = Objective(ObjectiveSpec("squared-error-lambda", lambda_ref=1.0), pipe, Tracker(0))
    with pytest.raises(OptimizationError) as info:
        optimize(obj, [0.9])
    partial = info.value.partial
    assert partial.reason == "error" and "mesh folded" in partial.error
    assert partial.start.p[0] == 0.9 and partial.p_opt[0] >= 0.5


@pytest.fixture(scope="module")
def rectangle():
    return load("rectangle")


def test_rectangle_fd_gradient_matches_closed_form(rectangle):
    obj = rectangle.make_objective()
    obj.fd_step = 1e-6
    for p in (0.2, 0.62, 1.0):
        ev = obj.evaluate([p])
        exact = obj.gradient(ev)[0]
        assert abs(fd_gradient(obj, ev)[0] - exact) <= 1e-4 * abs(exact)


def test_rectangle_modes_agree(rectangle):
    closed = optimize(rectangle.make_objective(), rectangle.p0, rectangle.optimizer)
    fd_sc = load("rectangle", gradient="fd")
    fd = optimize(fd_sc.make_objective(), fd_sc.p0, fd_sc.optimizer)
    assert abs(closed.p_opt[0] - fd.p_opt[0]) <= 1e-3
    assert closed.function_calls < fd.function_calls
    assert closed.p_opt[0] == pytest.approx(0.3, abs=1e-3)
