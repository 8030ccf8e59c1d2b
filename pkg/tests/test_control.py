import numpy as np
import pytest

from monospde.adjoint import solve_adjoint_pathwise, solve_adjoint_regression
from monospde.config import build_problem, with_overrides
from monospde.control import (Budget, ControlProblem, CostSpec, candidate_values, control_inner, evaluate_cost,
                              gradient, optimize, pontryagin_check, stationarity_residual, validate_cost)
from monospde.dynamics import identity
from monospde.errors import CapabilityError
from monospde.noise import make_noise_model
from monospde.paths import AdmissibleBox, ControlField, solve_forward

from helpers import driver_for, load, small_porous
from oracles import heat_discrete_exact


def test_trivial_costs_vanish():
    spec = small_porous(8)
    drv = driver_for(spec)
    u = ControlField.zeros(spec, drv.time_grid)
    path = solve_forward(spec, u, np.zeros(spec.m), drv)
    assert evaluate_cost(CostSpec(control_weight=2.0, boundary_weight=2.0), path) == 0.0
    assert evaluate_cost(CostSpec(terminal="quadratic_H", terminal_weight=2.0), path) == 0.0


def test_heat_tracking_cost_matches_quadrature():
    spec = small_porous(16, psi=identity(), mu_scale=0.0)
    drv = driver_for(spec, n_steps=10, n_samples=1, T=0.2)
    tg = drv.time_grid
    xi, h = spec.triple.xi, 1.0 / 16
    path = solve_forward(spec, ControlField.zeros(spec, tg), np.sin(np.pi * xi), drv)
    cost = CostSpec(state_weight=2.0, terminal="quadratic", terminal_weight=3.0)
    # x_j = r^j sin(pi xi) exactly for the scheme
    r = heat_discrete_exact(16, tg.dt, 1)[0] / np.sin(np.pi * h)
    s2 = np.sum(h * np.sin(np.pi * xi) ** 2)
    expected = sum(tg.dt * 0.5 * 2.0 * r ** (2 * j) * s2 for j in range(10)) + 0.5 * 3.0 * r**20 * s2
    assert evaluate_cost(cost, path) == pytest.approx(expected, rel=1e-10)


def test_gradient_of_pure_control_cost_is_the_control():
    spec = small_porous(8)
    drv = driver_for(spec)
    tg = drv.time_grid
    u = ControlField.constant(spec, tg, 0.7, -0.3)
    u.interior[0, 2] = 1.5
    path = solve_forward(spec, u, np.sin(np.pi * spec.triple.xi), drv)
    cost = CostSpec(control_weight=1.0, boundary_weight=1.0)
    G = gradient(cost, spec, path, solve_adjoint_pathwise(spec, path, cost))
    np.testing.assert_allclose(G.interior, u.interior, rtol=1e-12)
    np.testing.assert_allclose(G.boundary, u.boundary, rtol=1e-12)
    G0 = gradient(CostSpec(), spec, path, solve_adjoint_pathwise(spec, path, CostSpec()))
    assert np.all(G0.flat() == 0.0)


@pytest.mark.parametrize("bc", ["dirichlet", "neumann", "robin"])
def test_gradient_matches_central_differences(bc):
    spec = small_porous(8, bc=bc)
    drv = driver_for(spec, n_samples=8)
    tg = drv.time_grid
    x0 = np.sin(np.pi * spec.triple.xi)
    cost = CostSpec("c", 1.0, 0.5, 0.1, 0.2, 0.0, "quadratic", 1.0, 0.0)
    u = ControlField.constant(spec, tg, 0.3, 0.1)
    path = solve_forward(spec, u, x0, drv)
    G = gradient(cost, spec, path, solve_adjoint_pathwise(spec, path, cost))
    r = np.random.default_rng(1)
    v = ControlField(r.standard_normal((1, tg.n_steps, spec.m)), r.standard_normal((1, tg.n_steps, 2)))
    eps = 1e-5
    fd = (evaluate_cost(cost, solve_forward(spec, u + v * eps, x0, drv)) -
          evaluate_cost(cost, solve_forward(spec, u - v * eps, x0, drv))) / (2 * eps)
    assert control_inner(spec, tg, G, v) == pytest.approx(fd, rel=1e-6)


def test_stationarity_residual_cases():
    spec = small_porous(8)
    tg = driver_for(spec).time_grid
    box = AdmissibleBox(0.0, 1.0, 0.0, 1.0)
    inside = ControlField.constant(spec, tg, 0.5, 0.5)
    assert stationarity_residual(inside, ControlField.zeros(spec, tg), box).max == 0.0
    lower = ControlField.constant(spec, tg, 0.0, 0.0)
    assert stationarity_residual(lower, ControlField.constant(spec, tg, 0.4, 0.4), box).max == 0.0
    rep = stationarity_residual(lower, ControlField.constant(spec, tg, -0.25, -0.25), box)
    assert rep.max == pytest.approx(0.25) and rep.aggregate == pytest.approx(0.25)


def lq_problem(samples=16, box=None):
    cfg = with_overrides(load("lq"), samples=samples)
    pb = build_problem(cfg)
    return pb, ControlProblem(pb.spec, pb.cost, box or pb.box, pb.x0, pb.u0), pb.driver()


def test_lq_converges_with_monotone_history():
    pb, problem, drv = lq_problem()
    st = optimize(problem, drv, Budget(max_iter=300, tol=1e-7))
    assert st.converged
    costs = [h["cost"] for h in st.history]
    assert np.all(np.diff(costs) <= 0)
    assert stationarity_residual(st.u, st.grad, problem.box).max <= 1e-7


def test_active_box_stationarity():
    pb, problem, drv = lq_problem(box=AdmissibleBox(-0.2, 0.2, -0.1, 0.1))
    st = optimize(problem, drv, Budget(max_iter=300, tol=1e-8))
    assert st.converged and problem.box.contains(st.u)
    assert np.any(np.isclose(np.abs(st.u.interior), 0.2))
    assert stationarity_residual(st.u, st.grad, problem.box).max <= 1e-8


def test_zero_cost_landscape_stops_immediately():
    pb, problem, drv = lq_problem()
    problem.cost = CostSpec()
    st = optimize(problem, drv)
    assert st.converged and st.iterations == 0


def test_pontryagin_at_lq_optimum_and_away_from_it():
    pb, problem, drv = lq_problem(samples=64)
    st = optimize(problem, drv, Budget(max_iter=300, tol=1e-8))
    ra = solve_adjoint_regression(pb.spec, st.path, pb.cost)
    rep = pontryagin_check(pb.spec, pb.cost, st.path, ra, problem.box)
    assert rep.passed
    same = pontryagin_check(pb.spec, pb.cost, st.path, ra, problem.box, candidates="current")
    assert same.max_violation == 0.0
    bad = st.u + 1.0
    path = solve_forward(pb.spec, bad, pb.x0, drv)
    rep = pontryagin_check(pb.spec, pb.cost, path, solve_adjoint_regression(pb.spec, path, pb.cost), problem.box)
    assert not rep.passed and rep.max_violation - 3 * rep.standard_error > 0


def test_pontryagin_gating():
    pb, problem, drv = lq_problem()
    path = solve_forward(pb.spec, pb.u0, pb.x0, drv)
    with pytest.raises(ValueError, match="regression"):
        pontryagin_check(pb.spec, pb.cost, path, solve_adjoint_pathwise(pb.spec, path, pb.cost), pb.box)
    spec = small_porous(8, bc="robin")
    spec.noise = make_noise_model(spec.triple, 2, beta=1.0, gamma=0.5)
    with pytest.raises(CapabilityError, match="A~"):
        pontryagin_check(spec, pb.cost, path, None, pb.box)


def test_candidate_grids():
    np.testing.assert_allclose(candidate_values(-1.0, 1.0, np.zeros(2), 5)[0], [-1, -0.5, 0, 0.5, 1])
    np.testing.assert_allclose(candidate_values(-np.inf, np.inf, np.array([1.0]))[0],
                               [-7, -3, -1, 0, 2, 3, 5, 9])
    np.testing.assert_allclose(candidate_values(0.0, np.inf, np.array([1.0]))[0], [0, 0, 0, 0, 2, 3, 5, 9])


def test_cost_growth_validation():
    pb, _, _ = lq_problem()
    assert validate_cost(pb.cost, pb.triple)["passed"]
