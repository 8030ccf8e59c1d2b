import numpy as np
import pytest

from monospde.dynamics import identity
from monospde.errors import CapabilityError
from monospde.grid import TimeGrid
from monospde.noise import BrownianDriver, make_noise_model
from monospde.paths import (AdmissibleBox, ControlField, apriori_bound, lipschitz_probe, project, snap_spike,
                            solve_forward, solve_linearized, solve_spike_linearized, spike_control, x_norm)

from helpers import driver_for, small_porous
from oracles import heat_analytic, heat_discrete_exact


def sine_control(spec, tg, amp=1.0):
    u = ControlField.zeros(spec, tg)
    u.interior[0] = amp * np.outer(np.cos(tg.times[:-1]), np.sin(np.pi * spec.triple.xi))
    if u.boundary is not None:
        u.boundary[0] = 0.3 * amp
    return u


def test_heat_matches_discrete_and_analytic_solution():
    spec = small_porous(32, psi=identity(), mu_scale=0.0)
    drv = driver_for(spec, n_steps=40, n_samples=1, T=0.1)
    x0 = np.sin(np.pi * spec.triple.xi)
    path = solve_forward(spec, ControlField.zeros(spec, drv.time_grid), x0, drv)
    np.testing.assert_allclose(path.x[0, -1], heat_discrete_exact(32, 0.1, 40), rtol=1e-10)
    err = np.sqrt(np.sum(spec.triple.w * (path.x[0, -1] - heat_analytic(spec.triple.xi, 0.1)) ** 2))
    assert err <= 2.0 * (0.1 / 40 + (1 / 32) ** 2)


def test_zero_data_stays_zero():
    spec = small_porous(8)
    for seed in (0, 1, 2):
        drv = driver_for(spec, seed=seed)
        path = solve_forward(spec, ControlField.zeros(spec, drv.time_grid), np.zeros(spec.m), drv)
        assert np.all(path.x == 0.0)


def test_newton_solves_the_implicit_step():
    spec = small_porous(8)
    drv = driver_for(spec, n_samples=4)
    tg = drv.time_grid
    u = sine_control(spec, tg, 2.0)
    x0 = 3 * np.sin(np.pi * spec.triple.xi)
    path = solve_forward(spec, u, x0, drv)
    dW = drv.increments
    for j in range(tg.n_steps):
        ui, ub = u.at(j)
        xj, xn = path.x[:, j], path.x[:, j + 1]
        res = xn - xj - tg.dt * spec.drift(0.0, xn, ui, ub) - spec.sigma(0.0, xj, ub, dW[j])
        assert np.abs(res).max() <= 1e-11 * max(1.0, np.abs(xn).max())


def test_forward_shape_checks():
    spec = small_porous(8)
    drv = driver_for(spec)
    with pytest.raises(ValueError):
        solve_forward(spec, ControlField.zeros(spec, TimeGrid(0.5, 4)), np.zeros(spec.m), drv)
    with pytest.raises(ValueError):
        solve_forward(spec, ControlField.zeros(spec, drv.time_grid), np.zeros(3), drv)


def test_future_noise_does_not_change_the_past():
    spec = small_porous(8)
    drv = driver_for(spec)
    u = sine_control(spec, drv.time_grid)
    x0 = np.sin(np.pi * spec.triple.xi)
    a = solve_forward(spec, u, x0, drv)
    b = solve_forward(spec, u, x0, drv.with_future_reseeded(5, 1234))
    # x_{j+1} depends on increments up to index j
    np.testing.assert_array_equal(a.x[:, :6], b.x[:, :6])
    assert not np.allclose(a.x[:, 6:], b.x[:, 6:])


def test_linearized_zero_direction():
    spec = small_porous(8)
    drv = driver_for(spec)
    u = sine_control(spec, drv.time_grid)
    base = solve_forward(spec, u, np.sin(np.pi * spec.triple.xi), drv)
    assert np.all(solve_linearized(spec, base, ControlField.zeros(spec, drv.time_grid)).z == 0.0)


def test_linear_dynamics_derivative_is_the_difference():
    spec = small_porous(8, psi=identity())
    drv = driver_for(spec)
    tg = drv.time_grid
    u, v = sine_control(spec, tg), sine_control(spec, tg, -0.7) + 0.2
    x0 = np.sin(np.pi * spec.triple.xi)
    base = solve_forward(spec, u, x0, drv)
    z = solve_linearized(spec, base, v).z
    diff = solve_forward(spec, u + v, x0, drv).x - base.x
    np.testing.assert_allclose(z, diff, atol=1e-11 * np.abs(diff).max())


def test_gateaux_remainder_is_second_order():
    spec = small_porous(12)
    drv = driver_for(spec)
    tg = drv.time_grid
    u, v = sine_control(spec, tg), sine_control(spec, tg, 3.0) + 1.0
    x0 = np.sin(np.pi * spec.triple.xi)
    base = solve_forward(spec, u, x0, drv)
    z = solve_linearized(spec, base, v).z
    eps = np.array([1e-1, 1e-2, 1e-3])
    rem = [x_norm(spec, solve_forward(spec, u + v * e, x0, drv).x - base.x - e * z, tg.dt) for e in eps]
    assert np.polyfit(np.log(eps), np.log(rem), 1)[0] >= 1.9


def test_spike_control_windows():
    spec = small_porous(8)
    tg = TimeGrid(1.0, 8)
    u = ControlField.constant(spec, tg, 1.0, 0.5)
    v = ControlField.constant(spec, tg, -1.0, -0.5)
    full = spike_control(u, v, 0.0, 1.0, tg)
    np.testing.assert_array_equal(full.interior, v.interior)
    np.testing.assert_array_equal(full.boundary, v.boundary)
    one = spike_control(u, v, 0.25, tg.dt, tg)
    changed = np.flatnonzero(np.any(one.interior[0] != u.interior[0], axis=-1))
    np.testing.assert_array_equal(changed, [2])
    np.testing.assert_array_equal(spike_control(u, u, 0.25, 0.5, tg).interior, u.interior)
    assert snap_spike(tg, 0.5, 0.3) == (4, 6)
    with pytest.raises(ValueError):
        snap_spike(tg, 1.0, 0.1)


def test_spike_with_same_control_is_zero():
    spec = small_porous(8)
    drv = driver_for(spec)
    u = sine_control(spec, drv.time_grid)
    base = solve_forward(spec, u, np.sin(np.pi * spec.triple.xi), drv)
    r = solve_spike_linearized(spec, base, u, u, 0.25, 0.125)
    assert np.all(r.z == 0.0)
    assert r.diagnostics["state_difference_norm"] == 0.0


def test_spike_requires_control_independent_noise():
    spec = small_porous(8, bc="robin")
    spec.noise = make_noise_model(spec.triple, 2, beta=1.0, gamma=0.5)
    drv = BrownianDriver.for_noise(spec.noise, TimeGrid(0.5, 4), 2, 0)
    u = ControlField.zeros(spec, drv.time_grid)
    base = solve_forward(spec, u, np.zeros(spec.m), drv)
    with pytest.raises(CapabilityError, match="A~"):
        solve_spike_linearized(spec, base, u, u, 0.0, 0.125)


def test_spike_asymptotics_are_first_order():
    spec = small_porous(16)
    drv = driver_for(spec, n_steps=128, n_samples=8)
    tg = drv.time_grid
    u = sine_control(spec, tg)
    # a smooth spike; a constant one excites fast boundary modes that saturate at this resolution
    v = u.copy()
    v.interior[...] += np.sin(np.pi * spec.triple.xi)
    base = solve_forward(spec, u, np.sin(np.pi * spec.triple.xi), drv)
    eps = np.array([1, 2, 4, 8]) * tg.dt
    dx, dz = [], []
    for e in eps:
        r = solve_spike_linearized(spec, base, u, v, 0.25, e)
        dx.append(r.diagnostics["state_difference_norm"])
        dz.append(r.diagnostics["z_norm"])
    for vals in (dx, dz):
        assert 0.9 <= np.polyfit(np.log(eps), np.log(vals), 1)[0] <= 1.1


def test_bounds_hold_and_degenerate_correctly():
    spec = small_porous(8)
    drv = driver_for(spec)
    tg = drv.time_grid
    u = sine_control(spec, tg)
    x0 = np.sin(np.pi * spec.triple.xi)
    ap = apriori_bound(spec, solve_forward(spec, u, x0, drv), c1=2.0)
    assert ap.passed and 0 < ap.lhs <= ap.rhs
    same = lipschitz_probe(spec, u, u, x0, drv, c1=2.0)
    assert same.lhs == 0.0 and same.rhs == 0.0 and same.passed
    one = lipschitz_probe(spec, u, u + 0.5, x0, drv, c1=2.0)
    two = lipschitz_probe(spec, u, u + 1.0, x0, drv, c1=2.0)
    assert one.passed and two.passed
    assert 0 < one.lhs < two.lhs
    assert two.rhs == pytest.approx(2 * one.rhs, rel=1e-12)


def test_control_field_algebra():
    spec = small_porous(8)
    tg = TimeGrid(1.0, 4)
    u = ControlField.constant(spec, tg, 1.0, 2.0)
    w = (u * 2.0 - u) + 1.0
    np.testing.assert_array_equal(w.interior, 2.0)
    np.testing.assert_array_equal(w.boundary, 3.0)
    np.testing.assert_array_equal(u.from_flat(u.flat()).interior, u.interior)
    with pytest.raises(ValueError):
        ControlField(np.zeros((2, 3)))


def test_projection():
    spec = small_porous(8)
    tg = TimeGrid(1.0, 4)
    box = AdmissibleBox(0.0, np.inf, -1.0, 1.0)
    u = ControlField.constant(spec, tg, -1.0, 3.0)
    p = project(u, box)
    np.testing.assert_array_equal(p.interior, 0.0)
    np.testing.assert_array_equal(p.boundary, 1.0)
    np.testing.assert_array_equal(project(p, box).flat(), p.flat())
    inside = ControlField.constant(spec, tg, 0.5, 0.5)
    np.testing.assert_array_equal(project(inside, box).flat(), inside.flat())
    assert box.contains(p) and not box.contains(u)
    with pytest.raises(ValueError):
        AdmissibleBox(1.0, 0.0)
