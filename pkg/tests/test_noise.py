import numpy as np
import pytest

from monospde.grid import BoundaryCondition, SpaceGrid1D, TimeGrid, build_triple
from monospde.noise import (BrownianDriver, apply_sigma, laplacian_eigenpairs, make_noise_model, mu_rule,
                            validate_summability)

from helpers import dirichlet_triple
from oracles import dirichlet_modes

WEYL = lambda k: (np.pi * np.asarray(k, float)) ** 2


def test_eigenpairs_match_dense_oracle():
    tr = dirichlet_triple(16)
    lam, e = laplacian_eigenpairs(tr, 5)
    lam_ref, e_ref = dirichlet_modes(16, 5)
    np.testing.assert_allclose(lam, lam_ref, rtol=1e-10)
    np.testing.assert_allclose(e, e_ref, atol=1e-10)
    np.testing.assert_allclose(e @ np.diag(tr.w) @ e.T, np.eye(5), atol=1e-12)


def test_eigenpairs_range():
    with pytest.raises(ValueError):
        laplacian_eigenpairs(dirichlet_triple(4), 4)


def test_summability_verdicts():
    assert validate_summability(lambda k: k ** -2.0, WEYL, 1, "(d+1)/2").passed
    assert not validate_summability(lambda k: k ** -1.0, WEYL, 1, "(d+1)/2").passed
    assert validate_summability(lambda k: 0.0 * k, WEYL, 1, "(d+1)/2").passed


def test_summability_tail_estimate():
    rep = validate_summability(lambda k: k ** -2.0, WEYL, 1, "(d+1)/2")
    # sum pi^2 k^-2 = pi^4 / 6
    assert rep.partial_sums[-1] + rep.tail_estimate == pytest.approx(np.pi**4 / 6, rel=1e-4)


def test_increment_moments():
    tg = TimeGrid(1.0, 4)
    dW = BrownianDriver(tg, 100_000, 2, seed=7).sample_increments(1)
    var = dW.var(axis=0)
    assert np.all(np.abs(var / tg.dt - 1) <= 0.02)
    assert abs(np.corrcoef(dW.T)[0, 1]) <= 0.02


def test_common_random_numbers():
    tg = TimeGrid(1.0, 6)
    a = BrownianDriver(tg, 5, 3, seed=11)
    b = BrownianDriver(tg, 5, 3, seed=11)
    np.testing.assert_array_equal(a.increments, b.increments)
    # any step regenerates identically on its own
    np.testing.assert_array_equal(BrownianDriver(tg, 5, 3, seed=11).sample_increments(4), a.increments[4])
    assert not np.array_equal(BrownianDriver(tg, 5, 3, seed=12).increments, a.increments)
    assert not a.increments.flags.writeable


def test_future_reseeding_keeps_the_past():
    tg = TimeGrid(1.0, 6)
    a = BrownianDriver(tg, 4, 2, seed=1)
    b = a.with_future_reseeded(3, 99)
    np.testing.assert_array_equal(a.increments[:3], b.increments[:3])
    assert not np.any(a.increments[3:] == b.increments[3:])
    assert not a.same_as(b)


def test_step_range():
    with pytest.raises(ValueError):
        BrownianDriver(TimeGrid(1.0, 3), 2, 1, 0).sample_increments(3)


def test_sigma_definitions(rng):
    tr = dirichlet_triple(8)
    model = make_noise_model(tr, 1, mu=[1.0])
    e1 = model.e[0]
    np.testing.assert_allclose(apply_sigma(model, e1, np.array([1.0])), e1 * e1)
    np.testing.assert_array_equal(apply_sigma(model, np.zeros(tr.m), np.array([0.7])), 0.0)
    model = make_noise_model(tr, 4)
    x, dW = rng.standard_normal(tr.m), rng.standard_normal(4)
    np.testing.assert_allclose(apply_sigma(model, x, 2.5 * dW), 2.5 * apply_sigma(model, x, dW), rtol=1e-12)
    np.testing.assert_allclose(apply_sigma(model, x, dW), np.einsum("c,cm->m", dW, model.modes(x)), rtol=1e-12)


def test_robin_boundary_channel():
    tr = build_triple(SpaceGrid1D(8), BoundaryCondition("robin", (1.0, 2.0)), "H1dual_pivot")
    model = make_noise_model(tr, 3, beta=1.0, gamma=0.5)
    assert model.boundary_channel and model.n_channels == 4
    np.testing.assert_array_equal(apply_sigma(model, np.zeros(tr.m), np.ones(4), np.zeros(2)), 0.0)
    out = apply_sigma(model, np.zeros(tr.m), np.array([0, 0, 0, 2.0]), np.array([1.0, 0.0]))
    np.testing.assert_allclose(out, 0.5 * 2.0 * tr.boundary_lift([1.0, 0.0]))


def test_mu_rules():
    np.testing.assert_allclose(mu_rule("power", 3, 0.5, 2.0), [0.5, 0.125, 0.5 / 9])
    np.testing.assert_allclose(mu_rule("constant", 2, 0.3), [0.3, 0.3])
    with pytest.raises(ValueError):
        mu_rule("list", 3, values=[1.0])
    with pytest.raises(ValueError):
        make_noise_model(dirichlet_triple(8), 2, beta=1.0)
