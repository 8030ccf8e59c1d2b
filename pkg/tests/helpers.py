"""Shared builders for the test modules."""

import os

import monospde
import numpy as np
from monospde.config import build_problem, load_config
from monospde.dynamics import make_porous_media, tanh_family
from monospde.grid import BoundaryCondition, SpaceGrid1D, TimeGrid, build_triple
from monospde.noise import BrownianDriver, make_noise_model

CONFIG_DIR = os.path.join(os.path.dirname(monospde.__file__), "configs")
DYNAMICS_CONFIGS = ["porous_dirichlet", "porous_neumann", "porous_robin", "burgers", "divergence"]
ALL_CONFIGS = DYNAMICS_CONFIGS + ["lq"]


def config_path(name):
    return os.path.join(CONFIG_DIR, f"{name}.toml")


def load(name):
    return load_config(config_path(name))


def problem(name):
    return build_problem(load(name))


def dirichlet_triple(n_cells=8, kind="Hminus1_pivot"):
    return build_triple(SpaceGrid1D(n_cells), BoundaryCondition("dirichlet"), kind)


def small_porous(n_cells=8, n_modes=4, mu_scale=0.5, psi=None, bc="dirichlet"):
    kind = "Hminus1_pivot" if bc == "dirichlet" else "H1dual_pivot"
    alpha = (1.0, 2.0) if bc == "robin" else None
    tr = build_triple(SpaceGrid1D(n_cells), BoundaryCondition(bc, alpha), kind)
    mu = mu_scale * np.arange(1, n_modes + 1, dtype=float) ** -2
    noise = make_noise_model(tr, n_modes, mu)
    return make_porous_media(tr, psi or tanh_family(0.5, 1.0), noise)


def driver_for(spec, n_steps=8, n_samples=16, seed=3, T=0.5):
    return BrownianDriver.for_noise(spec.noise, TimeGrid(T, n_steps), n_samples, seed)

