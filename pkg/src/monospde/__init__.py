"""Adjoint-based optimality machinery for controlled monotone stochastic evolution
equations on uniform 1D grids."""

__version__ = "0.1.0"

from .grid import TimeGrid, SpaceGrid1D, BoundaryCondition, DiscreteTriple, build_triple, pair, neumann_trace
from .noise import NoiseModel, BrownianDriver, make_noise_model, apply_sigma, validate_summability
from .dynamics import (ScalarNonlinearity, HypothesisConstants, DynamicsSpec, make_porous_media, make_burgers,
                       make_divergence_form, validate_hypotheses)
from .paths import (ControlField, AdmissibleBox, StatePath, LinearizedPath, solve_forward, solve_linearized,
                    spike_control, solve_spike_linearized, lipschitz_probe, apriori_bound)
from .adjoint import AdjointPath, RegressionBasis, solve_adjoint_pathwise, solve_adjoint_regression, check_duality
from .control import (CostSpec, evaluate_cost, gradient, project, optimize, stationarity_residual,
                      pontryagin_check, hamiltonian)

__all__ = [n for n in dir() if not n.startswith("_")]
