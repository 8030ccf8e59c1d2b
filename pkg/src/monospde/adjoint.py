"""Backward adjoint solvers and the duality check.

Both solvers run the transpose of the linearized state step
``z_{j+1} = M_j^{-1} (z_j + sigma_x(z_j) dW_j + ...)`` with
``M_j = I - dt d_x A(x_{j+1})``.  In Euclidean variables the recursion reads

    lam_n = grad h(x_n),   mu_{j+1} = M_j^{-T} lam_{j+1},
    lam_j = dt grad_x f_j + mu_{j+1} + sigma_x^T(mu_{j+1}, dW_j),

and the function-space costates are ``p = -lam / w`` (levels 0..n),
``p_stage_j = -mu_{j+1} / w`` and ``q^k_j = -mu_{j+1} dW^k_j / (dt w)``.
The pathwise solver keeps every sample's own continuation; the regression
solver replaces each continuation (and the martingale coefficient
``(C - C_hat) dW / dt``) by a least-squares projection on features of the
current state, which makes (p, q) adapted.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _tridiag
from .errors import NumericalError
from .noise import laplacian_eigenpairs


@dataclass
class AdjointPath:
    p: np.ndarray          # (N, n+1, m)
    p_stage: np.ndarray    # (N, n, m)
    q: np.ndarray          # (N, n, n_channels, m)
    method: str
    driver: object = None
    models: list = field(default_factory=list)
    basis: object = None


def _step_matrix_T(spec, x_next, dt):
    lo, di, up = spec.jac_bands(x_next)
    return _tridiag.transpose((-dt * lo, 1.0 - dt * di, -dt * up))


def solve_adjoint_pathwise(spec, base, cost, driver=None):
    """Exact algebraic transpose of the state scheme, sample by sample."""
    if driver is not None and not driver.same_as(base.driver):
        raise ValueError("driver differs from the one used for the base path")
    tr, tg = spec.triple, base.time_grid
    w, dt = tr.w, tg.dt
    dW = base.driver.increments
    x = base.x
    N, n = x.shape[0], tg.n_steps
    C = spec.noise.n_channels
    p = np.empty((N, n + 1, spec.m))
    p_stage = np.empty((N, n, spec.m))
    q = np.empty((N, n, C, spec.m))
    lam = cost.terminal_grad(tr, x[:, n])
    p[:, n] = -lam / w
    for j in range(n - 1, -1, -1):
        mu = _tridiag.solve(_step_matrix_T(spec, x[:, j + 1], dt), lam)
        p_stage[:, j] = -mu / w
        q[:, j] = -mu[:, None, :] * dW[j][:, :, None] / (dt * w)
        u_int, u_bd = base.control.at(j)
        lam = dt * cost.grad_x(tr, tg.times[j], x[:, j], u_int, u_bd) + mu + spec.sigma_x_T(mu, dW[j])
        p[:, j] = -lam / w
    if not np.all(np.isfinite(p)):
        from .errors import SolverError
        raise SolverError("non-finite values in the adjoint recursion")
    return AdjointPath(p, p_stage, q, "pathwise", base.driver)


@dataclass(frozen=True)
class RegressionBasis:
    """Features of the current state: ``linear`` (nodal values), ``spectral``
    (first ``n_spectral`` eigen-coefficients) or ``quadratic`` (nodal values plus
    products of the first ``n_spectral`` eigen-coefficients).  An intercept is
    always included and left unpenalized."""

    kind: str = "linear"
    n_spectral: int = 4
    ridge: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("linear", "spectral", "quadratic"):
            raise ValueError(f"unknown basis {self.kind!r}")

    def features(self, spec, x):
        if self.kind == "linear":
            return x
        if self.n_spectral > spec.noise.n_modes:
            raise ValueError("n_spectral must not exceed n_modes")
        _, e = laplacian_eigenpairs(spec.triple, self.n_spectral)
        c = (x * spec.triple.w) @ e.T
        if self.kind == "spectral":
            return c
        iu = np.triu_indices(self.n_spectral)
        quad = (c[:, :, None] * c[:, None, :])[:, iu[0], iu[1]]
        return np.concatenate([x, quad], axis=1)


@dataclass
class RegressionModel:
    mean: np.ndarray
    scale: np.ndarray
    keep: np.ndarray
    offset: np.ndarray
    coef: np.ndarray

    def predict(self, phi):
        z = (phi - self.mean)[:, self.keep] / self.scale[self.keep]
        out = self.offset + z @ self.coef
        return out


def fit(phi, y, ridge):
    """Ridge least squares on centered, standardized features with free intercept."""
    N = phi.shape[0]
    shape = y.shape[1:]
    Y = y.reshape(N, -1)
    mean = phi.mean(axis=0)
    pc = phi - mean
    sd = pc.std(axis=0)
    keep = sd > 1e-13 * np.maximum(1.0, np.abs(mean))
    offset = Y.mean(axis=0)
    if not keep.any() or N < 2:
        coef = np.zeros((0, Y.shape[1]))
        model = RegressionModel(mean, np.where(keep, sd, 1.0), keep, offset, coef)
        return np.broadcast_to(offset, Y.shape).reshape((N,) + shape), model
    Z = pc[:, keep] / sd[keep]
    G = Z.T @ Z / N + ridge * np.eye(Z.shape[1])
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > 1e13:
        raise NumericalError(f"regression design is rank deficient (condition {cond:.3e}, "
                             f"{int(keep.sum())} active features, {N} samples)")
    coef = np.linalg.solve(G, Z.T @ (Y - offset) / N)
    model = RegressionModel(mean, np.where(keep, sd, 1.0), keep, offset, coef)
    return (offset + Z @ coef).reshape((N,) + shape), model


def solve_adjoint_regression(spec, base, cost, driver=None, basis=None):
    """Least-squares Monte Carlo adjoint; ``(p_j, q_j)`` are functions of ``x_j``."""
    if driver is not None and not driver.same_as(base.driver):
        raise ValueError("driver differs from the one used for the base path")
    basis = basis or RegressionBasis()
    tr, tg = spec.triple, base.time_grid
    w, dt = tr.w, tg.dt
    dW = base.driver.increments
    x = base.x
    N, n = x.shape[0], tg.n_steps
    C = spec.noise.n_channels
    p = np.empty((N, n + 1, spec.m))
    p_stage = np.empty((N, n, spec.m))
    q = np.empty((N, n, C, spec.m))
    lam = cost.terminal_grad(tr, x[:, n])
    p[:, n] = -lam / w
    models = [None] * n
    for j in range(n - 1, -1, -1):
        mu = _tridiag.solve(_step_matrix_T(spec, x[:, j + 1], dt), lam)
        cont = -mu / w
        phi = basis.features(spec, x[:, j])
        c_hat, m_c = fit(phi, cont, basis.ridge)
        q_hat, m_q = fit(phi, (cont - c_hat)[:, None, :] * dW[j][:, :, None] / dt, basis.ridge)
        u_int, u_bd = base.control.at(j)
        lam_next = dt * cost.grad_x(tr, tg.times[j], x[:, j], u_int, u_bd) + mu + spec.sigma_x_T(mu, dW[j])
        p_hat, m_p = fit(phi, -lam_next / w, basis.ridge)
        p[:, j] = p_hat
        p_stage[:, j] = c_hat
        q[:, j] = q_hat
        models[j] = (m_c, m_q, m_p)
        lam = -w * p_hat
    return AdjointPath(p, p_stage, q, "regression", base.driver, models, basis)


def regression_replay(spec, adj, base, j):
    """Recompute ``(p_j, p_stage_j, q_j)`` from the stored models and ``x_j`` alone."""
    m_c, m_q, m_p = adj.models[j]
    phi = adj.basis.features(spec, base.x[:, j])
    N = phi.shape[0]
    return m_p.predict(phi), m_c.predict(phi), m_q.predict(phi).reshape((N,) + adj.q.shape[2:])


@dataclass
class DualityReport:
    absolute: float
    relative: float
    terms: dict
    standard_error: float


def check_duality(spec, base, adj, z, v, cost):
    """Residual of ``E sum dt [<z, d_x f> + <d_u A v, p> + <d_u sigma v, q>] + E <z_n, d_x h>``."""
    tr, tg = spec.triple, base.time_grid
    dt = tg.dt
    N = base.x.shape[0]
    t_f = np.zeros(N)
    t_a = np.zeros(N)
    t_s = np.zeros(N)
    for j in range(tg.n_steps):
        u_int, u_bd = base.control.at(j)
        v_int, v_bd = v.at(j)
        t_f += dt * np.sum(z.z[:, j] * cost.grad_x(tr, tg.times[j], base.x[:, j], u_int, u_bd), axis=-1)
        t_a += dt * tr.dual_pair(spec.jac_u(v_int, v_bd), adj.p_stage[:, j])
        if spec.noise.boundary_channel and v_bd is not None:
            sv = spec.noise.gamma * tr.boundary_lift(v_bd)
            t_s += dt * tr.dual_pair(sv, adj.q[:, j, -1])
    t_h = np.sum(z.z[:, -1] * cost.terminal_grad(tr, base.x[:, -1]), axis=-1)
    per = t_f + t_a + t_s + t_h
    total = per.mean()
    terms = {"state": float(t_f.mean()), "drift": float(t_a.mean()), "diffusion": float(t_s.mean()),
             "terminal": float(t_h.mean())}
    scale = sum(abs(v) for v in terms.values())
    rel = abs(total) / scale if scale > 0 else 0.0
    se = float(per.std(ddof=1) / np.sqrt(N)) if N > 1 else 0.0
    return DualityReport(float(abs(total)), float(rel), terms, se)
