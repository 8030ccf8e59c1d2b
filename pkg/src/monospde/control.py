"""Costs, reduced gradients, projected-gradient optimization and the pointwise
optimality checks (box stationarity and the Hamiltonian maximum condition).

Cost values are integrated quantities: running costs use the lumped mass and
the left-endpoint rule in time, matching the explicit treatment of the control
in the state scheme.  Gradients are Riesz representatives in the control inner
product ``<a, b>_U = E sum_j dt (sum_i w_i a_i b_i + sum_b a_b b_b)``.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CapabilityError, OptimizerError
from .paths import ControlField, project, solve_forward  # noqa: F401  (project re-exported)


def _values(v, *args):
    return np.asarray(v(*args), float) if callable(v) else np.asarray(v, float)


@dataclass(frozen=True)
class CostSpec:
    """Quadratic tracking costs.

    Running cost ``f = s [kappa/2 |x - target|^2 + nu/2 |u|^2 + eta/2 |x_xi|^2]``
    (L^2 norms), boundary cost ``g = s nu_b/2 |u^b|^2`` and terminal cost ``h``
    chosen by ``terminal``: ``none``, ``quadratic`` (``kappa_T/2 |x - g|^2``),
    ``linear`` (``int g x``) or ``quadratic_H`` (``kappa_T/2 |x|_H^2``).
    Targets may be numbers or callables of ``(t, xi)`` / ``xi``.
    """

    name: str = "custom"
    state_weight: float = 0.0
    target: object = 0.0
    control_weight: float = 0.0
    boundary_weight: float = 0.0
    gradient_weight: float = 0.0
    terminal: str = "none"
    terminal_weight: float = 0.0
    terminal_target: object = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.terminal not in ("none", "quadratic", "linear", "quadratic_H"):
            raise ValueError(f"unknown terminal cost {self.terminal!r}")

    def scaled(self, s):
        return replace(self, scale=self.scale * s)

    # ---- running cost ---------------------------------------------------
    def running(self, triple, t, x, u_int, u_bd=None):
        s, w = self.scale, triple.w
        d = x - _values(self.target, t, triple.xi)
        val = 0.5 * self.state_weight * np.sum(w * d * d, axis=-1)
        val = val + 0.5 * self.control_weight * np.sum(w * u_int * u_int, axis=-1)
        if self.gradient_weight:
            val = val + 0.5 * self.gradient_weight * np.sum(x * triple.apply_stiffness(x), axis=-1)
        if u_bd is not None and self.boundary_weight:
            val = val + 0.5 * self.boundary_weight * np.sum(u_bd * u_bd, axis=-1)
        return s * val

    def grad_x(self, triple, t, x, u_int=None, u_bd=None):
        """Euclidean gradient of the running cost in x."""
        g = self.state_weight * triple.w * (x - _values(self.target, t, triple.xi))
        if self.gradient_weight:
            g = g + self.gradient_weight * triple.apply_stiffness(x)
        return self.scale * g

    def grad_u(self, triple, t, x, u_int, u_bd=None):
        """Euclidean gradients in (interior, boundary) control."""
        gi = self.scale * self.control_weight * triple.w * u_int
        gb = None if u_bd is None else self.scale * self.boundary_weight * u_bd
        return gi, gb

    # ---- terminal cost ------------------------------------------------
    def terminal_value(self, triple, x):
        s, w = self.scale, triple.w
        if self.terminal == "none":
            return np.zeros(np.shape(x)[:-1])
        if self.terminal == "linear":
            return s * np.sum(w * _values(self.terminal_target, triple.xi) * x, axis=-1)
        if self.terminal == "quadratic":
            d = x - _values(self.terminal_target, triple.xi)
            return 0.5 * s * self.terminal_weight * np.sum(w * d * d, axis=-1)
        return 0.5 * s * self.terminal_weight * triple.h_inner(x, x)

    def terminal_grad(self, triple, x):
        s, w = self.scale, triple.w
        if self.terminal == "none":
            return np.zeros_like(x)
        if self.terminal == "linear":
            return s * np.broadcast_to(w * _values(self.terminal_target, triple.xi), np.shape(x)).copy()
        if self.terminal == "quadratic":
            return s * self.terminal_weight * w * (x - _values(self.terminal_target, triple.xi))
        if triple.kind == "L2_pivot":
            return s * self.terminal_weight * w * x
        return s * self.terminal_weight * w * triple.riesz_solve(x)


def lq_tracking(state_weight=1.0, target=0.0, control_weight=0.1, terminal_weight=1.0,
                terminal_target=0.0):
    return CostSpec("lq_tracking", state_weight, target, control_weight, 0.0, 0.0,
                    "quadratic", terminal_weight, terminal_target)


def boundary_tracking(state_weight=1.0, target=0.0, control_weight=0.1, boundary_weight=0.1,
                      terminal_density=0.0):
    """Tracking with boundary control cost and a linear terminal functional ``int g x``."""
    return CostSpec("boundary_tracking", state_weight, target, control_weight, boundary_weight, 0.0,
                    "linear", 0.0, terminal_density)


def burgers_tracking(state_weight=1.0, target=0.0, control_weight=0.1, gradient_weight=0.01,
                     terminal_weight=1.0, terminal_target=0.0):
    """Tracking with a gradient-dependent running cost ``eta/2 |x_xi|^2``."""
    return CostSpec("burgers_tracking", state_weight, target, control_weight, 0.0, gradient_weight,
                    "quadratic", terminal_weight, terminal_target)


COST_CATALOG = {"lq_tracking": lq_tracking, "boundary_tracking": boundary_tracking,
                "burgers_tracking": burgers_tracking}


def validate_cost(cost, triple, state_range=(-10.0, 10.0), count=200, seed=0):
    """Sampled growth bounds ``|d f| <= M + C |x| + C |u|`` (lumped L^2 norms)."""
    rng = np.random.default_rng(seed)
    s = abs(cost.scale)
    lam_max = triple.riesz_eigenvalues()[-1]
    C = s * max(cost.state_weight + cost.gradient_weight * lam_max, cost.control_weight,
                cost.boundary_weight, cost.terminal_weight)
    tgt = np.broadcast_to(_values(cost.target, 0.0, triple.xi), (triple.m,))
    ttg = np.broadcast_to(_values(cost.terminal_target, triple.xi), (triple.m,))
    l2 = lambda v: np.sqrt(np.sum(triple.w * v * v))
    M = s * (cost.state_weight * l2(tgt) + (1 + cost.terminal_weight) * l2(ttg))
    worst = 0.0
    for _ in range(count):
        x = rng.uniform(*state_range, triple.m)
        u = rng.uniform(*state_range, triple.m)
        ub = rng.uniform(*state_range, 2)
        gx = cost.grad_x(triple, 0.0, x) / triple.w
        gi, gb = cost.grad_u(triple, 0.0, x, u, ub)
        gh = cost.terminal_grad(triple, x) / triple.w
        lhs = max(l2(gx) + l2(gi / triple.w) + np.linalg.norm(gb), l2(gh))
        rhs = M + C * (l2(x) + l2(u) + np.linalg.norm(ub)) + 1e-12
        worst = max(worst, lhs / rhs)
    return {"passed": bool(worst <= 1.0 + 1e-9), "observed_ratio": float(worst), "M": float(M), "C": float(C)}


# ---- cost and gradient ------------------------------------------------------

def cost_samples(cost, base, u=None):
    """Per-sample discrete cost ``sum_j dt f(t_j, x_j, u_j) + h(x_n)``."""
    u = base.control if u is None else u
    tr = base.spec.triple
    tg = base.time_grid
    acc = np.zeros(base.x.shape[0])
    for j in range(tg.n_steps):
        u_int, u_bd = u.at(j)
        acc = acc + tg.dt * cost.running(tr, tg.times[j], base.x[:, j], u_int, u_bd)
    return acc + cost.terminal_value(tr, base.x[:, -1])


def evaluate_cost(cost, base, u=None):
    vals = cost_samples(cost, base, u)
    if not np.all(np.isfinite(vals)):
        from .errors import SolverError
        raise SolverError("non-finite cost")
    return float(vals.mean())


def control_inner(spec, time_grid, a, b):
    """``<a, b>_U`` averaged over the (broadcast) sample axis."""
    val = np.sum(spec.triple.w * a.interior * b.interior, axis=(-1, -2))
    if a.boundary is not None:
        val = val + np.sum(a.boundary * b.boundary, axis=(-1, -2))
    return float(time_grid.dt * np.mean(val))


def gradient(cost, spec, base, adj, per_sample=None):
    """Reduced gradient ``E[d_u f - (d_u A)^* p - (d_u sigma)^* q]`` per (step, node).

    ``adj`` must be the pathwise adjoint of ``base`` (same driver), which makes
    the result the exact gradient of the discrete Monte Carlo cost.  The sample
    axis is averaged for deterministic controls unless ``per_sample`` is set.
    """
    if adj.driver is not None and not adj.driver.same_as(base.driver):
        raise ValueError("adjoint and base path use different drivers")
    tr, tg = spec.triple, base.time_grid
    u = base.control
    N, n = base.x.shape[0], tg.n_steps
    g_int = np.empty((N, n, spec.m))
    g_bd = np.empty((N, n, 2)) if spec.has_boundary else None
    for j in range(n):
        u_int, u_bd = u.at(j)
        fi, fb = cost.grad_u(tr, tg.times[j], base.x[:, j], u_int, u_bd)
        ai, ab = spec.adjoint_u(adj.p_stage[:, j])
        g_int[:, j] = fi / tr.w - ai
        if g_bd is not None:
            sb = spec.adjoint_sigma_u(adj.q[:, j])
            g_bd[:, j] = (0.0 if fb is None else fb) - ab - (0.0 if sb is None else sb)
    G = ControlField(g_int, g_bd)
    if per_sample is None:
        per_sample = not u.deterministic
    return G if per_sample else G.mean_over_samples()


def directional_derivative(cost, spec, base, lin, v):
    """``E sum_j dt (<z_j, d_x f> + <v_j, d_u f>) + E <z_n, d_x h>`` from a linearized path."""
    tr, tg = spec.triple, base.time_grid
    acc = np.zeros(base.x.shape[0])
    for j in range(tg.n_steps):
        u_int, u_bd = base.control.at(j)
        v_int, v_bd = v.at(j)
        acc = acc + tg.dt * np.sum(lin.z[:, j] * cost.grad_x(tr, tg.times[j], base.x[:, j]), axis=-1)
        fi, fb = cost.grad_u(tr, tg.times[j], base.x[:, j], u_int, u_bd)
        acc = acc + tg.dt * np.sum(v_int * fi, axis=-1)
        if fb is not None:
            acc = acc + tg.dt * np.sum(v_bd * fb, axis=-1)
    acc = acc + np.sum(lin.z[:, -1] * cost.terminal_grad(tr, base.x[:, -1]), axis=-1)
    return float(acc.mean())


# ---- stationarity -------------------------------------------------------

@dataclass
class StationarityReport:
    pointwise: ControlField
    aggregate: float
    max: float


def stationarity_residual(u, grad, box):
    """Clamped-gradient residual ``|u - P(u - grad)|`` per lattice point, with its
    root-mean-square and maximum."""
    n = max(u.n_samples, grad.n_samples)
    bu = lambda a: None if a is None else np.broadcast_to(a, (n,) + a.shape[1:])
    uu = ControlField(bu(u.interior), bu(u.boundary))
    r = uu - box.project(uu - grad)
    r = ControlField(np.abs(r.interior), None if r.boundary is None else np.abs(r.boundary))
    flat = r.flat()
    agg = float(np.sqrt(np.mean(flat ** 2))) if flat.size else 0.0
    return StationarityReport(r, agg, float(flat.max()) if flat.size else 0.0)


# ---- optimizer ----------------------------------------------------------------

@dataclass
class ControlProblem:
    spec: object
    cost: CostSpec
    box: object
    x0: np.ndarray
    u0: ControlField = None


@dataclass
class Budget:
    max_iter: int = 200
    tol: float = 1e-7
    max_backtracks: int = 50
    armijo_c: float = 1e-4
    initial_step: float = 1.0


@dataclass
class OptimizerState:
    u: ControlField
    cost: float
    grad: ControlField
    step: float
    history: list = field(default_factory=list)
    converged: bool = False
    path: object = None
    adjoint: object = None
    armijo_c: float = 1e-4

    @property
    def iterations(self):
        return len(self.history) - 1


def _evaluate(problem, u, driver, with_gradient=True):
    from .adjoint import solve_adjoint_pathwise
    path = solve_forward(problem.spec, u, problem.x0, driver)
    J = evaluate_cost(problem.cost, path)
    if not with_gradient:
        return path, J, None, None
    adj = solve_adjoint_pathwise(problem.spec, path, problem.cost)
    return path, J, gradient(problem.cost, problem.spec, path, adj, per_sample=not u.deterministic), adj


def optimize(problem, driver, budget=None):
    """Projected gradient with Armijo backtracking on the common-random-numbers cost.

    Trial steps follow the Barzilai-Borwein rule.  Iteration stops once the
    maximal clamped-gradient residual is at most ``budget.tol``.
    """
    budget = budget or Budget()
    spec, box, tg = problem.spec, problem.box, driver.time_grid
    u = problem.u0 if problem.u0 is not None else ControlField.zeros(spec, tg)
    u = box.project(u)
    path, J, G, adj = _evaluate(problem, u, driver)
    step = budget.initial_step
    st = OptimizerState(u, J, G, step, [], False, path, adj, budget.armijo_c)
    prev = None
    for it in range(budget.max_iter + 1):
        res = stationarity_residual(u, G, box)
        gnorm = np.sqrt(control_inner(spec, tg, G, G))
        st.history.append({"iter": it, "cost": J, "grad_norm": float(gnorm),
                           "stationarity": res.aggregate, "stationarity_max": res.max, "step_length": step})
        if res.max <= budget.tol:
            st.converged = True
            break
        if it == budget.max_iter:
            break
        if prev is not None:
            du, dg = u - prev[0], G - prev[1]
            curv = control_inner(spec, tg, du, dg)
            step = control_inner(spec, tg, du, du) / curv if curv > 0 else 2 * step
            step = float(np.clip(step, 1e-10, 1e10))
        for _ in range(budget.max_backtracks):
            trial = box.project(u - G * step)
            decrease = control_inner(spec, tg, G, trial - u)
            tpath, tJ, _, _ = _evaluate(problem, trial, driver, with_gradient=False)
            if tJ <= J + budget.armijo_c * decrease:
                break
            step /= 2
        else:
            raise OptimizerError(
                f"line search failed at iteration {it}: cost {J:.6e}, stationarity {res.max:.3e}, "
                f"last step {step:.3e}")
        prev = (u, G)
        u = trial
        path, J, G, adj = _evaluate(problem, u, driver)
        st.u, st.cost, st.grad, st.step, st.path, st.adjoint = u, J, G, step, path, adj
    return st


# ---- Hamiltonian check --------------------------------------------------

def hamiltonian(spec, cost, t, x_stage, x_left, u_int, u_bd, p):
    """``<A(t, x_stage, u), p> - f(t, x_left, u)`` with the lumped pairing."""
    a = spec.drift(t, x_stage, u_int, u_bd)
    return spec.triple.dual_pair(a, p) - cost.running(spec.triple, t, x_left, u_int, u_bd)


def candidate_values(lo, hi, center, n_candidates=33):
    """Equispaced candidates on a bounded interval, else ``center +- {1, 2, 4, 8}``."""
    if np.isfinite(lo) and np.isfinite(hi):
        return np.broadcast_to(np.linspace(lo, hi, n_candidates), np.shape(center) + (n_candidates,))
    offs = np.array([-8.0, -4.0, -2.0, -1.0, 1.0, 2.0, 4.0, 8.0])
    return np.clip(np.asarray(center)[..., None] + offs, lo, hi)


@dataclass
class PontryaginReport:
    max_violation: float
    standard_error: float
    passed: bool
    tol: float
    location: dict
    per_step: np.ndarray


def pontryagin_check(spec, cost, base, adj, box, steps=None, n_candidates=33, tol=1e-4,
                     candidates=None, n_se=3.0):
    """Expected Hamiltonian gain ``E[H(u) - H(u_bar)]`` over candidate controls
    changed at one lattice point at a time; passes when every gain is at most
    ``tol + n_se * SE``.

    ``candidates`` may be ``"current"`` (only ``u_bar``) to exercise the degenerate case.
    """
    if not spec.control_independent_sigma:
        raise CapabilityError("Hamiltonian check requires (A~): sigma must not depend on the control")
    if adj.method != "regression":
        raise ValueError("the Hamiltonian check needs the adapted (regression) adjoint")
    tg = base.time_grid
    u = base.control
    N = base.x.shape[0]
    steps = range(tg.n_steps) if steps is None else steps
    best = (-np.inf, 0.0, {})
    worst_margin = -np.inf
    per_step = []
    for j in steps:
        t = tg.times[j]
        x_stage, x_left, p = base.x[:, j + 1], base.x[:, j], adj.p_stage[:, j]
        ui, ub = u.at(j)
        ui = np.broadcast_to(ui, (N, spec.m))
        ub = None if ub is None else np.broadcast_to(ub, (N, 2))
        H0 = hamiltonian(spec, cost, t, x_stage, x_left, ui, ub, p)
        channels = [("interior", i) for i in range(spec.m)]
        if ub is not None:
            channels += [("boundary", b) for b in range(2)]
        step_worst = -np.inf
        for kind, i in channels:
            cur = (ui if kind == "interior" else ub)[:, i]
            lo, hi = (box.lower_int, box.upper_int) if kind == "interior" else (box.lower_bd, box.upper_bd)
            if candidates == "current":
                cands = cur[:, None]
            else:
                cands = candidate_values(lo, hi, cur, n_candidates)  # (N, C)
            C = cands.shape[-1]
            vi = np.broadcast_to(ui, (C, N, spec.m)).copy()
            vb = None if ub is None else np.broadcast_to(ub, (C, N, 2)).copy()
            target = vi if kind == "interior" else vb
            target[..., i] = cands.T
            gain = hamiltonian(spec, cost, t, x_stage, x_left, vi, vb, p) - H0  # (C, N)
            mean = gain.mean(axis=1)
            se = gain.std(axis=1, ddof=1) / np.sqrt(N) if N > 1 else np.zeros(C)
            k = int(np.argmax(mean - n_se * se))
            margin = mean[k] - n_se * se[k]
            step_worst = max(step_worst, mean.max())
            if margin > worst_margin:
                worst_margin = margin
            if mean.max() > best[0]:
                kk = int(np.argmax(mean))
                best = (float(mean[kk]), float(se[kk]),
                        {"step": int(j), "channel": kind, "index": int(i), "candidate": float(cands[0, kk])})
        per_step.append(step_worst)
    return PontryaginReport(best[0], best[1], bool(worst_margin <= tol), tol, best[2], np.array(per_step))
