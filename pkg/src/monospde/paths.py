"""Controls, admissible boxes and time stepping for the state, linearized and
spike-perturbed equations.

All ensembles have shape ``(n_samples, n_steps + 1, m)``.  The state scheme is
drift-implicit Euler-Maruyama,

    x_{j+1} = x_j + dt A(t_j, x_{j+1}, u_j) + sigma(x_j, u_j) dW_j,

solved per step by a damped Newton iteration that is vectorized over samples.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _tridiag
from .errors import CapabilityError, SolverError


@dataclass
class ControlField:
    """Interior values ``(S, n_steps, m)`` and boundary values ``(S, n_steps, 2)``.

    ``S == 1`` means a deterministic (sample independent) control which broadcasts
    against any ensemble.
    """

    interior: np.ndarray
    boundary: np.ndarray = None

    def __post_init__(self):
        self.interior = np.asarray(self.interior, float)
        if self.interior.ndim != 3:
            raise ValueError("interior control must have shape (samples, steps, nodes)")
        if self.boundary is not None:
            self.boundary = np.asarray(self.boundary, float)
            if self.boundary.shape != self.interior.shape[:2] + (2,):
                raise ValueError("boundary control must have shape (samples, steps, 2)")

    @classmethod
    def zeros(cls, spec, time_grid, n_samples=1):
        shape = (n_samples, time_grid.n_steps)
        return cls(np.zeros(shape + (spec.m,)), np.zeros(shape + (2,)) if spec.has_boundary else None)

    @classmethod
    def constant(cls, spec, time_grid, interior=0.0, boundary=0.0):
        u = cls.zeros(spec, time_grid)
        u.interior[...] = interior
        if u.boundary is not None:
            u.boundary[...] = boundary
        return u

    @property
    def n_samples(self):
        return self.interior.shape[0]

    @property
    def n_steps(self):
        return self.interior.shape[1]

    @property
    def deterministic(self):
        return self.n_samples == 1

    def at(self, j):
        return self.interior[:, j], (None if self.boundary is None else self.boundary[:, j])

    def _map(self, other, op):
        if isinstance(other, ControlField):
            bd = None if self.boundary is None else op(self.boundary, other.boundary)
            return ControlField(op(self.interior, other.interior), bd)
        bd = None if self.boundary is None else op(self.boundary, other)
        return ControlField(op(self.interior, other), bd)

    def __add__(self, other):
        return self._map(other, np.add)

    def __sub__(self, other):
        return self._map(other, np.subtract)

    def __mul__(self, s):
        return self._map(s, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def copy(self):
        return ControlField(self.interior.copy(), None if self.boundary is None else self.boundary.copy())

    def flat(self):
        parts = [self.interior.ravel()]
        if self.boundary is not None:
            parts.append(self.boundary.ravel())
        return np.concatenate(parts)

    def from_flat(self, vec):
        k = self.interior.size
        bd = None if self.boundary is None else np.asarray(vec[k:]).reshape(self.boundary.shape)
        return ControlField(np.asarray(vec[:k]).reshape(self.interior.shape), bd)

    def mean_over_samples(self):
        bd = None if self.boundary is None else self.boundary.mean(axis=0, keepdims=True)
        return ControlField(self.interior.mean(axis=0, keepdims=True), bd)


@dataclass(frozen=True)
class AdmissibleBox:
    """Per-channel bounds; entries may be infinite."""

    lower_int: float = -np.inf
    upper_int: float = np.inf
    lower_bd: float = -np.inf
    upper_bd: float = np.inf

    def __post_init__(self):
        if self.lower_int > self.upper_int or self.lower_bd > self.upper_bd:
            raise ValueError("box lower bounds must not exceed upper bounds")

    def is_bounded(self):
        return bool(np.isfinite([self.lower_int, self.upper_int, self.lower_bd, self.upper_bd]).all())

    def project(self, u):
        bd = None if u.boundary is None else np.clip(u.boundary, self.lower_bd, self.upper_bd)
        return ControlField(np.clip(u.interior, self.lower_int, self.upper_int), bd)

    def contains(self, u):
        ok = np.all((u.interior >= self.lower_int) & (u.interior <= self.upper_int))
        if u.boundary is not None:
            ok &= np.all((u.boundary >= self.lower_bd) & (u.boundary <= self.upper_bd))
        return bool(ok)


def project(u, box):
    return box.project(u)


@dataclass
class StatePath:
    x: np.ndarray
    spec: object
    control: ControlField
    driver: object
    x0: np.ndarray
    newton_iterations: int = 0

    @property
    def time_grid(self):
        return self.driver.time_grid


@dataclass
class LinearizedPath:
    z: np.ndarray
    direction: ControlField
    diagnostics: dict = field(default_factory=dict)


def _increments(driver, spec):
    dW = driver.increments
    if dW.shape[-1] != spec.noise.n_channels:
        raise ValueError(f"driver has {dW.shape[-1]} channels, noise model needs {spec.noise.n_channels}")
    return dW


def solve_forward(spec, u, x0, driver, newton_tol=1e-12, max_iter=50):
    """Drift-implicit Euler-Maruyama for the controlled state equation."""
    tg = driver.time_grid
    if u.n_steps != tg.n_steps:
        raise ValueError("control and driver use different time grids")
    if u.n_samples not in (1, driver.n_samples):
        raise ValueError("control sample axis must be 1 or the ensemble size")
    dW = _increments(driver, spec)
    N, n, dt = driver.n_samples, tg.n_steps, tg.dt
    x0 = np.asarray(x0, float)
    if x0.shape != (spec.m,):
        raise ValueError(f"x0 must have shape ({spec.m},)")
    x = np.empty((N, n + 1, spec.m))
    x[:, 0] = x0
    total_iter = 0
    for j in range(n):
        u_int, u_bd = u.at(j)
        xj = x[:, j]
        rhs = xj + spec.sigma(tg.times[j], xj, u_bd, dW[j]) + dt * spec.control_drift(u_int, u_bd)
        rhs = np.broadcast_to(rhs, xj.shape)
        y, it = _newton(spec, rhs, dt, newton_tol, max_iter, j)
        total_iter += it
        x[:, j + 1] = y
    return StatePath(x, spec, u, driver, x0, total_iter)


def _newton(spec, rhs, dt, tol, max_iter, step):
    """Solve ``y - dt * state_drift(y) = rhs`` sample-wise."""
    y = np.array(rhs, copy=True)
    scale = np.maximum(1.0, np.abs(rhs).max(axis=-1))
    F = y - dt * spec.state_drift(y) - rhs
    res = np.abs(F).max(axis=-1)
    for it in range(1, max_iter + 1):
        lo, di, up = spec.jac_bands(y)
        delta = _tridiag.solve((-dt * lo, 1.0 - dt * di, -dt * up), -F)
        s = np.ones(len(y))
        for _ in range(30):
            y_new = y + s[:, None] * delta
            F_new = y_new - dt * spec.state_drift(y_new) - rhs
            res_new = np.abs(F_new).max(axis=-1)
            bad = ~(res_new <= np.maximum(res, tol * scale))
            if not bad.any():
                break
            s = np.where(bad, s / 2, s)
        y, F, res = y_new, F_new, res_new
        if not np.all(np.isfinite(y)):
            bad = np.flatnonzero(~np.isfinite(y).all(axis=-1))
            raise SolverError(f"non-finite state at step {step}, samples {bad[:5].tolist()}")
        if np.all(np.abs(s[:, None] * delta).max(axis=-1) <= 1e-13 * np.maximum(1.0, np.abs(y).max(axis=-1))):
            return y, it
    if np.all(res <= tol * scale):
        return y, max_iter
    worst = int(np.argmax(res / scale))
    raise SolverError(f"Newton did not converge at step {step}: sample {worst} residual {res[worst]:.3e}")


def _linear_march(spec, base, forcing):
    """March ``z_{j+1} = (I - dt J_{j+1})^{-1} (z_j + sigma_x(z_j) dW_j + F_j)``."""
    tg = base.time_grid
    dW = _increments(base.driver, spec)
    N, n, dt = base.x.shape[0], tg.n_steps, tg.dt
    z = np.zeros((N, n + 1, spec.m))
    for j in range(n):
        lo, di, up = spec.jac_bands(base.x[:, j + 1])
        rhs = z[:, j] + spec.sigma_x(z[:, j], dW[j]) + forcing(j, dW[j])
        z[:, j + 1] = _tridiag.solve((-dt * lo, 1.0 - dt * di, -dt * up), rhs)
    if not np.all(np.isfinite(z)):
        raise SolverError("non-finite values in the linearized solve")
    return z


def _check_same_driver(base, driver):
    if driver is not None and not driver.same_as(base.driver):
        raise ValueError("driver differs from the one used for the base path")


def solve_linearized(spec, base, v, driver=None):
    """Linearized state equation along ``base`` in direction ``v`` (z_0 = 0)."""
    _check_same_driver(base, driver)
    dt = base.time_grid.dt

    def forcing(j, dWj):
        v_int, v_bd = v.at(j)
        out = dt * spec.jac_u(v_int, v_bd)
        if v_bd is not None:
            out = out + spec.sigma_u(v_bd, dWj)
        return out

    return LinearizedPath(_linear_march(spec, base, forcing), v)


def snap_spike(time_grid, t0, eps):
    """Grid indices ``[j0, j1)`` covering ``[t0, t0 + eps)`` after snapping to steps."""
    T, dt = time_grid.T, time_grid.dt
    if not (0 <= t0 < T) or not (0 < eps <= T - t0 + 1e-12 * T):
        raise ValueError(f"spike window t0={t0}, eps={eps} outside [0, T)")
    j0 = int(round(t0 / dt))
    k = max(1, int(round(eps / dt)))
    j0 = min(j0, time_grid.n_steps - 1)
    return j0, min(j0 + k, time_grid.n_steps)


def spike_control(u, v, t0, eps, time_grid):
    """``v`` on ``[t0, t0 + eps)`` and ``u`` elsewhere (window snapped to the grid)."""
    j0, j1 = snap_spike(time_grid, t0, eps)
    n = max(u.n_samples, v.n_samples)
    out_int = np.array(np.broadcast_to(u.interior, (n,) + u.interior.shape[1:]))
    out_int[:, j0:j1] = np.broadcast_to(v.interior, (n,) + v.interior.shape[1:])[:, j0:j1]
    out_bd = None
    if u.boundary is not None:
        out_bd = np.array(np.broadcast_to(u.boundary, (n,) + u.boundary.shape[1:]))
        out_bd[:, j0:j1] = np.broadcast_to(v.boundary, (n,) + v.boundary.shape[1:])[:, j0:j1]
    return ControlField(out_int, out_bd)


def solve_spike_linearized(spec, base, u, v, t0, eps, driver=None, diagnostics=True):
    """First-order spike variation ``z^eps`` with forcing ``A(x, u^eps) - A(x, u)``."""
    if not spec.control_independent_sigma:
        raise CapabilityError("spike variations need (A~): sigma must not depend on the control")
    _check_same_driver(base, driver)
    tg = base.time_grid
    u_eps = spike_control(u, v, t0, eps, tg)
    dt = tg.dt
    t = tg.times

    def forcing(j, dWj):
        ue_int, ue_bd = u_eps.at(j)
        u_int, u_bd = u.at(j)
        x = base.x[:, j + 1]
        return dt * (spec.drift(t[j], x, ue_int, ue_bd) - spec.drift(t[j], x, u_int, u_bd))

    z = _linear_march(spec, base, forcing)
    diag = {}
    if diagnostics:
        x_eps = solve_forward(spec, u_eps, base.x0, base.driver)
        diag = {"state_difference_norm": x_norm(spec, x_eps.x - base.x, dt), "z_norm": x_norm(spec, z, dt),
                "window": snap_spike(tg, t0, eps), "perturbed": x_eps}
    return LinearizedPath(z, u_eps - u, diag)


# ---- norms and bound checks -------------------------------------------------

def x_norm(spec, arr, dt):
    """Discrete norm of L^2(Omega; C([0,T]; H)) cap L^2(Omega; L^2(0,T; V0)).

    The sup is taken over grid times and the V0 integral uses the implicit
    (right endpoint) rule.
    """
    arr = np.asarray(arr, float)
    tr = spec.triple
    sup = (tr.norm_H(arr) ** 2).max(axis=1).mean()
    integral = (dt * (tr.norm_V0(arr[:, 1:]) ** 2).sum(axis=1)).mean()
    return float(np.sqrt(sup + integral))


def path_norm(path_or_arr, spec, time_grid):
    arr = path_or_arr.x if isinstance(path_or_arr, StatePath) else path_or_arr
    return x_norm(spec, arr, time_grid.dt)


def _control_l2_sq(spec, u_int, u_bd):
    out = np.sum(spec.triple.w * u_int ** 2, axis=-1)
    if u_bd is not None:
        out = out + np.sum(u_bd ** 2, axis=-1)
    return out


def energy_terms(spec, path, c1=None):
    """Left and right sides of the a-priori energy estimate."""
    c = spec.constants
    c1 = c.c1 if c1 is None else c1
    tr, tg = spec.triple, path.time_grid
    dt, T = tg.dt, tg.T
    x = path.x
    lhs = 0.5 * (tr.norm_H(x) ** 2).max(axis=1).mean() + \
        c.M_star * (dt * (tr.norm_V0(x[:, 1:]) ** 2).sum(axis=1)).mean()
    kappa = c.L ** 2 * (1 + 2 * c1 ** 2)
    zero = np.zeros(spec.m)
    acc = 0.0
    for j in range(tg.n_steps):
        u_int, u_bd = path.control.at(j)
        a0 = spec.drift(tg.times[j], zero, u_int, u_bd)
        s0 = spec.sigma_channels(np.zeros_like(u_int), u_bd if spec.has_boundary else None)
        s0_sq = np.sum(tr.norm_H(s0) ** 2, axis=-1)
        acc = acc + dt * np.mean(tr.norm_V1(a0) ** 2 / c.M_star + kappa * s0_sq)
    rhs = np.exp(2 * (c.alpha + kappa) * T) * (tr.norm_H(path.x0) ** 2 + 2 * acc)
    return float(lhs), float(rhs)


@dataclass
class BoundReport:
    lhs: float
    rhs: float
    passed: bool
    extra: dict = field(default_factory=dict)


def apriori_bound(spec, path, c1=None, rtol=1e-12):
    lhs, rhs = energy_terms(spec, path, c1)
    return BoundReport(lhs, rhs, bool(lhs <= rhs * (1 + rtol)))


def lipschitz_probe(spec, u, u2, x0, driver, c1=None, rtol=1e-12):
    """Both sides of the control-to-state Lipschitz estimate under common random numbers.

    The verdict uses the right side linear in ``E int ||u - u'||_U dt``; the
    dimensionally homogeneous variant with the squared control distance is
    reported in ``extra``.
    """
    c = spec.constants
    c1 = c.c1 if c1 is None else c1
    tg = driver.time_grid
    tr = spec.triple
    a = solve_forward(spec, u, x0, driver)
    b = solve_forward(spec, u2, x0, driver)
    d = a.x - b.x
    lhs = 0.5 * (tr.norm_H(d) ** 2).max(axis=1).mean() + \
        c.M_star * (tg.dt * (tr.norm_V0(d[:, 1:]) ** 2).sum(axis=1)).mean()
    du = u - u2
    sq = _control_l2_sq(spec, du.interior, du.boundary)  # (S, n_steps)
    int_norm = float((tg.dt * np.sqrt(sq)).sum(axis=1).mean())
    int_sq = float((tg.dt * sq).sum(axis=1).mean())
    kappa = c.L ** 2 * (1 + 2 * c1 ** 2)
    factor = np.exp(2 * (c.alpha + kappa) * tg.T) * (c.B ** 2 / c.M_star + 2 * kappa)
    rhs = float(factor * int_norm)
    rhs_sq = float(factor * int_sq)
    return BoundReport(float(lhs), rhs, bool(lhs <= rhs * (1 + rtol) or lhs == 0.0),
                       {"rhs_squared_form": rhs_sq, "passed_squared_form": bool(lhs <= rhs_sq * (1 + rtol) or lhs == 0.0),
                        "control_distance": int_norm})
