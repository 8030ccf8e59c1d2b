"""Controlled drifts ``A(t, x, u)`` and multiplicative diffusions ``sigma(x, u)``.

Every model exposes its state Jacobian as tridiagonal bands, the (constant)
control Jacobian, Euclidean transposes for the discrete adjoint, and
function-space adjoints with respect to the lumped pairing ``sum(w a p)``.
Controls are split into an interior part (one value per unknown node) and an
optional boundary part (values at xi = 0 and xi = 1).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _tridiag
from .errors import ConfigurationError
from .noise import apply_sigma


@dataclass(frozen=True)
class ScalarNonlinearity:
    """A scalar map with analytic derivative(s) and declared bounds.

    ``d_lower``/``d_upper`` bound the derivative; ``sup_abs``/``sup_abs_d`` bound
    ``|f|`` and ``|f'|`` (used for the Burgers coefficient).
    """

    name: str
    f: object
    df: object
    d2f: object = None
    d_lower: float = None
    d_upper: float = None
    sup_abs: float = None
    sup_abs_d: float = None


def identity():
    return ScalarNonlinearity("identity", lambda x: np.asarray(x, float) * 1.0, lambda x: np.ones_like(x, float),
                              lambda x: np.zeros_like(x, float), 1.0, 1.0)


def zero():
    z = lambda x: np.zeros_like(x, float)
    return ScalarNonlinearity("zero", z, z, z, 0.0, 0.0, 0.0, 0.0)


def tanh_family(lower=1.0, upper=2.0):
    """``lower x + (upper - lower) tanh(x)``: derivative in (lower, upper], bounded second derivative."""
    if not 0 < lower <= upper:
        raise ConfigurationError("need 0 < lower <= upper")
    c = upper - lower
    return ScalarNonlinearity(
        f"tanh[{lower},{upper}]",
        lambda x: lower * x + c * np.tanh(x),
        lambda x: lower + c * (1.0 - np.tanh(x) ** 2),
        lambda x: -2 * c * np.tanh(x) * (1.0 - np.tanh(x) ** 2),
        lower, upper)


def arctan_family(lam=1.0, range_bound=10.0):
    """``lam arctan(x / lam)``; the declared derivative floor is the value at
    ``|x| = range_bound`` and only holds on that range."""
    return ScalarNonlinearity(
        f"arctan[{lam}]",
        lambda x: lam * np.arctan(x / lam),
        lambda x: 1.0 / (1.0 + (x / lam) ** 2),
        lambda x: -2 * x / lam ** 2 / (1.0 + (x / lam) ** 2) ** 2,
        1.0 / (1.0 + (range_bound / lam) ** 2), 1.0, lam * np.pi / 2, 1.0)


@dataclass(frozen=True)
class HypothesisConstants:
    M_star: float
    M_sup: float
    alpha: float
    B: float
    L: float
    C_b: float = None
    c1: float = 2.0


class DynamicsSpec:
    """Base class: ``A(x, u) = state_drift(x) + J_u u`` and ``sigma`` from a NoiseModel."""

    family = "abstract"

    def __init__(self, triple, noise, has_boundary, boundary_coef=1.0):
        self.triple = triple
        self.noise = noise
        self.has_boundary = bool(has_boundary)
        self.boundary_coef = float(boundary_coef)
        if noise.triple is not triple:
            if noise.triple.m != triple.m:
                raise ConfigurationError("noise model and triple use different grids")

    # ---- to be provided by subclasses -------------------------------------
    def state_drift(self, x):
        raise NotImplementedError

    def jac_bands(self, x):
        raise NotImplementedError

    # ---- drift ------------------------------------------------------------
    @property
    def m(self):
        return self.triple.m

    @property
    def n_bd(self):
        return 2 if self.has_boundary else 0

    @property
    def control_independent_sigma(self):
        return not self.noise.boundary_channel

    def control_drift(self, u_int, u_bd=None):
        out = np.array(u_int, float, copy=True)
        if self.has_boundary and u_bd is not None and self.boundary_coef != 0.0:
            out = out + self.boundary_coef * self.triple.boundary_lift(u_bd)
        return out

    def control_drift_T(self, r):
        """Euclidean transpose of :meth:`control_drift`: returns (interior, boundary)."""
        r = np.asarray(r, float)
        bd = self.boundary_coef * self.triple.boundary_lift_T(r) if self.has_boundary else None
        return r, bd

    def drift(self, t, x, u_int, u_bd=None):
        return self.state_drift(np.asarray(x, float)) + self.control_drift(u_int, u_bd)

    def jac_x(self, t, x, u_int, z, u_bd=None):
        return _tridiag.matvec(self.jac_bands(np.asarray(x, float)), np.asarray(z, float))

    def jac_x_T(self, t, x, u_int, lam, u_bd=None):
        return _tridiag.matvec(_tridiag.transpose(self.jac_bands(np.asarray(x, float))), np.asarray(lam, float))

    def jac_u(self, v_int, v_bd=None):
        return self.control_drift(v_int, v_bd)

    def adjoint_x(self, t, x, u_int, p, u_bd=None):
        """(d_x A)^* p with respect to the lumped pairing."""
        w = self.triple.w
        return self.jac_x_T(t, x, u_int, w * np.asarray(p, float)) / w

    def adjoint_u(self, p):
        """(d_u A)^* p as a pair (interior, boundary) in the control inner product."""
        g_int, g_bd = self.control_drift_T(self.triple.w * np.asarray(p, float))
        return g_int / self.triple.w, g_bd

    # ---- diffusion ----------------------------------------------------------
    def sigma(self, t, x, u_bd, dW):
        return apply_sigma(self.noise, x, dW, u_bd if self.has_boundary else None)

    def sigma_x(self, z, dW):
        return self.noise.coefficient(dW) * z

    sigma_x_T = sigma_x  # diagonal multiplier

    def sigma_u(self, v_bd, dW):
        if not self.noise.boundary_channel or v_bd is None:
            return 0.0
        return self.noise.gamma * dW[..., -1:] * self.triple.boundary_lift(v_bd)

    def sigma_u_T(self, lam, dW):
        if not self.noise.boundary_channel:
            return None
        return self.noise.gamma * dW[..., -1:] * self.triple.boundary_lift_T(lam)

    def adjoint_sigma_u(self, q):
        """(d_u sigma)^* q for q of shape (..., n_channels, m); boundary part only."""
        if not self.noise.boundary_channel:
            return None
        return self.noise.gamma * self.triple.boundary_lift_T(self.triple.w * q[..., -1, :])

    def sigma_channels(self, x, u_bd=None):
        """Per-channel diffusion vectors, shape (..., n_channels, m)."""
        out = self.noise.modes(x)
        if self.noise.boundary_channel:
            shape = np.shape(x)[:-1]
            bd = np.zeros(shape + (1, self.m)) if u_bd is None else \
                (self.noise.gamma * self.triple.boundary_lift(u_bd))[..., None, :]
            out = np.concatenate([out, np.broadcast_to(bd, shape + (1, self.m))], axis=-2)
        return out

    # ---- dense helpers --------------------------------------------------
    def control_matrix(self):
        """Dense J_u and the Gram matrix of the control space."""
        m = self.m
        cols = [self.jac_u(np.eye(m)[i], np.zeros(2) if self.has_boundary else None) for i in range(m)]
        gram = list(self.triple.w)
        if self.has_boundary:
            for b in range(2):
                cols.append(self.control_drift(np.zeros(m), np.eye(2)[b]))
                gram.append(1.0)
        return np.array(cols).T, np.diag(gram)

    def control_norm(self):
        """||d_u A||_{U -> V1}, computed exactly."""
        J, G = self.control_matrix()
        lam = scipy.linalg.eigvalsh(J.T @ self.triple.gram_V1 @ J, G)
        return float(np.sqrt(max(lam[-1], 0.0)))

    def noise_norm(self):
        """Upper bound for ||d_x sigma||_{H -> L2(K, H)} from per-mode multiplier norms,
        plus the exact norm of d_u sigma (Robin boundary channel)."""
        tr = self.triple
        total = 0.0
        for mu, e in zip(self.noise.mu, self.noise.e):
            if mu != 0.0:
                total += mu ** 2 * tr.operator_norm(np.diag(e), "H", "H") ** 2
        L = np.sqrt(total)
        if self.noise.boundary_channel:
            _, G = self.control_matrix()
            Lb = np.array([self.noise.gamma * tr.boundary_lift(np.eye(2)[b]) for b in range(2)]).T
            lam = scipy.linalg.eigvalsh(Lb.T @ tr.gram_H @ Lb, np.eye(2))
            L += float(np.sqrt(max(lam[-1], 0.0)))
        return float(L)


class PorousMedia(DynamicsSpec):
    """``A = Delta Psi(x) + u`` with boundary control entering through the condition."""

    family = "porous_media"

    def __init__(self, triple, psi, noise, beta=None):
        bc = triple.bc.kind
        want = "Hminus1_pivot" if bc == "dirichlet" else "H1dual_pivot"
        if triple.kind != want:
            raise ConfigurationError(f"porous media with {bc} condition needs the {want} triple")
        if psi.d_lower is None or psi.d_upper is None:
            raise ConfigurationError("Psi must declare derivative bounds")
        coef = (noise.beta if beta is None else beta) if bc == "robin" else 1.0
        super().__init__(triple, noise, True, coef)
        self.psi = psi
        m_lo, m_hi = psi.d_lower, psi.d_upper
        if bc == "neumann":
            M_star, alpha = m_lo / 2, m_hi ** 2 / (2 * m_lo)
        else:
            M_star, alpha = m_lo, 0.0
        self.constants = HypothesisConstants(M_star, m_hi, alpha, m_hi + self.control_norm(), self.noise_norm())

    def state_drift(self, x):
        return -_tridiag.matvec(self.triple.laplacian, self.psi.f(x))

    def jac_bands(self, x):
        d = self.psi.df(x)
        lo, di, up = self.triple.laplacian
        lower = np.zeros_like(d)
        upper = np.zeros_like(d)
        lower[..., 1:] = -lo[1:] * d[..., :-1]
        upper[..., :-1] = -up[:-1] * d[..., 1:]
        return lower, -di * d, upper


class Burgers(DynamicsSpec):
    """``A = Delta x + b(x) b(x_xi) + u`` with homogeneous Dirichlet data."""

    family = "burgers"

    def __init__(self, triple, b, noise):
        if triple.bc.kind != "dirichlet" or triple.kind != "L2_pivot":
            raise ConfigurationError("Burgers dynamics need the Dirichlet L2_pivot triple")
        if b.sup_abs is None or b.sup_abs_d is None:
            raise ConfigurationError("b must declare bounds on |b| and |b'|")
        super().__init__(triple, noise, False)
        self.b = b
        C_b = max(b.sup_abs, b.sup_abs_d)
        C_P = triple.poincare_constant
        B = 1.0 + C_b ** 2 * C_P ** 2 + C_b ** 2 * C_P + self.control_norm()
        self.constants = HypothesisConstants(0.5, 1.0, C_b ** 2 + C_b ** 4 / 2, B, self.noise_norm(), C_b)

    def _dx(self, x):
        xf = self.triple.full_nodal(x)
        return (xf[..., 2:] - xf[..., :-2]) / (2 * self.triple.grid.h)

    def state_drift(self, x):
        b = self.b.f
        return -_tridiag.matvec(self.triple.laplacian, x) + b(x) * b(self._dx(x))

    def jac_bands(self, x):
        h = self.triple.grid.h
        b, db = self.b.f, self.b.df
        g = self._dx(x)
        c = b(x) * db(g) / (2 * h)
        lo, di, up = self.triple.laplacian
        lower = np.broadcast_to(-lo, c.shape) - c
        upper = np.broadcast_to(-up, c.shape) + c
        lower[..., 0] = 0.0
        upper[..., -1] = 0.0
        return lower, -di + db(x) * b(g), upper


class DivergenceForm(DynamicsSpec):
    """``A = (Phi(x_xi))_xi + u`` with homogeneous Dirichlet data."""

    family = "divergence"

    def __init__(self, triple, phi, noise):
        if triple.bc.kind != "dirichlet" or triple.kind != "L2_pivot":
            raise ConfigurationError("divergence-form dynamics need the Dirichlet L2_pivot triple")
        if phi.d_lower is None or phi.d_upper is None:
            raise ConfigurationError("Phi must declare Jacobian bounds")
        super().__init__(triple, noise, False)
        self.phi = phi
        self.constants = HypothesisConstants(phi.d_lower, phi.d_upper, 0.0,
                                             phi.d_upper + self.control_norm(), self.noise_norm())

    def _grad(self, x):
        xf = self.triple.full_nodal(x)
        return np.diff(xf, axis=-1) / self.triple.grid.h

    def state_drift(self, x):
        flux = self.phi.f(self._grad(x))
        return np.diff(flux, axis=-1) / self.triple.grid.h

    def jac_bands(self, x):
        h2 = self.triple.grid.h ** 2
        d = self.phi.df(self._grad(x))  # one per edge, m + 1 edges
        lower = d[..., :-1] / h2
        upper = d[..., 1:] / h2
        diag = -(d[..., :-1] + d[..., 1:]) / h2
        lower = lower.copy()
        upper = upper.copy()
        lower[..., 0] = 0.0
        upper[..., -1] = 0.0
        return lower, diag, upper


def make_porous_media(triple, psi, noise, beta=None):
    return PorousMedia(triple, psi, noise, beta)


def make_burgers(triple, b, noise):
    return Burgers(triple, b, noise)


def make_divergence_form(triple, phi, noise):
    return DivergenceForm(triple, phi, noise)


# ---- validators -----------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    observed: float
    declared: float
    detail: str = ""


@dataclass
class HypothesisReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def failed(self):
        return [c.name for c in self.checks if not c.passed]

    def as_dict(self):
        return {c.name: {"passed": c.passed, "observed": c.observed, "declared": c.declared,
                         "detail": c.detail} for c in self.checks}


def sample_range(lo, hi, count, rng):
    """Uniform samples, plus log-spaced magnitudes when the range is wide."""
    u = rng.uniform(lo, hi, count)
    if max(abs(lo), abs(hi)) > 100:
        top = np.log10(max(abs(lo), abs(hi)))
        mags = np.logspace(-3, top, count)
        u = np.concatenate([u, np.clip(mags, lo, hi), np.clip(-mags, lo, hi), [lo, hi]])
    return u


def validate_nonlinearity(fn, name, state_range=(-10.0, 10.0), count=2001, seed=0, tol=1e-12,
                          derivative_bounds=True):
    """Sampled bounds for a scalar nonlinearity against its declarations."""
    rng = np.random.default_rng(seed)
    s = sample_range(*state_range, count, rng)
    checks = []
    d = fn.df(s)
    if derivative_bounds and fn.d_lower is not None:
        lo = float(d.min())
        checks.append(Check(f"{name}:lower", lo >= fn.d_lower * (1 - 1e-9) - tol, lo, fn.d_lower,
                            "sampled inf of the derivative vs declared M_star"))
    if derivative_bounds and fn.d_upper is not None:
        hi = float(d.max())
        checks.append(Check(f"{name}:upper", hi <= fn.d_upper * (1 + 1e-9) + tol, hi, fn.d_upper,
                            "sampled sup of the derivative vs declared M^*"))
    if fn.sup_abs is not None:
        a = float(np.abs(fn.f(s)).max())
        checks.append(Check(f"{name}:sup|f|", a <= fn.sup_abs + tol, a, fn.sup_abs))
    if fn.sup_abs_d is not None:
        a = float(np.abs(d).max())
        checks.append(Check(f"{name}:sup|f'|", a <= fn.sup_abs_d + tol, a, fn.sup_abs_d))
    return checks


def validate_hypotheses(spec, state_range=(-10.0, 10.0), count=100, seed=0, box=None, rtol=1e-8):
    """Sampling certificates for the structural hypotheses of ``spec``.

    Operator norms and coercivity constants are computed exactly (generalized
    eigenproblems) at each of ``count`` random states drawn from ``state_range``.
    """
    rng = np.random.default_rng(seed)
    tr = spec.triple
    c = spec.constants
    G0, GH, G1 = tr.gram_V0, tr.gram_H, tr.gram_V1
    Cu = spec.control_norm()
    worst_B, worst_coer, worst_mono = 0.0, np.inf, np.inf
    for _ in range(count):
        x = rng.uniform(*state_range, tr.m)
        J = _tridiag.to_dense(spec.jac_bands(x))
        lam = scipy.linalg.eigvalsh(J.T @ G1 @ J, G0)
        worst_B = max(worst_B, np.sqrt(max(lam[-1], 0.0)) + Cu)
        P = J.T @ GH
        P = 0.5 * (P + P.T) - c.alpha * GH
        coer = -scipy.linalg.eigvalsh(P, G0)[-1]
        worst_coer = min(worst_coer, coer)
        # monotonicity on a random pair (secant form of the coercivity bound)
        x2 = rng.uniform(*state_range, tr.m)
        dx = x - x2
        lhs = tr.pair(spec.state_drift(x) - spec.state_drift(x2), dx)
        nv = tr.norm_V0(dx) ** 2
        worst_mono = min(worst_mono, (-lhs + c.alpha * tr.norm_H(dx) ** 2) / nv)
    checks = [
        Check("A1:B", worst_B <= c.B * (1 + rtol), float(worst_B), c.B,
              "max observed ||d_x A||_{V0->V1} + ||d_u A||_{U->V1}"),
        Check("A1.3:coercivity", worst_coer >= c.M_star * (1 - rtol), float(worst_coer), c.M_star,
              "observed coercivity margin with the declared alpha"),
        Check("A1:monotone", worst_mono >= c.M_star * (1 - rtol), float(worst_mono), c.M_star,
              "secant monotonicity on random pairs"),
    ]
    L_obs = observed_noise_norm(spec)
    checks.append(Check("A2:L", L_obs <= c.L * (1 + rtol), L_obs, c.L,
                        "||d_x sigma|| + ||d_u sigma|| (exact) vs declared L"))
    detail = "sigma independent of u"
    bounded = True
    if box is not None:
        bounded = box.is_bounded()
        detail += "; box bounded" if bounded else "; box unbounded"
    checks.append(Check("A~", bool(spec.control_independent_sigma and bounded),
                        float(spec.control_independent_sigma), 1.0, detail))
    for attr, label in (("psi", "H6"), ("phi", "H1"), ("b", "H5")):
        fn = getattr(spec, attr, None)
        if fn is not None:
            checks.extend(validate_nonlinearity(fn, label, state_range, seed=seed,
                                                derivative_bounds=label != "H5"))
    return HypothesisReport(checks)


def observed_noise_norm(spec):
    """Exact ||d_x sigma||_{H -> L2(K,H)} plus ||d_u sigma||_{U -> L2(K,H)}."""
    tr = spec.triple
    GH = tr.gram_H
    M = np.zeros((tr.m, tr.m))
    for mu, e in zip(spec.noise.mu, spec.noise.e):
        D = np.diag(mu * e)
        M += D.T @ GH @ D
    L = float(np.sqrt(max(scipy.linalg.eigvalsh(M, GH)[-1], 0.0)))
    if spec.noise.boundary_channel:
        Lb = np.array([spec.noise.gamma * tr.boundary_lift(np.eye(2)[b]) for b in range(2)]).T
        L += float(np.sqrt(max(scipy.linalg.eigvalsh(Lb.T @ GH @ Lb)[-1], 0.0)))
    return L


def noise_law_estimate(spec, d=1, C=1.0):
    """``C (sum mu_k^2 lam_k^{(d+1)/2})^{1/2}`` with the discrete eigenvalues."""
    n = spec.noise
    return float(C * np.sqrt(np.sum(n.mu ** 2 * np.abs(n.lam) ** ((d + 1) / 2))))
