"""Truncated eigenbasis noise and a counter-based Brownian driver.

The noise is ``W = sum_k w^k e_k`` over the first ``n_modes`` eigenvectors of
the discrete Laplacian, and the diffusion acts by pointwise multiplication,
``sigma(x) dW = sum_k mu_k dW^k x * e_k``.  For Robin problems an extra scalar
channel ``w^b`` carries the boundary noise ``gamma u^b dw^b``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

EXPONENTS = {"(d-1)/2": lambda d: (d - 1) / 2, "(d+1)/2": lambda d: (d + 1) / 2}


def laplacian_eigenpairs(triple, n_modes):
    """Smallest ``n_modes`` eigenpairs of the discrete -Delta, orthonormal in the
    lumped L^2 inner product.  Signs are fixed so that the first entry is positive."""
    if not 1 <= n_modes <= triple.m:
        raise ValueError(f"n_modes must lie in [1, {triple.m}], got {n_modes}")
    lower, diag, upper = triple.laplacian
    s = np.sqrt(triple.w)
    lam, v = scipy.linalg.eigh_tridiagonal(diag, upper[:-1] * s[:-1] / s[1:], select="i",
                                           select_range=(0, n_modes - 1))
    e = (v / s[:, None]).T
    e *= np.where(e[:, :1] < 0, -1.0, 1.0)
    return lam, e


@dataclass(frozen=True)
class NoiseModel:
    triple: object
    mu: np.ndarray
    lam: np.ndarray
    e: np.ndarray
    beta: float = 0.0
    gamma: float = 0.0

    @property
    def n_modes(self):
        return len(self.mu)

    @property
    def boundary_channel(self):
        return self.gamma != 0.0

    @property
    def n_channels(self):
        return self.n_modes + int(self.boundary_channel)

    def coefficient(self, dW):
        """The field ``sum_k mu_k dW^k e_k`` (multiplier applied to x)."""
        return (np.asarray(dW)[..., : self.n_modes] * self.mu) @ self.e

    def modes(self, x):
        """Per-channel diffusion vectors ``mu_k x e_k`` with shape (..., n_modes, m)."""
        return self.mu[:, None] * self.e * np.asarray(x)[..., None, :]


def mu_rule(rule, n_modes, scale=1.0, power=2.0, values=None):
    k = np.arange(1, n_modes + 1, dtype=float)
    if rule == "power":
        return scale * k ** (-power)
    if rule == "constant":
        return np.full(n_modes, float(scale))
    if rule == "list":
        values = np.asarray(values, float)
        if values.shape != (n_modes,):
            raise ValueError("mu list length must equal n_modes")
        return values
    raise ValueError(f"unknown mu rule {rule!r}")


def make_noise_model(triple, n_modes=16, mu=None, beta=0.0, gamma=0.0):
    """Build the truncated noise.  ``mu`` is an array of coefficients (default k^-2)."""
    lam, e = laplacian_eigenpairs(triple, n_modes)
    mu = mu_rule("power", n_modes) if mu is None else np.asarray(mu, float)
    if mu.shape != (n_modes,) or not np.all(np.isfinite(mu)):
        raise ValueError("mu must be a finite array of length n_modes")
    if (beta or gamma) and triple.bc.kind != "robin":
        raise ValueError("boundary noise (beta, gamma) is only defined for Robin conditions")
    return NoiseModel(triple, mu, lam, e, float(beta), float(gamma))


def apply_sigma(model, x, dW, u_bd=None):
    """``sigma(x, u) dW``: multiplicative noise plus the Robin boundary channel."""
    x = np.asarray(x, float)
    if x.shape[-1] != model.triple.m:
        raise ValueError("state vector does not match the noise model grid")
    dW = np.asarray(dW, float)
    if dW.shape[-1] != model.n_channels:
        raise ValueError(f"expected {model.n_channels} increment channels, got {dW.shape[-1]}")
    out = model.coefficient(dW) * x
    if model.boundary_channel and u_bd is not None:
        out = out + model.gamma * dW[..., -1:] * model.triple.boundary_lift(u_bd)
    return out


@dataclass
class SummabilityReport:
    passed: bool
    window_sums: np.ndarray
    ratios: np.ndarray
    partial_sums: np.ndarray
    tail_estimate: float
    threshold: float


def validate_summability(mu, lam, d=1, exponent_kind="(d+1)/2", n_windows=18, threshold=0.95):
    """Doubling-window test for ``sum_k mu_k^2 lam_k^e``.

    ``mu`` and ``lam`` are callables of the (1-based) mode index or arrays.  The
    terms are grouped over windows [2^j, 2^{j+1}); the series is declared
    convergent when the last window ratio is at most ``threshold``.  The tail
    estimate extrapolates the last ratio geometrically.
    """
    e = EXPONENTS[exponent_kind](d)
    k = np.arange(1, 2 ** n_windows, dtype=float)
    mu_v = mu(k) if callable(mu) else np.asarray(mu, float)
    lam_v = lam(k) if callable(lam) else np.asarray(lam, float)
    size = min(len(mu_v), len(lam_v))
    n_win = int(np.floor(np.log2(size + 1)))
    terms = mu_v[: 2 ** n_win - 1] ** 2 * np.abs(lam_v[: 2 ** n_win - 1]) ** e
    sums = np.array([terms[2 ** j - 1: 2 ** (j + 1) - 1].sum() for j in range(n_win)])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(sums[:-1] > 0, sums[1:] / np.where(sums[:-1] > 0, sums[:-1], 1.0),
                          np.where(sums[1:] > 0, np.inf, 0.0))
    last = ratios[-1] if len(ratios) else 0.0
    passed = bool(last <= threshold)
    tail = float(sums[-1] * last / (1 - last)) if passed and last > 0 else (0.0 if passed else np.inf)
    return SummabilityReport(passed, sums, ratios, np.cumsum(sums), tail, threshold)


class BrownianDriver:
    """Brownian increments keyed by ``(seed, step)`` through Philox, so any step can
    be regenerated independently and identically (common random numbers).

    ``reseed=(j0, seed2)`` replaces increments with index >= j0 by those of ``seed2``.
    """

    def __init__(self, time_grid, n_samples, n_channels, seed, reseed=None):
        if n_samples < 1 or n_channels < 1:
            raise ValueError("n_samples and n_channels must be positive")
        self.time_grid = time_grid
        self.n_samples = int(n_samples)
        self.n_channels = int(n_channels)
        self.seed = int(seed)
        self.reseed = reseed
        self._cache = None

    @classmethod
    def for_noise(cls, noise, time_grid, n_samples, seed):
        return cls(time_grid, n_samples, noise.n_channels, seed)

    def _key(self, j):
        if self.reseed is not None and j >= self.reseed[0]:
            return int(self.reseed[1])
        return self.seed

    def _draw(self, j):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([self._key(j), j])))
        return rng.standard_normal((self.n_samples, self.n_channels)) * np.sqrt(self.time_grid.dt)

    def sample_increments(self, j):
        if not 0 <= j < self.time_grid.n_steps:
            raise ValueError(f"step {j} outside [0, {self.time_grid.n_steps})")
        if self._cache is not None:
            return self._cache[j]
        return self._draw(j)

    @property
    def increments(self):
        """All increments, shape (n_steps, n_samples, n_channels)."""
        if self._cache is None:
            self._cache = np.stack([self._draw(j) for j in range(self.time_grid.n_steps)])
            self._cache.setflags(write=False)
        return self._cache

    def with_future_reseeded(self, j0, new_seed):
        return BrownianDriver(self.time_grid, self.n_samples, self.n_channels, self.seed, (j0, new_seed))

    def same_as(self, other):
        return (self.seed, self.n_samples, self.n_channels, self.reseed, self.time_grid) == (
            other.seed, other.n_samples, other.n_channels, other.reseed, other.time_grid)
