"""Uniform grids on [0, T] x (0, 1) and discrete Gelfand triples.

Vectors live on the *unknown* nodes of a triple: interior nodes for Dirichlet
conditions, all nodes for Neumann and Robin.  Every triple carries the lumped
mass ``w`` (quadrature weights), the weak stiffness ``S`` (symmetric,
tridiagonal) and the strong operator ``K = W^{-1} S`` (the discrete ``-Delta``).

Three realizations are available:

``L2_pivot``
    V0 = H^1 (H^1_0 for Dirichlet), H = L^2, V1 = the dual of V0.
``Hminus1_pivot`` (Dirichlet)
    V0 = L^2, H = H^{-1} with ``(x, y)_H = (x, K^{-1} y)_{L^2}``.
``H1dual_pivot`` (Neumann / Robin)
    V0 = L^2, H = (H^1)' with Riesz map ``(K + I)^{-1}`` (Neumann) or
    ``K^{-1}`` (Robin, where the boundary term makes ``K`` definite).
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from . import _tridiag
from .errors import ConfigurationError

TRIPLE_KINDS = ("L2_pivot", "Hminus1_pivot", "H1dual_pivot")
BC_KINDS = ("dirichlet", "neumann", "robin")


@dataclass(frozen=True)
class TimeGrid:
    T: float
    n_steps: int

    def __post_init__(self):
        if not (self.T > 0 and np.isfinite(self.T)):
            raise ValueError(f"horizon must be positive, got {self.T}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")

    @property
    def dt(self):
        return self.T / self.n_steps

    @property
    def times(self):
        return self.T * np.arange(self.n_steps + 1) / self.n_steps


@dataclass(frozen=True)
class SpaceGrid1D:
    n_cells: int

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 1:
            raise ValueError(f"n_cells must be a positive integer, got {self.n_cells}")

    @property
    def h(self):
        return 1.0 / self.n_cells

    @property
    def nodes(self):
        return np.arange(self.n_cells + 1) / self.n_cells

    @property
    def interior(self):
        return np.arange(1, self.n_cells)

    @property
    def boundary(self):
        return np.array([0, self.n_cells])


@dataclass(frozen=True)
class BoundaryCondition:
    """``kind`` in {dirichlet, neumann, robin}.  ``robin_alpha`` holds alpha at
    xi = 0 and xi = 1 (a callable of the boundary point is also accepted)."""

    kind: str
    robin_alpha: tuple = None

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in BC_KINDS:
            raise ConfigurationError(f"unknown boundary condition {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind == "robin":
            alpha = self.robin_alpha
            if alpha is None:
                raise ConfigurationError("Robin condition requires robin_alpha")
            if callable(alpha):
                alpha = (alpha(0.0), alpha(1.0))
            alpha = tuple(float(a) for a in np.broadcast_to(np.asarray(alpha, float), (2,)))
            object.__setattr__(self, "robin_alpha", alpha)


class DiscreteTriple:
    """Finite-dimensional realization of V0 in H in V1.  Treat as immutable."""

    def __init__(self, grid, bc, kind):
        if kind not in TRIPLE_KINDS:
            raise ConfigurationError(f"unknown triple kind {kind!r}")
        self.grid = grid
        self.bc = bc
        self.kind = kind
        n, h = grid.n_cells, grid.h
        if bc.kind == "dirichlet":
            self.index = grid.interior
            m = n - 1
            w = np.full(m, h)
            diag = np.full(m, 2.0 / h)
        else:
            self.index = np.arange(n + 1)
            m = n + 1
            w = np.full(m, h)
            w[[0, -1]] = h / 2
            diag = np.full(m, 2.0 / h)
            diag[[0, -1]] = 1.0 / h
            if bc.kind == "robin":
                diag[0] += bc.robin_alpha[0]
                diag[-1] += bc.robin_alpha[1]
        off = np.full(m, -1.0 / h)
        lower, upper = off.copy(), off.copy()
        lower[0] = 0.0
        upper[-1] = 0.0
        self.m = m
        self.xi = grid.nodes[self.index]
        self.w = w
        self.stiffness = (lower, diag, upper)
        self.laplacian = (lower / w, diag / w, upper / w)
        shift = 1.0 if bc.kind == "neumann" else 0.0
        self.riesz_bands = (self.laplacian[0], self.laplacian[1] + shift, self.laplacian[2])
        self._check_positive()
        self._riesz = _tridiag.Factorized(self.riesz_bands)

    def _check_positive(self):
        # generalized eigenvalues of (W L, W) through the symmetric scaling W^{-1/2} S W^{-1/2}
        lam = self.riesz_eigenvalues()
        if lam[0] <= 1e-12 * max(lam[-1], 1.0):
            which = {"robin": "Robin alpha", "neumann": "Neumann shift", "dirichlet": "Dirichlet"}[self.bc.kind]
            raise ConfigurationError(
                f"positivity check failed for the {which} stiffness: smallest eigenvalue {lam[0]:.3e}"
            )

    def riesz_eigenvalues(self):
        lower, diag, upper = self.riesz_bands
        s = np.sqrt(self.w)
        sym_diag = diag  # W^{1/2} (W^{-1} S) W^{-1/2} has the same diagonal as K
        sym_off = upper[:-1] * s[:-1] / s[1:]
        return scipy.linalg.eigvalsh_tridiagonal(sym_diag, sym_off)

    # ---- basic operators -------------------------------------------------
    def _check(self, *vecs):
        for v in vecs:
            if np.shape(v)[-1] != self.m:
                raise ValueError(f"vector of length {np.shape(v)[-1]} does not match triple size {self.m}")

    def apply_laplacian(self, x):
        """Discrete -Delta applied to x."""
        return _tridiag.matvec(self.laplacian, np.asarray(x, float))

    def apply_stiffness(self, x):
        return _tridiag.matvec(self.stiffness, np.asarray(x, float))

    def riesz_solve(self, y):
        """L^{-1} y for the Riesz operator L (K, or K + I for Neumann)."""
        return self._riesz.solve(y)

    def l2_inner(self, x, y):
        self._check(x, y)
        return np.sum(self.w * x * y, axis=-1)

    def dual_pair(self, a, p):
        """Lumped L^2 pairing used between drifts and costates."""
        return self.l2_inner(a, p)

    def h_inner(self, x, y):
        self._check(x, y)
        if self.kind == "L2_pivot":
            return np.sum(self.w * x * y, axis=-1)
        return np.sum(self.w * x * self.riesz_solve(y), axis=-1)

    def pair(self, y, x):
        """Duality <y, x>_{V1,V0}; coincides with the H inner product on H."""
        return self.h_inner(y, x)

    def norm_H(self, x):
        return np.sqrt(np.maximum(self.h_inner(x, x), 0.0))

    def norm_V0(self, x):
        self._check(x)
        if self.kind == "L2_pivot":
            return np.sqrt(np.maximum(np.sum(self.w * x * _tridiag.matvec(self.riesz_bands, x), axis=-1), 0.0))
        return np.sqrt(np.sum(self.w * x * x, axis=-1))

    def norm_V1(self, y):
        self._check(y)
        r = self.riesz_solve(y)
        if self.kind == "L2_pivot":
            return np.sqrt(np.maximum(np.sum(self.w * y * r, axis=-1), 0.0))
        return np.sqrt(np.sum(self.w * r * r, axis=-1))

    # ---- dense Gram matrices (validators and oracles only) ---------------
    @cached_property
    def _riesz_inverse(self):
        return self.riesz_solve(np.eye(self.m)).T

    @cached_property
    def gram_V0(self):
        W = np.diag(self.w)
        if self.kind == "L2_pivot":
            return W @ _tridiag.to_dense(self.riesz_bands)
        return W

    @cached_property
    def gram_H(self):
        W = np.diag(self.w)
        if self.kind == "L2_pivot":
            return W
        G = W @ self._riesz_inverse
        return 0.5 * (G + G.T)

    @cached_property
    def gram_V1(self):
        W = np.diag(self.w)
        Li = self._riesz_inverse
        G = W @ Li if self.kind == "L2_pivot" else Li.T @ W @ Li
        return 0.5 * (G + G.T)

    def operator_norm(self, M, dom="H", cod="H"):
        """Exact ||M||_{dom -> cod} for a dense matrix, by a generalized eigensolve."""
        Gd, Gc = self.gram(dom), self.gram(cod)
        lam = scipy.linalg.eigvalsh(M.T @ Gc @ M, Gd)
        return float(np.sqrt(max(lam[-1], 0.0)))

    def gram(self, space):
        return {"V0": self.gram_V0, "H": self.gram_H, "V1": self.gram_V1, "L2": np.diag(self.w)}[space]

    @cached_property
    def embedding_constant(self):
        """Smallest C with ||x||_H <= C ||x||_V0."""
        return self.operator_norm(np.eye(self.m), "V0", "H")

    @cached_property
    def poincare_constant(self):
        """Smallest C with ||x||_{L2} <= C ||grad x||_{L2} (Dirichlet and Robin)."""
        lam = scipy.linalg.eigvalsh(_tridiag.to_dense(self.stiffness), np.diag(self.w))
        return float(1.0 / np.sqrt(lam[0]))

    # ---- boundary helpers -----------------------------------------------
    def boundary_lift(self, g):
        """Nodal vector ``r`` with ``sum(w r phi) = g0 phi(0) + g1 phi(1)`` (Neumann/Robin),
        or, for Dirichlet, the discrete Laplacian contribution of boundary values g."""
        g = np.asarray(g, float)
        out = np.zeros(g.shape[:-1] + (self.m,))
        if self.bc.kind == "dirichlet":
            h2 = self.grid.h ** 2
            out[..., 0] = g[..., 0] / h2
            out[..., -1] += g[..., 1] / h2
        else:
            out[..., 0] = g[..., 0] / self.w[0]
            out[..., -1] = g[..., 1] / self.w[-1]
        return out

    def boundary_lift_T(self, r):
        """Euclidean transpose of :meth:`boundary_lift`."""
        r = np.asarray(r, float)
        if self.bc.kind == "dirichlet":
            h2 = self.grid.h ** 2
            return np.stack([r[..., 0] / h2, r[..., -1] / h2], axis=-1)
        return np.stack([r[..., 0] / self.w[0], r[..., -1] / self.w[-1]], axis=-1)

    def full_nodal(self, x):
        """Extend a vector to all grid nodes (zero boundary values for Dirichlet)."""
        x = np.asarray(x, float)
        if self.bc.kind != "dirichlet":
            return x
        pad = [(0, 0)] * (x.ndim - 1) + [(1, 1)]
        return np.pad(x, pad)


def build_triple(grid, bc, triple_kind):
    """Assemble the discrete triple; checks the grid size and kind/bc compatibility."""
    if grid.n_cells < 3:
        raise ValueError("n_cells must be at least 3")
    if triple_kind == "Hminus1_pivot" and bc.kind != "dirichlet":
        raise ConfigurationError("Hminus1_pivot requires a Dirichlet condition")
    if triple_kind == "H1dual_pivot" and bc.kind == "dirichlet":
        raise ConfigurationError("H1dual_pivot requires a Neumann or Robin condition")
    return DiscreteTriple(grid, bc, triple_kind)


def pair(triple, y, x):
    return triple.pair(np.asarray(y, float), np.asarray(x, float))


def neumann_trace(triple, phi):
    """Outward normal derivative at xi = 0 and xi = 1 from one-sided second-order
    differences.  ``phi`` is given on the triple's unknowns (Dirichlet vectors are
    padded with zero boundary values) or on all grid nodes."""
    n = triple.grid.n_cells
    if n < 3:
        raise ValueError("neumann_trace needs n_cells >= 3")
    phi = np.asarray(phi, float)
    if phi.shape[-1] == triple.m and triple.bc.kind == "dirichlet":
        phi = triple.full_nodal(phi)
    if phi.shape[-1] != n + 1:
        raise ValueError(f"expected {triple.m} or {n + 1} values, got {phi.shape[-1]}")
    h = triple.grid.h
    d0 = (-3 * phi[..., 0] + 4 * phi[..., 1] - phi[..., 2]) / (2 * h)
    d1 = (3 * phi[..., -1] - 4 * phi[..., -2] + phi[..., -3]) / (2 * h)
    return np.stack([-d0, d1], axis=-1)
