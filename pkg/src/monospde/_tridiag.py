"""Batched tridiagonal algebra.

A tridiagonal matrix is stored as three bands ``(lower, diag, upper)`` of equal
length ``m``; row ``i`` reads ``lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1]``
so ``lower[0]`` and ``upper[-1]`` are ignored.  Bands may carry leading batch
axes which broadcast against the right-hand side.
"""

import numpy as np


def matvec(bands, x):
    lower, diag, upper = bands
    y = diag * x
    y[..., 1:] += lower[..., 1:] * x[..., :-1]
    y[..., :-1] += upper[..., :-1] * x[..., 1:]
    return y


def transpose(bands):
    lower, diag, upper = bands
    lt = np.zeros(np.broadcast(lower, upper).shape)
    ut = np.zeros_like(lt)
    lt[..., 1:] = upper[..., :-1]
    ut[..., :-1] = lower[..., 1:]
    return lt, np.array(diag, dtype=float), ut


def solve(bands, rhs):
    """Thomas algorithm without pivoting; fine for the diagonally dominant and
    M-matrix systems assembled in this package."""
    lower, diag, upper = bands
    shape = np.broadcast_shapes(np.shape(lower), np.shape(diag), np.shape(upper), np.shape(rhs))
    lower = np.broadcast_to(lower, shape)
    diag = np.broadcast_to(diag, shape)
    upper = np.broadcast_to(upper, shape)
    rhs = np.broadcast_to(rhs, shape)
    m = shape[-1]
    cp = np.empty(shape)
    dp = np.empty(shape)
    denom = diag[..., 0]
    cp[..., 0] = upper[..., 0] / denom
    dp[..., 0] = rhs[..., 0] / denom
    for i in range(1, m):
        denom = diag[..., i] - lower[..., i] * cp[..., i - 1]
        cp[..., i] = upper[..., i] / denom
        dp[..., i] = (rhs[..., i] - lower[..., i] * dp[..., i - 1]) / denom
    x = np.empty(shape)
    x[..., m - 1] = dp[..., m - 1]
    for i in range(m - 2, -1, -1):
        x[..., i] = dp[..., i] - cp[..., i] * x[..., i + 1]
    return x


class Factorized:
    """Precomputed Thomas sweep for a fixed (unbatched) tridiagonal matrix."""

    def __init__(self, bands):
        lower, diag, upper = (np.asarray(b, dtype=float) for b in bands)
        m = diag.shape[-1]
        self.lower = lower
        self.m = m
        cp = np.empty(m)
        inv = np.empty(m)
        inv[0] = 1.0 / diag[0]
        cp[0] = upper[0] * inv[0]
        for i in range(1, m):
            inv[i] = 1.0 / (diag[i] - lower[i] * cp[i - 1])
            cp[i] = upper[i] * inv[i]
        if not np.all(np.isfinite(inv)):
            raise ZeroDivisionError("singular tridiagonal matrix")
        self.cp = cp
        self.inv = inv

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        dp = np.empty(rhs.shape)
        dp[..., 0] = rhs[..., 0] * self.inv[0]
        for i in range(1, self.m):
            dp[..., i] = (rhs[..., i] - self.lower[i] * dp[..., i - 1]) * self.inv[i]
        x = dp
        for i in range(self.m - 2, -1, -1):
            x[..., i] -= self.cp[i] * x[..., i + 1]
        return x


def to_dense(bands):
    lower, diag, upper = (np.asarray(b, dtype=float) for b in bands)
    return np.diag(diag) + np.diag(lower[1:], -1) + np.diag(upper[:-1], 1)
