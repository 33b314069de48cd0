"""Initial distributions that can be sampled from per-trajectory uniforms.

Each law exposes ``n_uniform`` (uniforms consumed per sample),
``sample(u)`` mapping an (N, n_uniform) array of uniforms to (N, dim) states,
and ``log_density(x)`` which is the exact log-density of what ``sample``
produces.  The last point matters for importance weights: a sampler whose
density only approximates the target still gives unbiased estimators as
long as the weight uses the sampler's own density.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtri


class GaussianLaw:
    """Independent normal coordinates with given means and variances."""

    def __init__(self, mean, var):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.var = np.broadcast_to(np.atleast_1d(np.asarray(var, dtype=float)), self.mean.shape).copy()
        if np.any(self.var <= 0):
            raise ValueError("variances must be positive")
        self.dim = self.mean.shape[0]
        self.n_uniform = self.dim

    def sample(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float).reshape(-1, self.dim)
        return self.mean + np.sqrt(self.var) * ndtri(u)

    def log_density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        z = (x - self.mean) ** 2 / self.var
        return -0.5 * np.sum(z + np.log(2 * math.pi * self.var), axis=1)

    def __repr__(self):
        return f"GaussianLaw(mean={self.mean.tolist()}, var={self.var.tolist()})"


class GridLaw:
    """1-d law whose density is the piecewise-linear interpolant of nonnegative node values.

    Sampling inverts the piecewise-quadratic CDF exactly, so ``log_density`` is
    the true density of the samples.  Zero outside the node range.
    """

    def __init__(self, nodes, weights):
        x = np.asarray(nodes, dtype=float)
        p = np.asarray(weights, dtype=float)
        if x.ndim != 1 or x.shape != p.shape or x.shape[0] < 2:
            raise ValueError("nodes and weights must be matching 1-d arrays")
        if np.any(np.diff(x) <= 0) or np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("nodes must increase and weights must be finite and nonnegative")
        h = np.diff(x)
        mass = 0.5 * h * (p[:-1] + p[1:])
        total = mass.sum()
        if total <= 0:
            raise ValueError("grid law has zero mass")
        self.x = x
        self.p = p / total
        self.h = h
        self.cdf = np.concatenate([[0.0], np.cumsum(mass / total)])
        self.cdf[-1] = 1.0
        self.dim = 1
        self.n_uniform = 1

    def sample(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float).ravel()
        i = np.clip(np.searchsorted(self.cdf, u, side="right") - 1, 0, len(self.h) - 1)
        a = self.p[i]
        b = (self.p[i + 1] - self.p[i]) / self.h[i]
        m = u - self.cdf[i]
        # solve a s + b s^2 / 2 = m on [0, h]; the rationalized root avoids cancellation
        disc = np.sqrt(np.maximum(a * a + 2.0 * b * m, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(a + disc > 0, 2.0 * m / (a + disc), 0.0)
        s = np.clip(s, 0.0, self.h[i])
        return (self.x[i] + s).reshape(-1, 1)

    def density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        return np.interp(x, self.x, self.p, left=0.0, right=0.0)

    def log_density(self, x) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.density(x))

    def mean(self) -> float:
        # exact for the piecewise-linear density
        x0, x1, p0, p1 = self.x[:-1], self.x[1:], self.p[:-1], self.p[1:]
        return float(np.sum(self.h * (p0 * (2 * x0 + x1) + p1 * (x0 + 2 * x1)) / 6.0))


class ProductLaw:
    """Independent 1-d grid laws for (a, b) mapped to states by ``embed(a, b)``."""

    def __init__(self, first: GridLaw, second: GridLaw, embed, dim: int):
        self.first = first
        self.second = second
        self.embed = embed
        self.dim = dim
        self.n_uniform = 2

    def sample(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float).reshape(-1, 2)
        a = self.first.sample(u[:, 0])[:, 0]
        b = self.second.sample(u[:, 1])[:, 0]
        return np.asarray(self.embed(a, b)).reshape(-1, self.dim)

    def sample_coordinates(self, u):
        u = np.asarray(u, dtype=float).reshape(-1, 2)
        return self.first.sample(u[:, 0])[:, 0], self.second.sample(u[:, 1])[:, 0]

    def log_density(self, x):
        raise NotImplementedError("level-set laws are singular in the ambient space")
