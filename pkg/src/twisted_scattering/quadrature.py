from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable

import numpy as np

from .errors import DomainError, IntegrationError

logger = logging.getLogger(__name__)

MAX_ORDER = 512
_NEWTON_TOL = 1e-15
_NEWTON_MAX_ITER = 100


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Gauss-Legendre nodes and weights on (-1, 1)."""

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def order(self) -> int:
        return int(self.nodes.size)

    def mapped(self, lower: float, upper: float) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights for the interval (lower, upper) under the linear map."""
        half = 0.5 * (upper - lower)
        return lower + half * (self.nodes + 1.0), half * self.weights


def _legendre_with_derivative(n: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p_prev = np.ones_like(x)
    p = x.copy()
    for j in range(2, n + 1):
        p_prev, p = p, ((2 * j - 1) * x * p - (j - 1) * p_prev) / j
    if n == 1:
        return p, np.ones_like(x)
    dp = n * (x * p - p_prev) / (x * x - 1.0)
    return p, dp


@lru_cache(maxsize=64)
def _gauss_legendre_cached(n: int) -> tuple[tuple[float, ...], tuple[float, ...]]:
    i = np.arange(1, n + 1)
    x = np.cos(np.pi * (i - 0.25) / (n + 0.5))
    for _ in range(_NEWTON_MAX_ITER):
        p, dp = _legendre_with_derivative(n, x)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) <= _NEWTON_TOL:
            break
    _, dp = _legendre_with_derivative(n, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    order = np.argsort(x)
    x, w = x[order], w[order]
    # enforce exact mirror symmetry
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return tuple(x.tolist()), tuple(w.tolist())


def gauss_legendre(n: int) -> QuadratureRule:
    """
    Order-n Gauss-Legendre rule on (-1, 1), exact for polynomials of degree <= 2n - 1.

    Nodes come from Newton iteration on P_n started at Chebyshev-like guesses; weights are
    2 / ((1 - x^2) P_n'(x)^2).
    """
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_ORDER:
        raise DomainError(f"Gauss-Legendre order must be an integer in [1, {MAX_ORDER}], got {n!r}.")
    nodes, weights = _gauss_legendre_cached(int(n))
    return QuadratureRule(nodes=np.array(nodes), weights=np.array(weights))


def periodic_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Trapezoid nodes 2*pi*j/n and equal weights 2*pi/n for 2*pi-periodic integrands."""
    if n < 1:
        raise DomainError(f"Periodic rule needs at least one node, got {n}.")
    nodes = 2.0 * np.pi * np.arange(n) / n
    return nodes, np.full(n, 2.0 * np.pi / n)


@dataclass(frozen=True, eq=False)
class SphericalGrid:
    """
    Product Gauss-Legendre grid over a ball of radius `radius`.

    Flattened arrays run over (r, theta, phi) in C order; `weights` already include r^2 sin(theta).
    """

    radius: float
    order: int
    r: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return int(self.weights.size)

    @cached_property
    def points(self) -> np.ndarray:
        sin_t = np.sin(self.theta)
        return np.column_stack(
            (
                self.r * sin_t * np.cos(self.phi),
                self.r * sin_t * np.sin(self.phi),
                self.r * np.cos(self.theta),
            )
        )


def spherical_grid(n: int, r_max: float) -> SphericalGrid:
    """N^3-point grid: r linear on (0, r_max), theta on (0, pi), phi on (0, 2*pi)."""
    if not r_max > 0:
        raise DomainError(f"Grid radius must be positive, got {r_max}.")
    rule = gauss_legendre(n)
    r, w_r = rule.mapped(0.0, r_max)
    theta, w_t = rule.mapped(0.0, np.pi)
    phi, w_p = rule.mapped(0.0, 2.0 * np.pi)

    rr, tt, pp = np.meshgrid(r, theta, phi, indexing="ij")
    wr, wt, wp = np.meshgrid(w_r, w_t, w_p, indexing="ij")
    weights = rr**2 * np.sin(tt) * wr * wt * wp
    logger.info("Spherical grid: order %d, radius %.4g bohr, %d points", n, r_max, weights.size)
    return SphericalGrid(
        radius=float(r_max),
        order=int(n),
        r=rr.ravel(),
        theta=tt.ravel(),
        phi=pp.ravel(),
        weights=weights.ravel(),
    )


def integrate(grid: SphericalGrid, f: Callable[[np.ndarray], np.ndarray]) -> complex | float:
    """
    Sum f(p_i) w_i over the grid.

    `f` receives the (n, 3) Cartesian points and must return n values. A non-finite value raises
    IntegrationError naming the first offending (r, theta, phi).
    """
    values = np.asarray(f(grid.points))
    if values.shape != grid.weights.shape:
        values = np.broadcast_to(values, grid.weights.shape)
    finite = np.isfinite(values)
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        raise IntegrationError((grid.r[bad], grid.theta[bad], grid.phi[bad]), complex(values[bad]))
    # fixed pairwise reduction order
    total = np.sum(values * grid.weights)
    return complex(total) if np.iscomplexobj(total) else float(total)
