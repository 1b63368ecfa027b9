from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .errors import DomainError, IntegrationError
from .kinematics import MomentumTransfer
from .quadrature import MAX_ORDER, SphericalGrid, integrate, spherical_grid
from .wfn_loader import Nucleus

logger = logging.getLogger(__name__)

DensityFn = Callable[[np.ndarray], np.ndarray]
FormFactorFn = Callable[[np.ndarray], np.ndarray]
Interpolation = Literal["cubic", "linear"]

_CHUNK_ELEMENTS = 4_000_000
CONVERGENCE_STEP = 10
CONVERGENCE_POINTS = 16
# off every symmetry axis of the bundled and analytic targets
CONVERGENCE_DIRECTION = (float(np.sin(0.7)), 0.0, float(np.cos(0.7)))


def nuclear_term(nuclei: Sequence[Nucleus], delta: MomentumTransfer) -> complex:
    """alpha = sum_j Z_j exp(i Delta . l_j)."""
    vec = delta.cartesian()
    total = 0j
    for nuc in nuclei:
        total += nuc.charge * np.exp(1j * float(np.dot(vec, nuc.position)))
    return complex(total)


def nuclear_terms(positions: np.ndarray, charges: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Vectorised nuclear term for an (n, 3) array of transfer vectors."""
    phases = np.atleast_2d(vectors) @ np.asarray(positions, dtype=float).T
    return np.exp(1j * phases) @ np.asarray(charges, dtype=float)


def form_factor(density: DensityFn, grid: SphericalGrid, delta: MomentumTransfer) -> complex:
    """chi = integral of exp(i Delta . r) rho(r) over the grid's ball."""
    vec = delta.cartesian()
    return complex(integrate(grid, lambda pts: np.exp(1j * (pts @ vec)) * density(pts)))


def _weighted_density(density: DensityFn, grid: SphericalGrid) -> np.ndarray:
    values = np.asarray(density(grid.points), dtype=float)
    finite = np.isfinite(values)
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        raise IntegrationError((grid.r[bad], grid.theta[bad], grid.phi[bad]), complex(values[bad]))
    return grid.weights * values


class QuadratureFormFactor:
    """
    Direct grid evaluation of chi for arbitrary transfer vectors.

    When `electron_count` is given the result is rescaled so chi(0) equals it exactly; `raw_forward`
    keeps the unscaled integral of the density.
    """

    def __init__(self, density: DensityFn, grid: SphericalGrid, electron_count: float | None = None) -> None:
        self.grid = grid
        self._weighted = _weighted_density(density, grid)
        self.raw_forward = float(np.sum(self._weighted))
        if electron_count is not None and self.raw_forward > 0:
            self.scale = electron_count / self.raw_forward
        else:
            self.scale = 1.0

    def __call__(self, vectors: np.ndarray) -> np.ndarray:
        vecs = np.atleast_2d(np.asarray(vectors, dtype=float))
        points = self.grid.points
        out = np.empty(len(vecs), dtype=complex)
        step = max(1, _CHUNK_ELEMENTS // points.shape[0])
        for start in range(0, len(vecs), step):
            phase = vecs[start:start + step] @ points.T
            out[start:start + step] = np.exp(1j * phase) @ self._weighted
        return self.scale * out


@dataclass(frozen=True)
class ConvergenceEstimate:
    order: int
    reference_order: int
    delta_max: float
    change: float

    def to_dict(self) -> dict[str, float | int]:
        return {
            "order": self.order,
            "reference_order": self.reference_order,
            "delta_max": self.delta_max,
            "max_relative_change": self.change,
        }


def grid_convergence(
    density: DensityFn,
    order: int,
    r_max: float,
    delta_max: float,
    electron_count: float,
    n_points: int = CONVERGENCE_POINTS,
) -> ConvergenceEstimate:
    """
    Compare unscaled chi on the order-N grid with an order N + 10 grid.

    Transfers run from 0.5 to `delta_max` bohr^-1 along a fixed oblique direction; the change is
    max |chi_N - chi_ref| divided by the electron count.
    """
    if not delta_max > 0:
        raise DomainError(f"Convergence sweep needs a positive |Delta| limit, got {delta_max}.")
    reference_order = min(order + CONVERGENCE_STEP, MAX_ORDER)
    coarse = QuadratureFormFactor(density, spherical_grid(order, r_max))
    fine = QuadratureFormFactor(density, spherical_grid(reference_order, r_max))
    magnitudes = np.linspace(min(0.5, delta_max), delta_max, n_points)
    vectors = np.outer(magnitudes, CONVERGENCE_DIRECTION)
    change = float(np.max(np.abs(coarse(vectors) - fine(vectors)))) / max(abs(electron_count), 1e-300)
    logger.debug("chi(N=%d) vs chi(N=%d) up to |Delta| = %.4g: %.3e", order, reference_order, delta_max, change)
    return ConvergenceEstimate(order, reference_order, float(delta_max), change)


def _perpendicular(axis: np.ndarray) -> np.ndarray:
    trial = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    perp = trial - np.dot(trial, axis) * axis
    return perp / np.linalg.norm(perp)


@dataclass(eq=False)
class FormFactorTable:
    """
    chi tabulated on |Delta| x cos(gamma), gamma being the angle to the molecular axis.

    Valid for densities symmetric about `axis`. Cubic lookups interpolate in (|Delta|^2, cos gamma),
    which keeps chi even in |Delta| near the forward direction.
    """

    delta_grid: np.ndarray
    cos_grid: np.ndarray
    values: np.ndarray
    axis: np.ndarray
    raw_forward: float
    scale: float = 1.0
    interpolation: Interpolation = "cubic"
    _real: RectBivariateSpline = field(init=False, repr=False)
    _imag: RectBivariateSpline = field(init=False, repr=False)

    def __post_init__(self) -> None:
        x = self.delta_grid**2
        self._real = RectBivariateSpline(x, self.cos_grid, self.values.real, kx=3, ky=3, s=0)
        self._imag = RectBivariateSpline(x, self.cos_grid, self.values.imag, kx=3, ky=3, s=0)

    @property
    def delta_max(self) -> float:
        return float(self.delta_grid[-1])

    def _check_range(self, delta: np.ndarray) -> None:
        if np.any(delta > self.delta_max * (1.0 + 1e-9)):
            raise DomainError(
                f"|Delta| = {float(np.max(delta)):.6g} exceeds the tabulated range {self.delta_max:.6g}; rebuild with a larger k_max."
            )

    def lookup(self, delta: np.ndarray, cos_gamma: np.ndarray) -> np.ndarray:
        """Cubic-spline value at (|Delta|, cos gamma)."""
        d = np.asarray(delta, dtype=float)
        self._check_range(d)
        d = np.minimum(d, self.delta_max)
        c = np.clip(np.asarray(cos_gamma, dtype=float), -1.0, 1.0)
        return self._real.ev(d * d, c) + 1j * self._imag.ev(d * d, c)

    def bilinear(self, delta: np.ndarray, cos_gamma: np.ndarray) -> np.ndarray:
        """Bilinear value at (|Delta|, cos gamma)."""
        d = np.asarray(delta, dtype=float)
        self._check_range(d)
        d = np.minimum(d, self.delta_max)
        c = np.clip(np.asarray(cos_gamma, dtype=float), -1.0, 1.0)
        i = np.clip(np.searchsorted(self.delta_grid, d, side="right") - 1, 0, self.delta_grid.size - 2)
        j = np.clip(np.searchsorted(self.cos_grid, c, side="right") - 1, 0, self.cos_grid.size - 2)
        td = (d - self.delta_grid[i]) / (self.delta_grid[i + 1] - self.delta_grid[i])
        tc = (c - self.cos_grid[j]) / (self.cos_grid[j + 1] - self.cos_grid[j])
        v = self.values
        return (
            (1 - td) * (1 - tc) * v[i, j]
            + td * (1 - tc) * v[i + 1, j]
            + (1 - td) * tc * v[i, j + 1]
            + td * tc * v[i + 1, j + 1]
        )

    def __call__(self, vectors: np.ndarray) -> np.ndarray:
        vecs = np.atleast_2d(np.asarray(vectors, dtype=float))
        magnitude = np.linalg.norm(vecs, axis=1)
        safe = np.where(magnitude > 0, magnitude, 1.0)
        cos_gamma = np.where(magnitude > 0, (vecs @ self.axis) / safe, 1.0)
        if self.interpolation == "linear":
            return self.bilinear(magnitude, cos_gamma)
        return self.lookup(magnitude, cos_gamma)


def build_form_factor_table(
    density: DensityFn,
    grid: SphericalGrid,
    k_max: float,
    n_delta: int = 256,
    n_cos: int = 64,
    axis: Sequence[float] = (0.0, 0.0, 1.0),
    electron_count: float | None = None,
    interpolation: Interpolation = "cubic",
) -> FormFactorTable:
    """
    Tabulate chi on |Delta| in [0, 2 k_max] and cos(gamma) in [-1, 1].

    With `electron_count` the table is rescaled so its forward row equals that count.
    """
    if n_delta < 64:
        raise DomainError(f"Form-factor table needs at least 64 |Delta| nodes, got {n_delta}.")
    if n_cos < 32:
        raise DomainError(f"Form-factor table needs at least 32 cos(gamma) nodes, got {n_cos}.")
    if not k_max > 0:
        raise DomainError(f"k_max must be positive, got {k_max}.")
    unit_axis = np.asarray(axis, dtype=float)
    unit_axis = unit_axis / np.linalg.norm(unit_axis)
    perp = _perpendicular(unit_axis)

    started = time.perf_counter()
    weighted = _weighted_density(density, grid)
    raw_forward = float(np.sum(weighted))
    scale = electron_count / raw_forward if electron_count is not None and raw_forward > 0 else 1.0

    delta_grid = np.linspace(0.0, 2.0 * k_max, n_delta)
    cos_grid = np.linspace(-1.0, 1.0, n_cos)
    values = np.empty((n_delta, n_cos), dtype=complex)
    points = grid.points
    step = max(1, _CHUNK_ELEMENTS // points.shape[0])
    for j, cos_gamma in enumerate(cos_grid):
        sin_gamma = np.sqrt(max(0.0, 1.0 - cos_gamma * cos_gamma))
        projection = points @ (cos_gamma * unit_axis + sin_gamma * perp)
        for start in range(0, n_delta, step):
            phase = np.outer(delta_grid[start:start + step], projection)
            values[start:start + step, j] = np.exp(1j * phase) @ weighted
    values *= scale

    logger.info(
        "Form-factor table %dx%d up to |Delta| = %.4g built in %.2fs (raw chi(0) = %.6g)",
        n_delta,
        n_cos,
        delta_grid[-1],
        time.perf_counter() - started,
        raw_forward,
    )
    return FormFactorTable(
        delta_grid=delta_grid,
        cos_grid=cos_grid,
        values=values,
        axis=unit_axis,
        raw_forward=raw_forward,
        scale=scale,
        interpolation=interpolation,
    )
