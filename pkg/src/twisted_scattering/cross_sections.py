from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Literal

import numpy as np

from .beam import expansion_prefactor
from .density import ChargeDistribution
from .errors import DomainError, ForwardSingularityError, NumericalError
from .form_factor import FormFactorFn, nuclear_terms
from .kinematics import (
    BeamParams,
    Weighting,
    orientation_samples,
    plane_transfer_vector,
    twisted_transfer_vectors,
    wave_number,
)
from .quadrature import gauss_legendre, periodic_rule

logger = logging.getLogger(__name__)

DELTA_MIN = 1e-3
MIN_PHI_NODES = 64
MIN_THETA_NODES = 64
MIN_EULER_NODES = 8
PEAK_TIE_RTOL = 1e-12

_X_AXIS = np.array([1.0, 0.0, 0.0])
_Y_AXIS = np.array([0.0, 1.0, 0.0])

# (theta_s, rotations (n, 3, 3)) -> DCS per rotation
DcsEvaluator = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Amplitude:
    value: complex
    kind: Literal["plane", "twisted"] = "plane"


@dataclass(frozen=True, eq=False)
class ScatteringTarget:
    """
    Nuclei plus an electronic form factor, optionally pre-rotated by `orientation`.

    A rotation R moves nuclei to R l_j and the density to rho(R^T r), so chi is read at R^T Delta.
    """

    positions: np.ndarray
    charges: np.ndarray
    form_factor: FormFactorFn
    electron_count: float
    orientation: np.ndarray | None = None

    @classmethod
    def from_distribution(cls, distribution: ChargeDistribution, form_factor: FormFactorFn) -> "ScatteringTarget":
        return cls(
            positions=np.asarray(distribution.nuclear_positions, dtype=float),
            charges=np.asarray(distribution.nuclear_charges, dtype=float),
            form_factor=form_factor,
            electron_count=float(distribution.electron_count),
        )

    def rotated(self, matrix: np.ndarray) -> "ScatteringTarget":
        rot = np.asarray(matrix, dtype=float)
        combined = rot if self.orientation is None else rot @ self.orientation
        return ScatteringTarget(self.positions, self.charges, self.form_factor, self.electron_count, combined)

    def nuclear_terms(self, vectors: np.ndarray) -> np.ndarray:
        positions = self.positions if self.orientation is None else self.positions @ self.orientation.T
        return nuclear_terms(positions, self.charges, vectors)

    def electronic_terms(self, vectors: np.ndarray) -> np.ndarray:
        vecs = np.atleast_2d(vectors)
        return self.form_factor(vecs if self.orientation is None else vecs @ self.orientation)

    def _raw_amplitudes(self, vectors: np.ndarray) -> np.ndarray:
        q2 = np.einsum("nk,nk->n", vectors, vectors)
        return -2.0 / q2 * (self.nuclear_terms(vectors) - self.electronic_terms(vectors))

    def plane_amplitudes(self, vectors: np.ndarray, fallback: np.ndarray | None = None) -> np.ndarray:
        """
        T_pw = -(2 / Delta^2)(alpha - chi) for an (n, 3) array of transfer vectors.

        Below DELTA_MIN the amplitude is a + b Delta^2 fitted through 2*DELTA_MIN and 4*DELTA_MIN
        along the same direction; a zero vector uses `fallback` (one row or one per vector).
        """
        vecs = np.atleast_2d(np.asarray(vectors, dtype=float))
        magnitude = np.linalg.norm(vecs, axis=1)
        small = magnitude < DELTA_MIN
        out = np.empty(len(vecs), dtype=complex)
        if (~small).any():
            out[~small] = self._raw_amplitudes(vecs[~small])
        if small.any():
            if fallback is None:
                fallback = _X_AXIS
            back = np.broadcast_to(np.asarray(fallback, dtype=float), vecs.shape)[small]
            mag = magnitude[small]
            direction = np.where(mag[:, None] > 0, vecs[small] / np.where(mag > 0, mag, 1.0)[:, None], back)
            t2 = self._raw_amplitudes(2.0 * DELTA_MIN * direction)
            t4 = self._raw_amplitudes(4.0 * DELTA_MIN * direction)
            curvature = (t4 - t2) / (12.0 * DELTA_MIN**2)
            out[small] = (4.0 * t2 - t4) / 3.0 + curvature * mag**2
        if not np.isfinite(out).all():
            raise NumericalError("Non-finite plane-wave amplitude.")
        return out


def t_plane(alpha: complex, chi: complex, delta: float) -> Amplitude:
    """Plane-wave Born amplitude -(2 / Delta^2)(alpha - chi)."""
    if delta == 0:
        raise ForwardSingularityError("Plane-wave amplitude is singular at Delta = 0; use the forward limit.")
    return Amplitude(complex(-2.0 / delta**2 * (alpha - chi)), "plane")


def dcs_plane(amplitude: Amplitude | complex) -> float:
    value = amplitude.value if isinstance(amplitude, Amplitude) else amplitude
    return float(abs(value) ** 2)


dcs_twisted = dcs_plane


def _rotate(vectors: np.ndarray, rotations: np.ndarray) -> np.ndarray:
    """(n_rot, n_vec, 3) array of R v."""
    return np.einsum("rij,nj->rni", rotations, vectors)


def _twisted_weights(beam: BeamParams, n_phi: int) -> tuple[np.ndarray, np.ndarray]:
    if n_phi < MIN_PHI_NODES:
        raise DomainError(f"Azimuthal integration needs at least {MIN_PHI_NODES} nodes, got {n_phi}.")
    return periodic_rule(n_phi)


def t_twisted(
    beam: BeamParams,
    theta_s: float,
    target: ScatteringTarget,
    n_phi: int = 256,
    rotation: np.ndarray | None = None,
) -> Amplitude:
    """
    Bessel-beam amplitude at zero impact parameter.

    T_tw = C(kappa) (-i)^m sum_j w_j exp(i m phi_j) T_pw(Delta(phi_j)) with trapezoid nodes phi_j.
    C(0) = 0, so a beam without opening angle gives zero for every m including m = 0; the plane-wave
    limit belongs to the b-averaged cross section.
    """
    if beam.opening_angle == 0.0:
        return Amplitude(0j, "twisted")
    phi, weights = _twisted_weights(beam, n_phi)
    m = beam.topological_charge
    rot = np.eye(3) if rotation is None else np.asarray(rotation, dtype=float)
    vectors = twisted_transfer_vectors(beam.wave_number, beam.opening_angle, theta_s, phi) @ rot.T
    amplitudes = target.plane_amplitudes(vectors, fallback=rot @ _Y_AXIS)
    total = np.sum(weights * np.exp(1j * m * phi) * amplitudes)
    return Amplitude(complex(expansion_prefactor(beam.transverse_wave_number) * (-1j) ** m * total), "twisted")


def dcs_b_averaged(
    beam: BeamParams,
    theta_s: float,
    target: ScatteringTarget,
    n_phi: int = 256,
    rotation: np.ndarray | None = None,
) -> float:
    """(1 / (2 pi cos theta_p)) integral over phi_p of the plane-wave DCS at Delta(phi_p)."""
    phi, weights = _twisted_weights(beam, n_phi)
    rot = np.eye(3) if rotation is None else np.asarray(rotation, dtype=float)
    vectors = twisted_transfer_vectors(beam.wave_number, beam.opening_angle, theta_s, phi) @ rot.T
    amplitudes = target.plane_amplitudes(vectors, fallback=rot @ _Y_AXIS)
    return float(np.sum(weights * np.abs(amplitudes) ** 2) / (2.0 * np.pi * np.cos(beam.opening_angle)))


def plane_evaluator(target: ScatteringTarget, energy_ev: float) -> DcsEvaluator:
    k = wave_number(energy_ev)

    def evaluate(theta_s: float, rotations: np.ndarray) -> np.ndarray:
        vec = plane_transfer_vector(k, theta_s)
        vectors = rotations @ vec
        fallback = rotations @ _X_AXIS
        return np.abs(target.plane_amplitudes(vectors, fallback=fallback)) ** 2

    return evaluate


def twisted_evaluator(target: ScatteringTarget, beam: BeamParams, n_phi: int = 256) -> DcsEvaluator:
    """Fixed impact parameter (b = 0) twisted DCS, one value per rotation."""
    phi, weights = _twisted_weights(beam, n_phi)
    m = beam.topological_charge
    coefficients = weights * np.exp(1j * m * phi)
    prefactor = expansion_prefactor(beam.transverse_wave_number)

    def evaluate(theta_s: float, rotations: np.ndarray) -> np.ndarray:
        if beam.opening_angle == 0.0:
            return np.zeros(len(rotations))
        base = twisted_transfer_vectors(beam.wave_number, beam.opening_angle, theta_s, phi)
        vectors = _rotate(base, rotations)
        fallback = np.repeat((rotations @ _Y_AXIS)[:, None, :], len(phi), axis=1)
        amps = target.plane_amplitudes(vectors.reshape(-1, 3), fallback=fallback.reshape(-1, 3))
        totals = amps.reshape(len(rotations), len(phi)) @ coefficients
        return np.abs(prefactor * totals) ** 2

    return evaluate


def b_averaged_evaluator(target: ScatteringTarget, beam: BeamParams, n_phi: int = 256) -> DcsEvaluator:
    """Impact-parameter averaged twisted DCS; independent of the topological charge."""
    phi, weights = _twisted_weights(beam, n_phi)
    norm = 2.0 * np.pi * np.cos(beam.opening_angle)

    def evaluate(theta_s: float, rotations: np.ndarray) -> np.ndarray:
        base = twisted_transfer_vectors(beam.wave_number, beam.opening_angle, theta_s, phi)
        vectors = _rotate(base, rotations)
        fallback = np.repeat((rotations @ _Y_AXIS)[:, None, :], len(phi), axis=1)
        amps = target.plane_amplitudes(vectors.reshape(-1, 3), fallback=fallback.reshape(-1, 3))
        return (np.abs(amps.reshape(len(rotations), len(phi))) ** 2 @ weights) / norm

    return evaluate


def fixed_orientation(evaluator: DcsEvaluator, theta_s: float) -> float:
    return float(evaluator(theta_s, np.eye(3)[None])[0])


def orientation_average(
    evaluator: DcsEvaluator,
    theta_s: float,
    grid: tuple[int, int, int] = (8, 8, 8),
    weighting: Weighting = "haar",
    batch: int = 64,
) -> float:
    """Average the DCS over molecular orientations by rotating the transfer vectors."""
    if min(grid) < MIN_EULER_NODES:
        raise DomainError(f"Euler grid sizes must be at least {MIN_EULER_NODES} each, got {grid}.")
    rotations, weights = orientation_samples(grid, weighting)
    logger.debug("Orientation average at theta_s = %.6g over %d rotations (%s)", theta_s, len(rotations), weighting)
    total = 0.0
    for start in range(0, len(rotations), batch):
        values = evaluator(theta_s, rotations[start:start + batch])
        total += float(np.dot(weights[start:start + batch], values))
    return total


def total_cross_section(
    dcs: Callable[[float], float],
    n_theta: int = 96,
    mapper: Callable[..., Iterable[float]] = map,
) -> float:
    """2 pi integral_0^pi sin(theta) DCS(theta) d theta by Gauss-Legendre in theta."""
    if n_theta < MIN_THETA_NODES:
        raise DomainError(f"Total cross section needs at least {MIN_THETA_NODES} angular nodes, got {n_theta}.")
    theta, weights = gauss_legendre(n_theta).mapped(0.0, np.pi)
    values = np.fromiter(mapper(dcs, theta.tolist()), dtype=float, count=theta.size)
    return float(2.0 * np.pi * np.sum(weights * np.sin(theta) * values))


def locate_peak(theta_grid: np.ndarray, values: np.ndarray) -> tuple[float, float]:
    """Angle and value of the maximum; near-ties resolve to the smaller angle."""
    theta = np.asarray(theta_grid, dtype=float)
    vals = np.asarray(values, dtype=float)
    if theta.size == 0 or theta.shape != vals.shape:
        raise DomainError("Peak search needs matching, non-empty angle and value arrays.")
    order = np.argsort(theta, kind="stable")
    theta, vals = theta[order], vals[order]
    peak = vals.max()
    index = int(np.flatnonzero(vals >= peak - PEAK_TIE_RTOL * abs(peak))[0])
    return float(theta[index]), float(vals[index])
