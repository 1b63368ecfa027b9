"""Position-space Bessel beam and its decomposition into a cone of plane waves."""

from __future__ import annotations

import numpy as np
from scipy.special import jv

from .errors import DomainError
from .kinematics import BeamParams
from .quadrature import periodic_rule


def expansion_prefactor(kappa: float) -> float:
    """C(kappa) = sqrt(kappa) / ((2 pi)^2 sqrt(2 pi)), the weight of each cone component."""
    if kappa < 0:
        raise DomainError(f"Transverse wave number must be non-negative, got {kappa}.")
    return float(np.sqrt(kappa) / ((2.0 * np.pi) ** 2 * np.sqrt(2.0 * np.pi)))


def bessel_wavefunction(beam: BeamParams, rho: np.ndarray, phi: np.ndarray, z: np.ndarray) -> np.ndarray:
    """sqrt(kappa / 2 pi) J_m(kappa rho) exp(i k_par z) exp(i m phi) in cylindrical coordinates."""
    kappa = beam.transverse_wave_number
    m = beam.topological_charge
    radial = np.sqrt(kappa / (2.0 * np.pi)) * jv(m, kappa * np.asarray(rho, dtype=float))
    phase = np.exp(1j * (beam.longitudinal_wave_number * np.asarray(z, dtype=float) + m * np.asarray(phi, dtype=float)))
    return radial * phase


def transverse_intensity(beam: BeamParams, rho: np.ndarray) -> np.ndarray:
    """|psi|^2 across the beam; zero on axis unless m = 0."""
    kappa = beam.transverse_wave_number
    return kappa / (2.0 * np.pi) * jv(beam.topological_charge, kappa * np.asarray(rho, dtype=float)) ** 2


def superpose_plane_waves(beam: BeamParams, points: np.ndarray, n_phi: int = 256) -> np.ndarray:
    """
    Sum the cone of plane waves with amplitudes C(kappa) (-i)^m exp(i m phi_k).

    The azimuthal integral is done with the trapezoid rule; the result equals psi / (2 pi).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    kappa = beam.transverse_wave_number
    m = beam.topological_charge
    phi_k, weights = periodic_rule(n_phi)
    # (n_phi, 3) wave vectors on the cone
    k_vectors = np.column_stack(
        (kappa * np.cos(phi_k), kappa * np.sin(phi_k), np.full(n_phi, beam.longitudinal_wave_number))
    )
    waves = np.exp(1j * (pts @ k_vectors.T))
    coefficients = weights * np.exp(1j * m * phi_k)
    return expansion_prefactor(kappa) * (-1j) ** m * (waves @ coefficients)
