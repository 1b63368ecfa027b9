from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import DomainError
from .quadrature import gauss_legendre, periodic_rule

HARTREE_EV = 27.211386
ORTHOGONALITY_TOL = 1e-10

TransferKind = Literal["plane", "twisted"]
Weighting = Literal["haar", "uniform"]


def wave_number(energy_ev: float) -> float:
    """Non-relativistic wave number k = sqrt(2 E / E_h) in bohr^-1."""
    if not energy_ev > 0:
        raise DomainError(f"Incident energy must be positive, got {energy_ev} eV.")
    return float(np.sqrt(2.0 * energy_ev / HARTREE_EV))


@dataclass(frozen=True)
class BeamParams:
    """
    Incident Bessel beam. The target sits on the beam axis (impact parameter zero).

    Angles are radians. A zero opening angle describes a plane wave along z.
    """

    energy_ev: float
    opening_angle: float
    topological_charge: int = 0
    azimuth: float = 0.0

    def __post_init__(self) -> None:
        if not self.energy_ev > 0:
            raise DomainError(f"Beam energy must be positive, got {self.energy_ev} eV.")
        if not 0.0 <= self.opening_angle < np.pi / 2:
            raise DomainError(f"Opening angle must lie in [0, pi/2), got {self.opening_angle}.")

    @classmethod
    def from_degrees(cls, energy_ev: float, theta_p_deg: float, m_l: int = 0) -> "BeamParams":
        return cls(energy_ev=energy_ev, opening_angle=float(np.radians(theta_p_deg)), topological_charge=int(m_l))

    @property
    def wave_number(self) -> float:
        return wave_number(self.energy_ev)

    @property
    def transverse_wave_number(self) -> float:
        return self.wave_number * float(np.sin(self.opening_angle))

    @property
    def longitudinal_wave_number(self) -> float:
        return self.wave_number * float(np.cos(self.opening_angle))

    @property
    def impact_parameter(self) -> tuple[float, float, float]:
        return (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class MomentumTransfer:
    """Momentum transfer in spherical form; a zero magnitude marks the forward direction."""

    magnitude: float
    theta: float
    phi: float
    kind: TransferKind = "plane"
    beam_azimuth: float | None = None

    @property
    def is_forward(self) -> bool:
        return self.magnitude == 0.0

    def cartesian(self) -> np.ndarray:
        sin_t = np.sin(self.theta)
        return self.magnitude * np.array([sin_t * np.cos(self.phi), sin_t * np.sin(self.phi), np.cos(self.theta)])

    @classmethod
    def from_cartesian(
        cls, vector: np.ndarray, kind: TransferKind = "plane", beam_azimuth: float | None = None
    ) -> "MomentumTransfer":
        vec = np.asarray(vector, dtype=float)
        magnitude = float(np.linalg.norm(vec))
        if magnitude == 0.0:
            return cls(0.0, np.pi / 2, 0.0, kind, beam_azimuth)
        theta = float(np.arccos(np.clip(vec[2] / magnitude, -1.0, 1.0)))
        phi = float(np.arctan2(vec[1], vec[0]))
        return cls(magnitude, theta, phi, kind, beam_azimuth)


@dataclass(frozen=True)
class EulerAngles:
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self) -> None:
        two_pi = 2.0 * np.pi + 1e-12
        if not (0.0 <= self.alpha <= two_pi and 0.0 <= self.beta <= np.pi + 1e-12 and 0.0 <= self.gamma <= two_pi):
            raise DomainError(f"Euler angles out of range: {self}.")


def _check_scattering_angle(theta_s: float) -> None:
    if not 0.0 <= theta_s <= np.pi:
        raise DomainError(f"Scattering angle must lie in [0, pi], got {theta_s}.")


def delta_plane(k: float, theta_s: float) -> MomentumTransfer:
    """Plane-wave transfer k_i - k_s; the scattering plane fixes phi = 0."""
    _check_scattering_angle(theta_s)
    half = np.sin(0.5 * theta_s)
    magnitude = float(2.0 * k * half)
    if magnitude == 0.0:
        return MomentumTransfer(0.0, np.pi / 2, 0.0, "plane")
    # 1 - cos(theta_s) written as 2 sin^2(theta_s / 2)
    theta = float(np.arccos(np.clip(k * (2.0 * half * half) / magnitude, -1.0, 1.0)))
    return MomentumTransfer(magnitude, theta, 0.0, "plane")


def theta_ps(theta_p: float, theta_s: float, phi_p: float) -> float:
    """Angle between a constituent plane wave of the cone and the scattered wave."""
    cos_ps = np.cos(theta_p) * np.cos(theta_s) + np.sin(theta_p) * np.sin(theta_s) * np.cos(phi_p)
    return float(np.arccos(np.clip(cos_ps, -1.0, 1.0)))


def incident_wave_vector(k: float, theta_p: float, phi_p: float) -> np.ndarray:
    """
    Wave vector of the cone component at beam azimuth phi_p.

    phi_p is counted from the direction opposite the scattered electron's transverse momentum, so the
    transverse part points along azimuth phi_p + pi.
    """
    sin_p = np.sin(theta_p)
    return k * np.array([-sin_p * np.cos(phi_p), -sin_p * np.sin(phi_p), np.cos(theta_p)])


def scattered_wave_vector(k: float, theta_s: float) -> np.ndarray:
    return k * np.array([-np.sin(theta_s), 0.0, np.cos(theta_s)])


def plane_transfer_vector(k: float, theta_s: float) -> np.ndarray:
    half = np.sin(0.5 * theta_s)
    return k * np.array([np.sin(theta_s), 0.0, 2.0 * half * half])


def twisted_transfer_vectors(k: float, theta_p: float, theta_s: float, phi_p: np.ndarray) -> np.ndarray:
    """(n, 3) Cartesian k_i(phi_p) - k_s for an array of beam azimuths."""
    phi = np.atleast_1d(np.asarray(phi_p, dtype=float))
    sin_p = np.sin(theta_p)
    # cos(theta_p) - cos(theta_s) in product form
    dz = 2.0 * np.sin(0.5 * (theta_s + theta_p)) * np.sin(0.5 * (theta_s - theta_p))
    out = np.empty((phi.size, 3))
    out[:, 0] = k * (np.sin(theta_s) - sin_p * np.cos(phi))
    out[:, 1] = -k * sin_p * np.sin(phi)
    out[:, 2] = k * dz
    return out


def delta_twisted(k: float, theta_p: float, theta_s: float, phi_p: float) -> MomentumTransfer:
    """
    Transfer from the cone component at azimuth phi_p to the scattered wave.

    The azimuth is recovered from arccos and signed by the y component, which is -k sin(theta_p)
    sin(phi_p) in this frame, so the Cartesian reconstruction equals k_i - k_s.
    """
    vec = twisted_transfer_vectors(k, theta_p, theta_s, np.array([phi_p]))[0]
    magnitude = float(np.linalg.norm(vec))
    if magnitude == 0.0:
        return MomentumTransfer(0.0, np.pi / 2, 0.0, "twisted", phi_p)
    theta = float(np.arccos(np.clip(vec[2] / magnitude, -1.0, 1.0)))
    transverse = float(np.hypot(vec[0], vec[1]))
    if transverse == 0.0:
        return MomentumTransfer(magnitude, theta, 0.0, "twisted", phi_p)
    phi = float(np.arccos(np.clip(vec[0] / transverse, -1.0, 1.0)))
    if np.sin(theta_p) * np.sin(phi_p) > 0.0:
        phi = -phi
    return MomentumTransfer(magnitude, theta, phi, "twisted", phi_p)


def _axis_matrices(alpha: np.ndarray, beta: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    cg, sg = np.cos(gamma), np.sin(gamma)
    one, zero = np.ones_like(ca), np.zeros_like(ca)
    rx = np.stack([one, zero, zero, zero, ca, -sa, zero, sa, ca], axis=-1).reshape(*ca.shape, 3, 3)
    ry = np.stack([cb, zero, sb, zero, one, zero, -sb, zero, cb], axis=-1).reshape(*ca.shape, 3, 3)
    rz = np.stack([cg, -sg, zero, sg, cg, zero, zero, zero, one], axis=-1).reshape(*ca.shape, 3, 3)
    return rx @ ry @ rz


def euler_matrix(e: EulerAngles) -> np.ndarray:
    """R = Rx(alpha) Ry(beta) Rz(gamma)."""
    return _axis_matrices(np.asarray(e.alpha), np.asarray(e.beta), np.asarray(e.gamma))


def euler_matrices(alpha: np.ndarray, beta: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Vectorised Rx Ry Rz over broadcast angle arrays; shape (..., 3, 3)."""
    a, b, g = np.broadcast_arrays(np.asarray(alpha, float), np.asarray(beta, float), np.asarray(gamma, float))
    return _axis_matrices(a, b, g)


def is_orthogonal(matrix: np.ndarray, tol: float = ORTHOGONALITY_TOL) -> bool:
    mat = np.asarray(matrix, dtype=float)
    return mat.shape == (3, 3) and bool(np.allclose(mat.T @ mat, np.eye(3), atol=tol, rtol=0.0))


def rotate_transfer(delta: MomentumTransfer, matrix: np.ndarray) -> MomentumTransfer:
    """Apply an orthogonal matrix to the Cartesian form of `delta`."""
    if not is_orthogonal(matrix):
        raise DomainError("Rotation matrix is not orthogonal.")
    if delta.is_forward:
        return delta
    rotated = MomentumTransfer.from_cartesian(np.asarray(matrix, float) @ delta.cartesian(), delta.kind, delta.beam_azimuth)
    return MomentumTransfer(delta.magnitude, rotated.theta, rotated.phi, delta.kind, delta.beam_azimuth)


def orientation_samples(grid: tuple[int, int, int], weighting: Weighting = "haar") -> tuple[np.ndarray, np.ndarray]:
    """
    Rotation matrices and normalised weights for averaging over orientations.

    "haar": alpha and gamma on periodic nodes, the middle angle in [-pi/2, pi/2] with Gauss-Legendre
    nodes in sin(beta), which carries the cos(beta) density of the XYZ parametrisation.
    "uniform": equal weights on midpoint nodes over [0, 2pi) x [0, pi] x [0, 2pi).
    """
    n_alpha, n_beta, n_gamma = (int(n) for n in grid)
    if min(n_alpha, n_beta, n_gamma) < 1:
        raise DomainError(f"Euler grid sizes must be positive, got {grid}.")
    alpha, w_alpha = periodic_rule(n_alpha)
    gamma, w_gamma = periodic_rule(n_gamma)
    if weighting == "haar":
        rule = gauss_legendre(n_beta)
        beta, w_beta = np.arcsin(rule.nodes), rule.weights
    elif weighting == "uniform":
        beta = np.pi * (np.arange(n_beta) + 0.5) / n_beta
        w_beta = np.ones(n_beta)
        w_alpha, w_gamma = np.ones(n_alpha), np.ones(n_gamma)
    else:
        raise DomainError(f"Unknown orientation weighting '{weighting}'.")

    aa, bb, gg = np.meshgrid(alpha, beta, gamma, indexing="ij")
    weights = np.einsum("i,j,k->ijk", w_alpha, w_beta, w_gamma).ravel()
    matrices = euler_matrices(aa.ravel(), bb.ravel(), gg.ravel())
    return matrices, weights / weights.sum()
