from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .errors import DomainError
from .wfn_loader import Wavefunction

# exp(-46) ~ 1e-20
DEFAULT_SCREENING = -46.0
CO2_BOND_LENGTH = 2.185


class ChargeDistribution(Protocol):
    """Anything that can act as a scattering target: nuclei plus an electron density."""

    @property
    def nuclear_positions(self) -> np.ndarray: ...

    @property
    def nuclear_charges(self) -> np.ndarray: ...

    @property
    def electron_count(self) -> float: ...

    def density(self, points: np.ndarray) -> np.ndarray: ...


def density_on_points(
    wfn: Wavefunction,
    points: np.ndarray,
    chunk: int = 4096,
    screening: float | None = None,
) -> np.ndarray:
    """
    Electron density sum_i occ_i (sum_mu C_mu,i beta_mu(r))^2 on an (n, 3) array of points.

    `screening` drops primitives whose exponent argument -zeta|r-R|^2 falls below it; None keeps all.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[-1] != 3:
        raise DomainError(f"Points must have shape (n, 3), got {pts.shape}.")
    centers = wfn.primitive_centers
    powers = wfn.primitive_powers
    zeta = wfn.primitive_exponents
    coeffs_t = wfn.coefficient_matrix.T
    occ = wfn.occupations

    out = np.empty(len(pts), dtype=float)
    for start in range(0, len(pts), chunk):
        block = pts[start:start + chunk]
        offset = block[:, None, :] - centers[None, :, :]
        arg = -zeta[None, :] * np.einsum("npk,npk->np", offset, offset)
        angular = np.prod(offset ** powers[None, :, :], axis=2)
        if screening is not None:
            arg = np.where(arg < screening, -np.inf, arg)
        primitives = angular * np.exp(arg)
        orbitals = primitives @ coeffs_t
        out[start:start + chunk] = (orbitals * orbitals) @ occ
    return out


def density_at(wfn: Wavefunction, r: Sequence[float], screening: float | None = None) -> float:
    """Density at a single point (bohr), in electrons per bohr^3."""
    return float(density_on_points(wfn, np.asarray(r, dtype=float).reshape(1, 3), screening=screening)[0])


class WavefunctionDensity:
    """Adapts a parsed Wavefunction to the ChargeDistribution interface."""

    def __init__(self, wfn: Wavefunction, screening: float | None = None) -> None:
        self.wfn = wfn
        self.screening = screening

    @property
    def nuclear_positions(self) -> np.ndarray:
        return self.wfn.nuclear_positions

    @property
    def nuclear_charges(self) -> np.ndarray:
        return self.wfn.nuclear_charges

    @property
    def electron_count(self) -> float:
        return self.wfn.electron_count

    def density(self, points: np.ndarray) -> np.ndarray:
        return density_on_points(self.wfn, points, screening=self.screening)


def _slater_density(points: np.ndarray, center: np.ndarray, exponent: float, electrons: float) -> np.ndarray:
    dist = np.linalg.norm(np.atleast_2d(points) - center, axis=-1)
    return electrons * exponent**3 / np.pi * np.exp(-2.0 * exponent * dist)


def _slater_form_factor(vectors: np.ndarray, center: np.ndarray, exponent: float, electrons: float) -> np.ndarray:
    vecs = np.atleast_2d(vectors)
    q2 = np.einsum("nk,nk->n", vecs, vecs)
    radial = electrons * 16.0 * exponent**4 / (4.0 * exponent**2 + q2) ** 2
    return radial * np.exp(1j * (vecs @ center))


@dataclass(frozen=True)
class HydrogenicModel:
    """N_e electrons in a 1s-like density (Z^3/pi) exp(-2Z|r|) around a charge Z at the origin."""

    charge: float
    electrons: float

    def __post_init__(self) -> None:
        if not self.charge > 0:
            raise DomainError(f"Hydrogenic charge must be positive, got {self.charge}.")
        if not self.electrons > 0:
            raise DomainError(f"Hydrogenic electron count must be positive, got {self.electrons}.")

    @property
    def nuclear_positions(self) -> np.ndarray:
        return np.zeros((1, 3))

    @property
    def nuclear_charges(self) -> np.ndarray:
        return np.array([self.charge], dtype=float)

    @property
    def electron_count(self) -> float:
        return float(self.electrons)

    def density(self, points: np.ndarray) -> np.ndarray:
        return _slater_density(points, np.zeros(3), self.charge, self.electrons)

    def form_factor(self, vectors: np.ndarray) -> np.ndarray:
        return _slater_form_factor(vectors, np.zeros(3), self.charge, self.electrons)


@dataclass(frozen=True)
class Atom:
    """One centre of an independent-atom model; `exponent` defaults to the nuclear charge."""

    label: str
    charge: float
    electrons: float
    position: tuple[float, float, float]
    exponent: float | None = None

    @property
    def zeta(self) -> float:
        return float(self.charge if self.exponent is None else self.exponent)


@dataclass(frozen=True)
class IndependentAtomModel:
    atoms: tuple[Atom, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if not self.atoms:
            raise DomainError("An independent-atom model needs at least one atom.")
        for atom in self.atoms:
            if not (atom.charge > 0 and atom.electrons > 0 and atom.zeta > 0):
                raise DomainError(f"Atom {atom.label!r} needs positive charge, electrons and exponent.")

    @property
    def nuclear_positions(self) -> np.ndarray:
        return np.array([a.position for a in self.atoms], dtype=float)

    @property
    def nuclear_charges(self) -> np.ndarray:
        return np.array([a.charge for a in self.atoms], dtype=float)

    @property
    def electron_count(self) -> float:
        return float(sum(a.electrons for a in self.atoms))

    def density(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        total = np.zeros(len(pts))
        for atom in self.atoms:
            total += _slater_density(pts, np.asarray(atom.position), atom.zeta, atom.electrons)
        return total

    def form_factor(self, vectors: np.ndarray) -> np.ndarray:
        vecs = np.atleast_2d(np.asarray(vectors, dtype=float))
        total = np.zeros(len(vecs), dtype=complex)
        for atom in self.atoms:
            total += _slater_form_factor(vecs, np.asarray(atom.position), atom.zeta, atom.electrons)
        return total


AnalyticModel = HydrogenicModel | IndependentAtomModel


def analytic_density(model: AnalyticModel, r: Sequence[float]) -> float:
    """Density of an analytic model at a single point."""
    return float(model.density(np.asarray(r, dtype=float).reshape(1, 3))[0])


def co2_iam(bond_length: float = CO2_BOND_LENGTH, carbon_exponent: float = 1.5, oxygen_exponent: float = 1.8) -> IndependentAtomModel:
    """Linear O=C=O along z with screened Slater-like atomic densities."""
    return IndependentAtomModel(
        atoms=(
            Atom("C", 6.0, 6.0, (0.0, 0.0, 0.0), carbon_exponent),
            Atom("O", 8.0, 8.0, (0.0, 0.0, bond_length), oxygen_exponent),
            Atom("O", 8.0, 8.0, (0.0, 0.0, -bond_length), oxygen_exponent),
        )
    )


_HYDROGENIC_RE = re.compile(r"^hydrogenic\s*:\s*(.*)$", re.IGNORECASE)


def parse_model_spec(spec: str) -> AnalyticModel:
    """
    Build an analytic model from text.

    Accepted forms: "co2-iam" and "hydrogenic:Z=<charge>,N=<electrons>" (N defaults to Z).
    """
    text = spec.strip()
    if text.lower() == "co2-iam":
        return co2_iam()
    match = _HYDROGENIC_RE.match(text)
    if not match:
        raise DomainError(f"Unknown analytic model '{spec}'. Use 'co2-iam' or 'hydrogenic:Z=..,N=..'.")
    params: dict[str, float] = {}
    for item in filter(None, (p.strip() for p in match.group(1).split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise DomainError(f"Malformed model parameter '{item}' in '{spec}'.")
        try:
            params[key.strip().upper()] = float(value)
        except ValueError as err:
            raise DomainError(f"Model parameter '{item}' is not numeric.") from err
    if "Z" not in params:
        raise DomainError(f"Hydrogenic model '{spec}' needs Z.")
    return HydrogenicModel(charge=params["Z"], electrons=params.get("N", params["Z"]))
