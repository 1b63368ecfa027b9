from __future__ import annotations

import hashlib
import logging
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator

import numpy as np
import pandas as pd
import scipy
import yaml

from . import __version__
from .beam import expansion_prefactor, transverse_intensity
from .config import RunConfig
from .cross_sections import (
    DcsEvaluator,
    ScatteringTarget,
    b_averaged_evaluator,
    fixed_orientation,
    orientation_average,
    plane_evaluator,
    total_cross_section,
    twisted_evaluator,
)
from .density import AnalyticModel, ChargeDistribution, WavefunctionDensity, parse_model_spec
from .errors import ConfigError, DomainError, InputFileError, NumericalError
from .form_factor import (
    ConvergenceEstimate,
    FormFactorFn,
    QuadratureFormFactor,
    build_form_factor_table,
    grid_convergence,
)
from .kinematics import BeamParams, wave_number
from .quadrature import spherical_grid
from .wfn_loader import WavefunctionError, load_wfn

logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = "%.17g"
FORWARD_TOLERANCE = 2e-3
NORMALIZATION_LIMIT = 0.05
CONVERGENCE_TOLERANCE = 5e-3
MODE_LABELS = {"pw": "pw", "tw-fixed": "tw_fixed", "tw-avg": "tw_b_averaged"}
DCS_COLUMNS = ["mode", "E_i_eV", "theta_p_deg", "m_l", "theta_s_deg", "dcs_au", "orientation_averaged"]
TCS_COLUMNS = ["mode", "E_i_eV", "theta_p_deg", "m_l", "sigma_au"]


@dataclass
class PreparedTarget:
    """Scattering target plus the provenance that goes into the manifest."""

    target: ScatteringTarget
    distribution: ChargeDistribution
    form_factor_source: str
    raw_forward: float | None
    inputs: dict[str, str] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    convergence: ConvergenceEstimate | None = None


@dataclass
class RunManifest:
    config: dict[str, Any]
    versions: dict[str, str]
    normalization: dict[str, Any]
    quadrature: dict[str, Any]
    inputs: dict[str, str]
    warnings: list[str]
    started_utc: str
    finished_utc: str
    wall_time_s: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": self.config,
            "versions": self.versions,
            "normalization": self.normalization,
            "quadrature": self.quadrature,
            "inputs": self.inputs,
            "warnings": self.warnings,
            "started_utc": self.started_utc,
            "finished_utc": self.finished_utc,
            "wall_time_s": self.wall_time_s,
        }

    def write(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as handle:
            yaml.safe_dump(self.to_dict(), handle, sort_keys=False)
        return path


@dataclass
class ScanResult:
    frame: pd.DataFrame
    manifest: RunManifest


def manifest_path(output: Path) -> Path:
    return output.with_name(output.name + ".manifest.yml")


def sha256_of(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as handle:
        for block in iter(lambda: handle.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def molecular_axis(positions: np.ndarray, tol: float = 1e-6) -> np.ndarray | None:
    """
    Unit axis of a linear geometry whose line passes through the origin.

    A single centre gives the direction to it (z when it sits at the origin). Non-collinear nuclei,
    or a line that misses the origin, give None: the table is only valid for chi symmetric about
    an axis through the expansion centre.
    """
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    scale = max(1.0, float(np.max(np.linalg.norm(pos, axis=1))))
    if len(pos) == 1:
        norm = float(np.linalg.norm(pos[0]))
        axis = pos[0] / norm if norm > tol * scale else np.array([0.0, 0.0, 1.0])
    else:
        centroid = pos.mean(axis=0)
        _, singular, vt = np.linalg.svd(pos - centroid)
        if singular[0] == 0.0 or singular[1] > tol * max(1.0, singular[0]):
            return None
        axis = vt[0]
        if np.linalg.norm(centroid - np.dot(centroid, axis) * axis) > tol * scale:
            return None
    # deterministic sign
    if axis[np.argmax(np.abs(axis))] < 0:
        axis = -axis
    return axis


def load_distribution(config: RunConfig) -> tuple[WavefunctionDensity | AnalyticModel, dict[str, str]]:
    """Resolve the configured density source; file problems become InputFileError."""
    if config.wfn is not None:
        path = config.wfn
        try:
            wfn = load_wfn(path)
        except FileNotFoundError as err:
            raise InputFileError(path, "wavefunction file not found") from err
        except WavefunctionError as err:
            raise InputFileError(path, str(err)) from err
        except OSError as err:
            raise InputFileError(path, f"cannot read wavefunction file ({err})") from err
        return WavefunctionDensity(wfn), {str(path): sha256_of(path)}
    try:
        model: AnalyticModel = parse_model_spec(config.analytic or "")
    except DomainError as err:
        raise ConfigError("density.analytic", str(err)) from err
    return model, {}


def prepare_target(config: RunConfig, k_max: float) -> PreparedTarget:
    """
    Build the target and its form-factor provider (analytic, tabulated or direct quadrature).

    Grid providers are checked twice before use: a raw chi(0) more than 5% away from the electron
    count raises NumericalError, and chi at order N is compared with order N + 10 over the whole
    |Delta| <= 2 k_max range the scan can reach.
    """
    distribution, inputs = load_distribution(config)
    numerics = config.numerics
    if not isinstance(distribution, WavefunctionDensity):
        target = ScatteringTarget.from_distribution(distribution, distribution.form_factor)
        return PreparedTarget(target, distribution, "analytic", None, inputs)

    grid = spherical_grid(numerics.quad_n, numerics.r_max)
    electrons = distribution.electron_count
    warnings: list[str] = []
    provider: FormFactorFn
    direct = QuadratureFormFactor(distribution.density, grid, electron_count=electrons)
    raw = direct.raw_forward
    if electrons > 0 and abs(raw - electrons) / electrons > NORMALIZATION_LIMIT:
        raise NumericalError(
            f"Raw chi(0) = {raw:.6g} misses the electron count {electrons:.6g} by more than "
            f"{NORMALIZATION_LIMIT:.0%} on the N = {numerics.quad_n}, R = {numerics.r_max:g} bohr grid; "
            "the density is too compact or too diffuse for this grid."
        )
    if electrons > 0 and abs(raw - electrons) / electrons > FORWARD_TOLERANCE:
        message = f"Raw chi(0) = {raw:.6g} differs from the electron count {electrons:.6g} by more than 0.2%."
        logger.warning(message)
        warnings.append(message)

    estimate = grid_convergence(distribution.density, numerics.quad_n, numerics.r_max, 2.0 * k_max, electrons)
    if estimate.change > CONVERGENCE_TOLERANCE:
        message = (
            f"chi changes by {estimate.change:.2e} of the electron count between N = {estimate.order} and "
            f"N = {estimate.reference_order} for |Delta| up to {estimate.delta_max:.4g}; raise numerics.quad_n."
        )
        logger.warning(message)
        warnings.append(message)

    axis = molecular_axis(distribution.nuclear_positions)
    if numerics.use_table and axis is not None:
        table = build_form_factor_table(
            distribution.density,
            grid,
            k_max,
            n_delta=numerics.table_n_delta,
            n_cos=numerics.table_n_cos,
            axis=axis,
            electron_count=electrons,
            interpolation=numerics.interpolation,
        )
        provider, source = table, "table"
    else:
        if numerics.use_table:
            message = "Nuclei are not on a line through the origin; falling back to direct quadrature for the form factor."
            logger.warning(message)
            warnings.append(message)
        provider, source = direct, "quadrature"

    target = ScatteringTarget.from_distribution(distribution, provider)
    return PreparedTarget(target, distribution, source, raw, inputs, warnings, estimate)


def build_evaluator(mode: str, target: ScatteringTarget, beam: BeamParams, n_phi: int) -> DcsEvaluator:
    if mode == "pw":
        return plane_evaluator(target, beam.energy_ev)
    if mode == "tw-fixed":
        return twisted_evaluator(target, beam, n_phi)
    if mode == "tw-avg":
        return b_averaged_evaluator(target, beam, n_phi)
    raise ConfigError("scan.mode", f"unknown mode {mode!r}")


def _point_function(evaluator: DcsEvaluator, config: RunConfig) -> Callable[[float], float]:
    if config.orientation_average:
        numerics = config.numerics

        def averaged(theta_s: float) -> float:
            return orientation_average(evaluator, theta_s, numerics.euler_grid, numerics.averaging)

        return averaged
    return lambda theta_s: fixed_orientation(evaluator, theta_s)


@contextmanager
def _mapper(workers: int) -> Iterator[Callable[..., Iterable[Any]]]:
    """map() or an order-preserving thread-pool map."""
    if workers <= 1:
        yield map
        return
    with ThreadPoolExecutor(max_workers=workers) as executor:
        yield executor.map


def _series(config: RunConfig) -> Iterator[BeamParams]:
    for energy in config.energies_ev:
        for theta_p in config.theta_p_deg:
            for m_l in config.m_l:
                yield BeamParams.from_degrees(energy, theta_p, m_l)


def _energy_warnings(config: RunConfig) -> list[str]:
    messages = []
    for energy in config.low_energy:
        message = f"E_i = {energy:g} eV is below 300 eV, where the first Born approximation is unreliable."
        logger.warning(message)
        messages.append(message)
    return messages



def _aperture_warnings(config: RunConfig) -> list[str]:
    if config.mode != "tw-fixed" or 0.0 not in config.theta_p_deg:
        return []
    message = "theta_p = 0 in tw-fixed mode: C(kappa = 0) = 0, so the DCS is zero for every m_l; use pw or tw-avg."
    logger.warning(message)
    return [message]

def _manifest(
    config: RunConfig,
    prepared: PreparedTarget,
    warnings: list[str],
    started_utc: pd.Timestamp,
    started: float,
    extra_quadrature: dict[str, Any] | None = None,
) -> RunManifest:
    numerics = config.numerics
    twisted = config.mode != "pw"
    beams = [
        {
            "E_i_eV": beam.energy_ev,
            "theta_p_deg": float(np.degrees(beam.opening_angle)),
            "kappa_au": beam.transverse_wave_number,
            "expansion_prefactor": expansion_prefactor(beam.transverse_wave_number),
        }
        for beam in {(b.energy_ev, b.opening_angle): b for b in _series(config)}.values()
    ]
    normalization: dict[str, Any] = {
        "dcs": "|T|^2, plane-wave (2 pi)^(-3/2) factors not absorbed",
        "b_averaged_dcs": "(1 / (2 pi cos theta_p)) * integral dphi_p |T_pw|^2",
        "twisted_prefactor": "C(kappa) = sqrt(kappa) / ((2 pi)^2 sqrt(2 pi))" if twisted else None,
        "beams": beams if twisted else [],
        "form_factor_source": prepared.form_factor_source,
        "form_factor_scaled_to_electron_count": prepared.form_factor_source != "analytic",
        "raw_chi0": prepared.raw_forward,
        "electron_count": prepared.target.electron_count,
        "nuclear_charge": float(np.sum(prepared.target.charges)),
    }
    quadrature: dict[str, Any] = {
        "order": numerics.quad_n,
        "r_max_bohr": numerics.r_max,
        "radial_map": "linear",
        "n_phi": numerics.n_phi,
        "orientation_average": config.orientation_average,
        "euler_grid": list(numerics.euler_grid),
        "averaging": numerics.averaging,
        "convergence": (
            {
                **prepared.convergence.to_dict(),
                "tolerance": CONVERGENCE_TOLERANCE,
                "converged": prepared.convergence.change <= CONVERGENCE_TOLERANCE,
            }
            if prepared.convergence is not None
            else None
        ),
        "table": (
            {"n_delta": numerics.table_n_delta, "n_cos": numerics.table_n_cos, "interpolation": numerics.interpolation}
            if prepared.form_factor_source == "table"
            else None
        ),
    }
    quadrature.update(extra_quadrature or {})
    return RunManifest(
        config=config.to_dict(),
        versions={
            "twisted_scattering": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pandas": pd.__version__,
        },
        normalization=normalization,
        quadrature=quadrature,
        inputs=prepared.inputs,
        warnings=prepared.warnings + warnings,
        started_utc=started_utc.isoformat(),
        finished_utc=pd.Timestamp.now(tz="UTC").isoformat(),
        wall_time_s=round(time.perf_counter() - started, 3),
    )


def run_dcs_scan(config: RunConfig) -> ScanResult:
    """
    One row per (mode, E_i, theta_p, m_l, theta_s) in loop order energy > theta_p > m_l > theta_s.
    """
    started, started_utc = time.perf_counter(), pd.Timestamp.now(tz="UTC")
    warnings = _energy_warnings(config) + _aperture_warnings(config)
    k_max = max(wave_number(e) for e in config.energies_ev)
    prepared = prepare_target(config, k_max)

    theta_deg = config.theta_s_deg
    theta_rad = np.radians(theta_deg).tolist()
    label = MODE_LABELS[config.mode]
    frames: list[pd.DataFrame] = []
    with _mapper(config.numerics.workers) as mapper:
        for beam in _series(config):
            logger.info(
                "DCS %s: E_i = %g eV, theta_p = %g deg, m_l = %d (%d angles)",
                label,
                beam.energy_ev,
                np.degrees(beam.opening_angle),
                beam.topological_charge,
                len(theta_rad),
            )
            evaluator = build_evaluator(config.mode, prepared.target, beam, config.numerics.n_phi)
            values = list(mapper(_point_function(evaluator, config), theta_rad))
            frames.append(
                pd.DataFrame(
                    {
                        "mode": label,
                        "E_i_eV": beam.energy_ev,
                        "theta_p_deg": float(np.degrees(beam.opening_angle)),
                        "m_l": beam.topological_charge,
                        "theta_s_deg": theta_deg,
                        "dcs_au": np.asarray(values, dtype=float),
                        "orientation_averaged": config.orientation_average,
                    }
                )
            )
    frame = pd.concat(frames, ignore_index=True)[DCS_COLUMNS]
    return ScanResult(frame, _manifest(config, prepared, warnings, started_utc, started))


def run_tcs_scan(config: RunConfig) -> ScanResult:
    """One sigma per (mode, E_i, theta_p, m_l); energies below 300 eV are flagged, not rejected."""
    if not config.energies_ev:
        raise ConfigError("beam.energies_ev", "energy list is empty")
    started, started_utc = time.perf_counter(), pd.Timestamp.now(tz="UTC")
    warnings = _energy_warnings(config) + _aperture_warnings(config)
    k_max = max(wave_number(e) for e in config.energies_ev)
    prepared = prepare_target(config, k_max)

    label = MODE_LABELS[config.mode]
    rows: list[dict[str, Any]] = []
    with _mapper(config.numerics.workers) as mapper:
        for beam in _series(config):
            evaluator = build_evaluator(config.mode, prepared.target, beam, config.numerics.n_phi)
            sigma = total_cross_section(_point_function(evaluator, config), config.numerics.n_theta, mapper=mapper)
            logger.info("TCS %s: E_i = %g eV -> %.6g bohr^2", label, beam.energy_ev, sigma)
            rows.append(
                {
                    "mode": label,
                    "E_i_eV": beam.energy_ev,
                    "theta_p_deg": float(np.degrees(beam.opening_angle)),
                    "m_l": beam.topological_charge,
                    "sigma_au": sigma,
                }
            )
    frame = pd.DataFrame(rows, columns=TCS_COLUMNS)
    manifest = _manifest(config, prepared, warnings, started_utc, started, {"n_theta": config.numerics.n_theta})
    return ScanResult(frame, manifest)


def write_scan(result: ScanResult, output: Path) -> Path:
    """Write the CSV and its manifest next to it."""
    output.parent.mkdir(parents=True, exist_ok=True)
    result.frame.to_csv(output, index=False, float_format=CSV_FLOAT_FORMAT)
    result.manifest.write(manifest_path(output))
    return output


def beam_profile(beam: BeamParams, rho_max: float, points: int) -> pd.DataFrame:
    """Transverse intensity |psi|^2 on a radial grid."""
    if not rho_max > 0 or points < 2:
        raise DomainError("Profile needs a positive radius and at least two points.")
    rho = np.linspace(0.0, rho_max, points)
    return pd.DataFrame({"rho_bohr": rho, "intensity_au": transverse_intensity(beam, rho)})
