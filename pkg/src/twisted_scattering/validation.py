from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from .config import RunConfig
from .density import WavefunctionDensity
from .form_factor import grid_convergence
from .kinematics import EulerAngles, delta_plane, delta_twisted, euler_matrix, wave_number
from .quadrature import integrate, spherical_grid
from .scan import load_distribution

logger = logging.getLogger(__name__)

VOLUME_RTOL = 1e-8
ELECTRON_COUNT_RTOL = 5e-3
FORWARD_RTOL = 2e-3
ORTHOGONALITY_ATOL = 1e-12
REDUCTION_ATOL = 1e-10
CONVERGENCE_RTOL = 5e-3
_ROTATION_SAMPLES = 32
_REDUCTION_ANGLES = np.radians([0.0, 1.0, 10.0, 45.0, 90.0, 135.0, 180.0])


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    expected: float
    tolerance: float
    detail: str = ""


@dataclass
class DiagnosticsReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(c) for c in self.checks], columns=list(CheckResult.__dataclass_fields__))


def _relative(measured: float, expected: float) -> float:
    return abs(measured - expected) / max(abs(expected), 1e-300)


def _check(name: str, measured: float, expected: float, error: float, tolerance: float, detail: str) -> CheckResult:
    passed = bool(np.isfinite(error) and error < tolerance)
    if not passed:
        logger.warning("Check %s failed: %s", name, detail)
    return CheckResult(name, passed, float(measured), float(expected), tolerance, detail)


def validate(config: RunConfig, seed: int = 0) -> DiagnosticsReport:
    """
    Run the fast invariant suite on the configured target. Failures are reported, never raised,
    except for input problems that prevent loading the target at all.
    """
    distribution, _ = load_distribution(config)
    numerics = config.numerics
    grid = spherical_grid(numerics.quad_n, numerics.r_max)
    electrons = float(distribution.electron_count)
    report = DiagnosticsReport()

    volume = float(np.real(integrate(grid, lambda pts: np.ones(len(pts)))))
    exact_volume = 4.0 / 3.0 * np.pi * numerics.r_max**3
    error = _relative(volume, exact_volume)
    report.checks.append(
        _check("quadrature_volume", volume, exact_volume, error, VOLUME_RTOL, f"relative error {error:.3e}")
    )

    count = float(np.real(integrate(grid, distribution.density)))
    error = _relative(count, electrons)
    report.checks.append(
        _check("electron_count", count, electrons, error, ELECTRON_COUNT_RTOL, f"relative error {error:.3e}")
    )

    if isinstance(distribution, WavefunctionDensity):
        forward, source = count, "raw density quadrature"
    else:
        forward, source = float(np.real(distribution.form_factor(np.zeros((1, 3)))[0])), "analytic form factor"
    error = _relative(forward, electrons)
    report.checks.append(
        _check("forward_form_factor", forward, electrons, error, FORWARD_RTOL, f"chi(0) from {source}, relative error {error:.3e}")
    )

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(_ROTATION_SAMPLES):
        angles = EulerAngles(
            alpha=float(rng.uniform(0.0, 2.0 * np.pi)),
            beta=float(rng.uniform(0.0, np.pi)),
            gamma=float(rng.uniform(0.0, 2.0 * np.pi)),
        )
        matrix = euler_matrix(angles)
        worst = max(worst, float(np.max(np.abs(matrix.T @ matrix - np.eye(3)))))
    report.checks.append(
        _check("euler_orthogonality", worst, 0.0, worst, ORTHOGONALITY_ATOL, f"max |R^T R - I| over {_ROTATION_SAMPLES} rotations")
    )

    k = wave_number(config.energies_ev[0])
    worst = 0.0
    for theta_s in _REDUCTION_ANGLES:
        plane = delta_plane(k, float(theta_s)).cartesian()
        for phi_p in (0.0, 1.0, 4.0):
            twisted = delta_twisted(k, 0.0, float(theta_s), phi_p).cartesian()
            worst = max(worst, float(np.max(np.abs(twisted - plane))))
    report.checks.append(
        _check("theta_p_reduction", worst, 0.0, worst, REDUCTION_ATOL, "max |Delta_tw(theta_p=0) - Delta_pw|")
    )

    delta_max = 2.0 * max(wave_number(e) for e in config.energies_ev)
    estimate = grid_convergence(distribution.density, numerics.quad_n, numerics.r_max, delta_max, electrons)
    report.checks.append(
        _check(
            "quadrature_convergence",
            estimate.change,
            0.0,
            estimate.change,
            CONVERGENCE_RTOL,
            f"max |chi(N={estimate.order}) - chi(N={estimate.reference_order})| / N for |Delta| up to {delta_max:.4g}",
        )
    )
    logger.info("Validation finished: %d/%d checks passed", sum(c.passed for c in report.checks), len(report.checks))
    return report
