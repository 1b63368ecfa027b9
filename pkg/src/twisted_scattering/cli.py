from __future__ import annotations

import logging
import sys
from pathlib import Path
from typing import Any, Callable, Optional

import click

from .config import build_run_config, load_config
from .errors import ConfigError, DomainError, InputFileError, NumericalError
from .kinematics import BeamParams
from .scan import CSV_FLOAT_FORMAT, ScanResult, beam_profile, run_dcs_scan, run_tcs_scan, write_scan
from .validation import validate as run_validation

logger = logging.getLogger(__name__)

EXIT_CONFIG = 1
EXIT_INPUT = 2
EXIT_NUMERIC = 3
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class RunFailure(click.ClickException):
    """ClickException carrying one of the documented exit codes."""

    def __init__(self, message: str, exit_code: int) -> None:
        super().__init__(message)
        self.exit_code = exit_code


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format=LOG_FORMAT,
        stream=sys.stderr,
        force=True,
    )


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--verbose", "-v", is_flag=True, help="Log progress at DEBUG level on stderr.")
def cli(verbose: bool) -> None:
    """Elastic DCS and TCS of plane-wave and twisted electrons on molecules (first Born approximation)."""
    _configure_logging(verbose)


def _run_options(func: Callable[..., Any]) -> Callable[..., Any]:
    """Flags shared by the scan and validate commands."""
    options = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False, path_type=Path), help="YAML run configuration."),
        click.option("--wfn", type=click.Path(dir_okay=False, path_type=Path), help="AIM .wfn wavefunction file."),
        click.option("--analytic", help="Analytic density: 'co2-iam' or 'hydrogenic:Z=..,N=..'."),
        click.option("--energy", help="Incident energies in eV, comma separated."),
        click.option("--theta-p", help="Opening angles in degrees, comma separated."),
        click.option("--ml", help="Topological charges, comma separated."),
        click.option("--theta-s", help="Scattering angles 'start:stop:step' in degrees."),
        click.option("--mode", help="pw, tw-fixed or tw-avg."),
        click.option("--orientation-average", help="on or off."),
        click.option("--quad-n", type=int, help="Gauss-Legendre order per spherical dimension."),
        click.option("--rmax", type=float, help="Radial cutoff of the quadrature ball (bohr)."),
        click.option("--n-phi", type=int, help="Azimuthal nodes for the twisted integral."),
        click.option("--euler-grid", help="Euler grid sizes 'a,b,c' (each >= 8)."),
        click.option("--averaging", help="Orientation weighting: haar or uniform."),
        click.option("--no-table", is_flag=True, help="Evaluate the form factor by direct quadrature."),
        click.option("--workers", type=int, help="Worker threads for scan points."),
        click.option("--out", type=click.Path(dir_okay=False, path_type=Path), help="Output CSV (stdout if omitted)."),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _overrides(params: dict[str, Any]) -> dict[str, Any]:
    return {
        "density.wfn": params.get("wfn"),
        "density.analytic": params.get("analytic"),
        "beam.energies_ev": params.get("energy"),
        "beam.theta_p_deg": params.get("theta_p"),
        "beam.m_l": params.get("ml"),
        "scan.theta_s_deg": params.get("theta_s"),
        "scan.mode": params.get("mode"),
        "scan.orientation_average": params.get("orientation_average"),
        "numerics.quad_n": params.get("quad_n"),
        "numerics.r_max": params.get("rmax"),
        "numerics.n_phi": params.get("n_phi"),
        "numerics.euler_grid": params.get("euler_grid"),
        "numerics.averaging": params.get("averaging"),
        "numerics.use_table": False if params.get("no_table") else None,
        "numerics.workers": params.get("workers"),
        "numerics.n_theta": params.get("n_theta"),
        "output.path": params.get("out"),
    }


def _failure(err: Exception) -> RunFailure:
    if isinstance(err, (ConfigError, FileNotFoundError)):
        return RunFailure(str(err), EXIT_CONFIG)
    if isinstance(err, InputFileError):
        return RunFailure(str(err), EXIT_INPUT)
    return RunFailure(str(err), EXIT_NUMERIC)


def _execute(params: dict[str, Any], runner: Callable[..., Any]) -> tuple[Any, Any]:
    """Build the run config and call `runner`, mapping failures to exit codes."""
    try:
        config = build_run_config(load_config(params.get("config_path")), _overrides(params))
        logger.debug("Resolved run configuration: %s", config)
        return config, runner(config)
    except (ConfigError, FileNotFoundError, InputFileError, NumericalError, DomainError) as err:
        raise _failure(err) from err


def _emit(result: ScanResult, output: Optional[Path]) -> None:
    if output is None:
        click.echo(result.frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT), nl=False)
        return
    write_scan(result, output)
    click.echo(f"Wrote {len(result.frame)} rows to {output}", err=True)
    for warning in result.manifest.warnings:
        click.echo(f"Warning: {warning}", err=True)


@cli.command()
@_run_options
def dcs(**params: Any) -> None:
    """Differential cross section over a scattering-angle scan."""
    config, result = _execute(params, run_dcs_scan)
    _emit(result, config.output)


@cli.command()
@_run_options
@click.option("--n-theta", type=int, help="Gauss-Legendre nodes in theta_s (>= 64).")
def tcs(**params: Any) -> None:
    """Total cross section per energy, opening angle and topological charge."""
    config, result = _execute(params, run_tcs_scan)
    _emit(result, config.output)


@cli.command()
@_run_options
def validate(**params: Any) -> None:
    """Run the invariant checks and print a pass/fail table (always exits 0)."""
    _, report = _execute(params, run_validation)
    frame = report.to_frame()
    frame["passed"] = frame["passed"].map({True: "PASS", False: "FAIL"})
    click.echo(frame.to_string(index=False))
    click.echo(f"{int((frame['passed'] == 'PASS').sum())}/{len(frame)} checks passed")


@cli.command()
@click.option("--energy", type=float, required=True, help="Incident energy in eV.")
@click.option("--theta-p", type=float, required=True, help="Opening angle in degrees.")
@click.option("--ml", type=int, default=0, show_default=True, help="Topological charge.")
@click.option("--rho-max", type=float, default=20.0, show_default=True, help="Largest radius in bohr.")
@click.option("--points", type=int, default=201, show_default=True, help="Number of radial points.")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), help="Output CSV (stdout if omitted).")
def profile(energy: float, theta_p: float, ml: int, rho_max: float, points: int, out: Optional[Path]) -> None:
    """Transverse intensity |psi|^2 of the Bessel beam."""
    try:
        frame = beam_profile(BeamParams.from_degrees(energy, theta_p, ml), rho_max, points)
    except DomainError as err:
        raise RunFailure(str(err), EXIT_CONFIG) from err
    if out is None:
        click.echo(frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT), nl=False)
        return
    out.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out, index=False, float_format=CSV_FLOAT_FORMAT)
    click.echo(f"Wrote {len(frame)} rows to {out}", err=True)


def main() -> None:
    cli()


if __name__ == "__main__":
    main()
