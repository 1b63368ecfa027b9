from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Literal, Mapping

import numpy as np
import yaml

from .errors import ConfigError
from .quadrature import MAX_ORDER

Mode = Literal["pw", "tw-fixed", "tw-avg"]
MODES: tuple[str, ...] = ("pw", "tw-fixed", "tw-avg")
AVERAGING: tuple[str, ...] = ("haar", "uniform")

BORN_VALIDITY_EV = 300.0


def load_config(path: str | Path | None) -> Mapping[str, Any]:
    """
    Load a YAML config file; return an empty dict when not provided.

    Expected shape:
      density: { wfn: "co2.wfn" }            # or { analytic: "co2-iam" }
      beam: { energies_ev: [500, 1000], theta_p_deg: [10, 25], m_l: [1, 2, 3] }
      scan: { mode: "tw-fixed", theta_s_deg: "0:60:0.5", orientation_average: true }
      numerics: { quad_n: 25, r_max: 10.0, n_phi: 256, euler_grid: [8, 8, 8], ... }
      output: { path: "results/dcs.csv" }
    """
    if path is None:
        return {}
    config_path = Path(path)
    if not config_path.exists():
        raise FileNotFoundError(f"Config file not found: {config_path}")
    with config_path.open("r", encoding="utf-8") as handle:
        # safe_load prevents execution of arbitrary YAML tags.
        data = yaml.safe_load(handle) or {}
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config file must contain a top-level mapping")
    return data


@dataclass(frozen=True)
class Numerics:
    quad_n: int = 25
    r_max: float = 10.0
    n_phi: int = 256
    euler_grid: tuple[int, int, int] = (8, 8, 8)
    averaging: str = "haar"
    use_table: bool = True
    table_n_delta: int = 256
    table_n_cos: int = 64
    interpolation: str = "cubic"
    n_theta: int = 96
    workers: int = 1


@dataclass(frozen=True)
class RunConfig:
    """Validated, immutable run description. Angles in degrees, energies in eV."""

    wfn: Path | None
    analytic: str | None
    energies_ev: tuple[float, ...]
    theta_p_deg: tuple[float, ...] = (0.0,)
    m_l: tuple[int, ...] = (0,)
    mode: str = "pw"
    theta_s_range: tuple[float, float, float] = (0.0, 180.0, 1.0)
    orientation_average: bool = False
    numerics: Numerics = field(default_factory=Numerics)
    output: Path | None = None

    @property
    def theta_s_deg(self) -> np.ndarray:
        start, stop, step = self.theta_s_range
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return np.round(start + step * np.arange(count), 12)

    @property
    def low_energy(self) -> tuple[float, ...]:
        return tuple(e for e in self.energies_ev if e < BORN_VALIDITY_EV)

    def to_dict(self) -> dict[str, Any]:
        """Plain-type echo for manifests."""
        data = asdict(self)
        data["wfn"] = None if self.wfn is None else str(self.wfn)
        data["output"] = None if self.output is None else str(self.output)
        data["numerics"]["euler_grid"] = list(self.numerics.euler_grid)
        for key in ("energies_ev", "theta_p_deg", "m_l", "theta_s_range"):
            data[key] = list(data[key])
        return data


def _section(raw: Mapping[str, Any], name: str) -> Mapping[str, Any]:
    value = raw.get(name)
    if value is None:
        return {}
    if not isinstance(value, Mapping):
        raise ConfigError(name, "expected a mapping")
    return value


def _as_list(value: Any) -> list[Any]:
    if value is None:
        return []
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    if isinstance(value, (list, tuple)):
        return list(value)
    return [value]


def parse_float_list(value: Any, field_name: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in _as_list(value))
    except (TypeError, ValueError) as err:
        raise ConfigError(field_name, f"expected a list of numbers, got {value!r}") from err


def parse_int_list(value: Any, field_name: str) -> tuple[int, ...]:
    items = _as_list(value)
    try:
        parsed = tuple(int(v) for v in items)
    except (TypeError, ValueError) as err:
        raise ConfigError(field_name, f"expected a list of integers, got {value!r}") from err
    if any(float(v) != p for v, p in zip(items, parsed)):
        raise ConfigError(field_name, f"expected integers, got {value!r}")
    return parsed


def parse_angle_range(value: Any, field_name: str = "scan.theta_s_deg") -> tuple[float, float, float]:
    """Parse "start:stop:step" (degrees); a single number is a one-point range."""
    if isinstance(value, (int, float)):
        return (float(value), float(value), 1.0)
    parts = str(value).split(":")
    try:
        numbers = [float(p) for p in parts]
    except ValueError as err:
        raise ConfigError(field_name, f"expected 'start:stop:step', got {value!r}") from err
    if len(numbers) == 1:
        numbers = [numbers[0], numbers[0], 1.0]
    if len(numbers) != 3:
        raise ConfigError(field_name, f"expected 'start:stop:step', got {value!r}")
    start, stop, step = numbers
    if not step > 0:
        raise ConfigError(field_name, "step must be positive")
    if stop < start:
        raise ConfigError(field_name, "scan range is empty (stop < start)")
    if start < 0 or stop > 180:
        raise ConfigError(field_name, "scattering angles must lie in [0, 180] degrees")
    return (start, stop, step)


def parse_grid(value: Any, field_name: str = "numerics.euler_grid") -> tuple[int, int, int]:
    items = parse_int_list(value, field_name)
    if len(items) == 1:
        items = items * 3
    if len(items) != 3:
        raise ConfigError(field_name, f"expected three grid sizes, got {value!r}")
    if min(items) < 8:
        raise ConfigError(field_name, "each Euler grid size must be at least 8")
    return (items[0], items[1], items[2])


def parse_switch(value: Any, field_name: str) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in {"on", "true", "yes", "1"}:
        return True
    if text in {"off", "false", "no", "0"}:
        return False
    raise ConfigError(field_name, f"expected on/off, got {value!r}")


def _pick(overrides: Mapping[str, Any], key: str, fallback: Any) -> Any:
    """Flags win over file values when provided."""
    value = overrides.get(key)
    return fallback if value is None else value


def _bounded_int(value: Any, field_name: str, low: int, high: int | None = None) -> int:
    try:
        number = int(value)
    except (TypeError, ValueError) as err:
        raise ConfigError(field_name, f"expected an integer, got {value!r}") from err
    if number < low or (high is not None and number > high):
        bound = f"[{low}, {high}]" if high is not None else f">= {low}"
        raise ConfigError(field_name, f"value {number} outside {bound}")
    return number


def _numerics(raw: Mapping[str, Any], overrides: Mapping[str, Any]) -> Numerics:
    section = _section(raw, "numerics")
    defaults = Numerics()

    def get(key: str) -> Any:
        return _pick(overrides, f"numerics.{key}", section.get(key, getattr(defaults, key)))

    try:
        r_max = float(get("r_max"))
    except (TypeError, ValueError) as err:
        raise ConfigError("numerics.r_max", "expected a number") from err
    if not r_max > 0:
        raise ConfigError("numerics.r_max", "must be positive")
    averaging = str(get("averaging")).lower()
    if averaging not in AVERAGING:
        raise ConfigError("numerics.averaging", f"expected one of {AVERAGING}")
    interpolation = str(get("interpolation")).lower()
    if interpolation not in ("cubic", "linear"):
        raise ConfigError("numerics.interpolation", "expected 'cubic' or 'linear'")

    return Numerics(
        quad_n=_bounded_int(get("quad_n"), "numerics.quad_n", 1, MAX_ORDER),
        r_max=r_max,
        n_phi=_bounded_int(get("n_phi"), "numerics.n_phi", 64),
        euler_grid=parse_grid(get("euler_grid")),
        averaging=averaging,
        use_table=parse_switch(get("use_table"), "numerics.use_table"),
        table_n_delta=_bounded_int(get("table_n_delta"), "numerics.table_n_delta", 64),
        table_n_cos=_bounded_int(get("table_n_cos"), "numerics.table_n_cos", 32),
        interpolation=interpolation,
        n_theta=_bounded_int(get("n_theta"), "numerics.n_theta", 64, MAX_ORDER),
        workers=_bounded_int(get("workers"), "numerics.workers", 1),
    )


def build_run_config(raw: Mapping[str, Any], overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """
    Merge a loaded YAML mapping with command-line overrides and validate the result.

    Override keys are dotted paths such as "beam.energies_ev" or "numerics.quad_n".
    """
    flags = dict(overrides or {})
    density = _section(raw, "density")
    beam = _section(raw, "beam")
    scan = _section(raw, "scan")
    output = _section(raw, "output")

    wfn = density.get("wfn")
    analytic = density.get("analytic")
    if flags.get("density.wfn") is not None:
        wfn, analytic = flags["density.wfn"], None
    elif flags.get("density.analytic") is not None:
        wfn, analytic = None, flags["density.analytic"]
    if wfn is None and analytic is None:
        raise ConfigError("density", "provide a wavefunction file (wfn) or an analytic model")
    if wfn is not None and analytic is not None:
        raise ConfigError("density", "choose either wfn or analytic, not both")

    energies = parse_float_list(_pick(flags, "beam.energies_ev", beam.get("energies_ev")), "beam.energies_ev")
    if not energies:
        raise ConfigError("beam.energies_ev", "energy list is empty")
    if any(not e > 0 for e in energies):
        raise ConfigError("beam.energies_ev", "energies must be positive")

    mode = str(_pick(flags, "scan.mode", scan.get("mode", "pw"))).lower().replace("_", "-")
    if mode not in MODES:
        raise ConfigError("scan.mode", f"expected one of {MODES}, got {mode!r}")

    theta_p = parse_float_list(_pick(flags, "beam.theta_p_deg", beam.get("theta_p_deg", [0.0])), "beam.theta_p_deg")
    m_l = parse_int_list(_pick(flags, "beam.m_l", beam.get("m_l", [0])), "beam.m_l")
    if mode == "pw":
        theta_p, m_l = (0.0,), (0,)
    if not theta_p:
        raise ConfigError("beam.theta_p_deg", "opening-angle list is empty")
    if any(not 0.0 <= t < 90.0 for t in theta_p):
        raise ConfigError("beam.theta_p_deg", "opening angles must lie in [0, 90) degrees")
    if not m_l:
        raise ConfigError("beam.m_l", "topological-charge list is empty")

    theta_s = parse_angle_range(_pick(flags, "scan.theta_s_deg", scan.get("theta_s_deg", "0:180:1")))
    orientation = parse_switch(
        _pick(flags, "scan.orientation_average", scan.get("orientation_average", False)),
        "scan.orientation_average",
    )
    out = _pick(flags, "output.path", output.get("path"))

    return RunConfig(
        wfn=None if wfn is None else Path(wfn),
        analytic=None if analytic is None else str(analytic),
        energies_ev=energies,
        theta_p_deg=theta_p,
        m_l=m_l,
        mode=mode,
        theta_s_range=theta_s,
        orientation_average=orientation,
        numerics=_numerics(raw, flags),
        output=None if out is None else Path(out),
    )
