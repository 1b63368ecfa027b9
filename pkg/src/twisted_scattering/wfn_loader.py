from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

logger = logging.getLogger(__name__)


class WavefunctionError(ValueError):
    """Base class for problems found while reading an AIM wavefunction file."""


class WfnParseError(WavefunctionError):
    """Raised when a line does not follow the AIM .wfn layout."""

    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


class WfnInconsistencyError(WavefunctionError):
    """Raised when section lengths disagree with the counts declared in the header."""


class UnsupportedAngularMomentumError(WavefunctionError):
    """Raised for primitive type codes beyond g functions."""

    def __init__(self, type_code: int) -> None:
        super().__init__(f"Unsupported primitive type code {type_code}; codes 1..35 (s through g) are handled.")
        self.type_code = type_code


# Cartesian powers (a, b, c) of (x-X)^a (y-Y)^b (z-Z)^c, indexed by AIM type code - 1.
TYPE_EXPONENTS: tuple[tuple[int, int, int], ...] = (
    (0, 0, 0),
    (1, 0, 0), (0, 1, 0), (0, 0, 1),
    (2, 0, 0), (0, 2, 0), (0, 0, 2), (1, 1, 0), (1, 0, 1), (0, 1, 1),
    (3, 0, 0), (0, 3, 0), (0, 0, 3), (2, 1, 0), (2, 0, 1),
    (0, 2, 1), (1, 2, 0), (1, 0, 2), (0, 1, 2), (1, 1, 1),
    (4, 0, 0), (0, 4, 0), (0, 0, 4), (3, 1, 0), (3, 0, 1),
    (1, 3, 0), (0, 3, 1), (1, 0, 3), (0, 1, 3), (2, 2, 0),
    (2, 0, 2), (0, 2, 2), (2, 1, 1), (1, 2, 1), (1, 1, 2),
)

MAX_TYPE_CODE = len(TYPE_EXPONENTS)

_FLOAT = r"[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[DdEe][-+]?\d+)?"
_FLOAT_RE = re.compile(_FLOAT)
_HEADER_RE = re.compile(
    r"^\s*(?:GAUSSIAN|GTO)\s+(\d+)\s+MOL\s+ORBITALS\s+(\d+)\s+PRIMITIVES\s+(\d+)\s+NUCLEI",
    re.IGNORECASE,
)
_NUCLEUS_RE = re.compile(
    rf"^\s*([A-Za-z]+)\s*(\d+)\s*\(CENTRE\s*(\d+)\)(.*?)CHARGE\s*=\s*({_FLOAT})",
    re.IGNORECASE,
)
_MO_RE = re.compile(
    rf"^\s*MO\s*(\d+).*?OCC\s*NO\s*=\s*({_FLOAT}).*?ENERGY\s*=\s*({_FLOAT})",
    re.IGNORECASE,
)
_ENERGY_RE = re.compile(rf"ENERGY\s*=\s*({_FLOAT})", re.IGNORECASE)
_VIRIAL_RE = re.compile(rf"VIRIAL\s*\(-V/T\)\s*=\s*({_FLOAT})", re.IGNORECASE)


def _to_float(token: str) -> float:
    """Convert a Fortran-style real ("0.1234D+02") to float."""
    return float(token.replace("D", "E").replace("d", "e"))


def _floats(text: str) -> list[float]:
    return [_to_float(tok) for tok in _FLOAT_RE.findall(text)]


@dataclass(frozen=True)
class Nucleus:
    label: str
    charge: float
    position: tuple[float, float, float]


@dataclass(frozen=True)
class GaussianPrimitive:
    """A Cartesian Gaussian; `center_index` is 1-based into the nucleus list."""

    center_index: int
    type_code: int
    exponent: float

    @property
    def powers(self) -> tuple[int, int, int]:
        return TYPE_EXPONENTS[self.type_code - 1]


@dataclass(frozen=True)
class MolecularOrbital:
    occupation: float
    energy: float
    coefficients: tuple[float, ...]


@dataclass(frozen=True)
class Wavefunction:
    """
    Parsed AIM wavefunction.

    Coefficients are primitive-level: normalisation is already folded in, so the density is
    sum_i occ_i * (sum_mu C_mu,i * beta_mu(r))^2 with bare Cartesian Gaussians beta_mu.
    """

    title: str
    nuclei: tuple[Nucleus, ...]
    primitives: tuple[GaussianPrimitive, ...]
    orbitals: tuple[MolecularOrbital, ...]
    total_energy: float | None = None
    virial_ratio: float | None = None

    @property
    def electron_count(self) -> float:
        return float(sum(orb.occupation for orb in self.orbitals))

    @property
    def nuclear_charge(self) -> float:
        return float(sum(nuc.charge for nuc in self.nuclei))

    @cached_property
    def nuclear_positions(self) -> np.ndarray:
        return np.array([nuc.position for nuc in self.nuclei], dtype=float).reshape(-1, 3)

    @cached_property
    def nuclear_charges(self) -> np.ndarray:
        return np.array([nuc.charge for nuc in self.nuclei], dtype=float)

    @cached_property
    def primitive_centers(self) -> np.ndarray:
        """(n_prim, 3) array of the centre each primitive sits on."""
        index = np.array([p.center_index - 1 for p in self.primitives], dtype=int)
        return self.nuclear_positions[index]

    @cached_property
    def primitive_powers(self) -> np.ndarray:
        return np.array([p.powers for p in self.primitives], dtype=int).reshape(-1, 3)

    @cached_property
    def primitive_exponents(self) -> np.ndarray:
        return np.array([p.exponent for p in self.primitives], dtype=float)

    @cached_property
    def coefficient_matrix(self) -> np.ndarray:
        """(n_mo, n_prim) coefficient matrix."""
        return np.array([orb.coefficients for orb in self.orbitals], dtype=float).reshape(
            len(self.orbitals), len(self.primitives)
        )

    @cached_property
    def occupations(self) -> np.ndarray:
        return np.array([orb.occupation for orb in self.orbitals], dtype=float)


class _LineCursor:
    """Iterates numbered lines and lets the parser peek at the next one."""

    def __init__(self, lines: Iterable[str]) -> None:
        self._lines = [line.rstrip("\r\n") for line in lines]
        self._pos = 0

    @property
    def line_number(self) -> int:
        return self._pos + 1

    def peek(self) -> str | None:
        return self._lines[self._pos] if self._pos < len(self._lines) else None

    def next(self, expecting: str) -> str:
        if self._pos >= len(self._lines):
            raise WfnParseError(self.line_number, f"unexpected end of file, expected {expecting}")
        line = self._lines[self._pos]
        self._pos += 1
        return line

    def __len__(self) -> int:
        return len(self._lines)


def _keyword_block(cursor: _LineCursor, keyword: str) -> tuple[int, list[str]]:
    """Collect the payload of consecutive lines starting with `keyword`."""
    start = cursor.line_number
    payload: list[str] = []
    while (line := cursor.peek()) is not None and line.lstrip().upper().startswith(keyword):
        cursor.next(keyword)
        payload.extend(line.lstrip()[len(keyword):].split())
    if not payload:
        raise WfnParseError(start, f"expected '{keyword}' section")
    return start, payload


def _parse_ints(tokens: Sequence[str], line: int, keyword: str) -> list[int]:
    try:
        return [int(tok) for tok in tokens]
    except ValueError as err:
        raise WfnParseError(line, f"non-integer entry in {keyword}") from err


def parse_wfn(source: IO[str] | Iterable[str]) -> Wavefunction:
    """
    Parse AIM .wfn text into a Wavefunction.

    Raises:
        WfnParseError: malformed layout, with the offending line number.
        WfnInconsistencyError: section lengths disagree with the header counts.
        UnsupportedAngularMomentumError: a primitive type code above 35.
    """
    cursor = _LineCursor(source)
    if len(cursor) == 0:
        raise WfnParseError(1, "empty wavefunction stream")

    title = cursor.next("title").strip()
    header_line = cursor.line_number
    header = cursor.next("GAUSSIAN header")
    match = _HEADER_RE.match(header)
    if not match:
        raise WfnParseError(header_line, "malformed header, expected 'GAUSSIAN <n> MOL ORBITALS <n> PRIMITIVES <n> NUCLEI'")
    n_mo, n_prim, n_nuc = (int(g) for g in match.groups())

    nuclei: list[Nucleus] = []
    for _ in range(n_nuc):
        line_no = cursor.line_number
        line = cursor.next("nucleus line")
        found = _NUCLEUS_RE.match(line)
        if not found:
            if line.lstrip().upper().startswith("CENTRE ASSIGNMENTS"):
                raise WfnInconsistencyError(f"Header declares {n_nuc} nuclei but {len(nuclei)} were listed.")
            raise WfnParseError(line_no, "malformed nucleus line")
        coords = _floats(found.group(4))
        if len(coords) != 3:
            raise WfnParseError(line_no, "nucleus line must carry three coordinates")
        charge = _to_float(found.group(5))
        if charge <= 0:
            raise WfnParseError(line_no, f"nuclear charge must be positive, got {charge}")
        nuclei.append(Nucleus(label=found.group(1), charge=charge, position=(coords[0], coords[1], coords[2])))

    centre_line, centre_tokens = _keyword_block(cursor, "CENTRE ASSIGNMENTS")
    centres = _parse_ints(centre_tokens, centre_line, "CENTRE ASSIGNMENTS")
    type_line, type_tokens = _keyword_block(cursor, "TYPE ASSIGNMENTS")
    types = _parse_ints(type_tokens, type_line, "TYPE ASSIGNMENTS")
    exp_line, exp_tokens = _keyword_block(cursor, "EXPONENTS")
    exponents = _floats(" ".join(exp_tokens))

    for name, values in (("centre assignments", centres), ("type assignments", types), ("exponents", exponents)):
        if len(values) != n_prim:
            raise WfnInconsistencyError(f"Header declares {n_prim} primitives but {len(values)} {name} were listed.")

    primitives: list[GaussianPrimitive] = []
    for centre, code, zeta in zip(centres, types, exponents):
        if not 1 <= code <= MAX_TYPE_CODE:
            raise UnsupportedAngularMomentumError(code)
        if not 1 <= centre <= n_nuc:
            raise WfnInconsistencyError(f"Primitive assigned to centre {centre}, but only {n_nuc} nuclei exist.")
        if zeta <= 0:
            raise WfnParseError(exp_line, f"primitive exponent must be positive, got {zeta}")
        primitives.append(GaussianPrimitive(center_index=centre, type_code=code, exponent=zeta))

    orbitals: list[MolecularOrbital] = []
    while (line := cursor.peek()) is not None and not line.strip().upper().startswith("END DATA"):
        line_no = cursor.line_number
        cursor.next("MO header")
        if not line.strip():
            continue
        mo = _MO_RE.match(line)
        if not mo:
            raise WfnParseError(line_no, "expected 'MO <i> ... OCC NO = <occ> ORB. ENERGY = <e>'")
        occupation = _to_float(mo.group(2))
        if occupation < 0:
            raise WfnParseError(line_no, f"occupation must be non-negative, got {occupation}")
        coefficients: list[float] = []
        while (body := cursor.peek()) is not None:
            stripped = body.strip().upper()
            if stripped.startswith("MO") or stripped.startswith("END DATA"):
                break
            cursor.next("coefficients")
            coefficients.extend(_floats(body))
        if len(coefficients) != n_prim:
            raise WfnInconsistencyError(
                f"Orbital {mo.group(1)} lists {len(coefficients)} coefficients for {n_prim} primitives."
            )
        orbitals.append(MolecularOrbital(occupation=occupation, energy=_to_float(mo.group(3)), coefficients=tuple(coefficients)))

    if cursor.peek() is None:
        raise WfnParseError(cursor.line_number, "missing 'END DATA' sentinel")
    cursor.next("END DATA")
    if len(orbitals) != n_mo:
        raise WfnInconsistencyError(f"Header declares {n_mo} orbitals but {len(orbitals)} were listed.")

    total_energy: float | None = None
    virial: float | None = None
    trailer = cursor.peek()
    if trailer is not None:
        if (found_energy := _ENERGY_RE.search(trailer)) is not None:
            total_energy = _to_float(found_energy.group(1))
        if (found_virial := _VIRIAL_RE.search(trailer)) is not None:
            virial = _to_float(found_virial.group(1))

    return Wavefunction(
        title=title,
        nuclei=tuple(nuclei),
        primitives=tuple(primitives),
        orbitals=tuple(orbitals),
        total_energy=total_energy,
        virial_ratio=virial,
    )


def load_wfn(file_path: str | Path) -> Wavefunction:
    """Read and parse a .wfn file from disk."""
    path = Path(file_path)
    if not path.exists():
        raise FileNotFoundError(f"Wavefunction file not found: {path}")
    with path.open("r", encoding="utf-8", errors="replace") as handle:
        wfn = parse_wfn(handle)
    logger.info(
        "Loaded %s: '%s', %d nuclei, %d primitives, %.6g electrons",
        path.name,
        wfn.title,
        len(wfn.nuclei),
        len(wfn.primitives),
        wfn.electron_count,
    )
    return wfn


def _chunks(values: Sequence, size: int) -> Iterator[Sequence]:
    for start in range(0, len(values), size):
        yield values[start:start + size]


def dump_wfn(wfn: Wavefunction, stream: IO[str]) -> None:
    """Write `wfn` in AIM layout; 17 significant digits keep parse(dump(w)) == w."""
    n_mo, n_prim, n_nuc = len(wfn.orbitals), len(wfn.primitives), len(wfn.nuclei)
    stream.write(f"{wfn.title}\n")
    stream.write(f"GAUSSIAN {n_mo:14d} MOL ORBITALS {n_prim:6d} PRIMITIVES {n_nuc:8d} NUCLEI\n")
    for index, nuc in enumerate(wfn.nuclei, start=1):
        x, y, z = nuc.position
        stream.write(
            f"  {nuc.label:<2}{index:4d}    (CENTRE{index:3d}) {x: .16E} {y: .16E} {z: .16E}  CHARGE = {nuc.charge: .16E}\n"
        )
    for chunk in _chunks([p.center_index for p in wfn.primitives], 20):
        stream.write("CENTRE ASSIGNMENTS  " + "".join(f"{c:3d}" for c in chunk) + "\n")
    for chunk in _chunks([p.type_code for p in wfn.primitives], 20):
        stream.write("TYPE ASSIGNMENTS    " + "".join(f"{t:3d}" for t in chunk) + "\n")
    for chunk in _chunks([p.exponent for p in wfn.primitives], 5):
        stream.write("EXPONENTS " + " ".join(f"{e: .16E}" for e in chunk) + "\n")
    for index, orb in enumerate(wfn.orbitals, start=1):
        stream.write(f"MO{index:5d}     MO 0.0        OCC NO = {orb.occupation: .16E}  ORB. ENERGY = {orb.energy: .16E}\n")
        for chunk in _chunks(orb.coefficients, 5):
            stream.write(" ".join(f"{c: .16E}" for c in chunk) + "\n")
    stream.write("END DATA\n")
    if wfn.total_energy is not None:
        trailer = f" TOTAL ENERGY = {wfn.total_energy: .16E}"
        if wfn.virial_ratio is not None:
            trailer += f" THE VIRIAL(-V/T)= {wfn.virial_ratio: .16E}"
        stream.write(trailer + "\n")
