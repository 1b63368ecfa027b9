from __future__ import annotations

import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
SRC = ROOT / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

CO2_WFN = SRC / "twisted_scattering" / "data" / "co2_gaussian.wfn"

# One normalised s primitive (zeta = 1) on a proton, singly occupied.
HYDROGEN_WFN = """\
H atom, single Gaussian
GAUSSIAN              1 MOL ORBITALS      1 PRIMITIVES        1 NUCLEI
  H    1    (CENTRE  1)   0.00000000   0.00000000   0.00000000  CHARGE =  1.0
CENTRE ASSIGNMENTS    1
TYPE ASSIGNMENTS      1
EXPONENTS  1.00000000D+00
MO    1     MO 0.0        OCC NO =    1.00000000 ORB. ENERGY =   -0.42441318
  7.12705470D-01
END DATA
 TOTAL ENERGY =      -0.424413181578 THE VIRIAL(-V/T)=   2.00000000
"""


@pytest.fixture
def hydrogen_text() -> str:
    return HYDROGEN_WFN


@pytest.fixture
def hydrogen_path(tmp_path: Path) -> Path:
    path = tmp_path / "h.wfn"
    path.write_text(HYDROGEN_WFN, encoding="utf-8")
    return path


@pytest.fixture
def co2_path() -> Path:
    return CO2_WFN
