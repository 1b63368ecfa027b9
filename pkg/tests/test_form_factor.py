from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from twisted_scattering.density import CO2_BOND_LENGTH, HydrogenicModel, WavefunctionDensity
from twisted_scattering.errors import DomainError
from twisted_scattering.form_factor import (
    QuadratureFormFactor,
    build_form_factor_table,
    form_factor,
    grid_convergence,
    nuclear_term,
    nuclear_terms,
)
from twisted_scattering.kinematics import MomentumTransfer, wave_number
from twisted_scattering.quadrature import spherical_grid
from twisted_scattering.wfn_loader import load_wfn


def _along_z(delta: float) -> MomentumTransfer:
    return MomentumTransfer(delta, 0.0, 0.0)


@pytest.mark.parametrize("delta", [0.5, 1.0, 2.0])
def test_hydrogenic_form_factor_matches_closed_form(delta: float) -> None:
    model = HydrogenicModel(charge=1.0, electrons=1.0)
    grid = spherical_grid(25, 10.0)

    value = form_factor(model.density, grid, _along_z(delta))

    assert value.real == pytest.approx(16.0 / (4.0 + delta**2) ** 2, rel=1e-4)
    assert abs(value.imag) < 1e-10


@pytest.mark.parametrize("delta", [4.0, 8.0])
def test_large_transfer_needs_a_finer_grid_than_the_default(delta: float) -> None:
    model = HydrogenicModel(charge=1.0, electrons=1.0)
    exact = 16.0 / (4.0 + delta**2) ** 2

    coarse = form_factor(model.density, spherical_grid(25, 10.0), _along_z(delta))
    fine = form_factor(model.density, spherical_grid(64, 10.0), _along_z(delta))

    assert coarse.real != pytest.approx(exact, rel=1e-4)
    assert fine.real == pytest.approx(exact, rel=1e-4)


def test_nuclear_term_closed_form_for_linear_co2() -> None:
    positions = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, CO2_BOND_LENGTH], [0.0, 0.0, -CO2_BOND_LENGTH]])
    charges = np.array([6.0, 8.0, 8.0])
    vectors = np.random.default_rng(7).normal(scale=3.0, size=(1000, 3))

    values = nuclear_terms(positions, charges, vectors)

    np.testing.assert_allclose(values.real, 16.0 * np.cos(CO2_BOND_LENGTH * vectors[:, 2]) + 6.0, rtol=0, atol=1e-12)
    np.testing.assert_allclose(values.imag, 0.0, atol=1e-12)


def test_scalar_nuclear_term_agrees_with_vectorised(co2_path: Path) -> None:
    wfn = load_wfn(co2_path)
    delta = MomentumTransfer(1.3, 0.4, 2.0)

    expected = nuclear_terms(wfn.nuclear_positions, wfn.nuclear_charges, delta.cartesian()[None])[0]
    assert nuclear_term(wfn.nuclei, delta) == pytest.approx(expected, abs=1e-12)


def test_quadrature_provider_is_normalised_to_electron_count(co2_path: Path) -> None:
    density = WavefunctionDensity(load_wfn(co2_path))
    provider = QuadratureFormFactor(density.density, spherical_grid(25, 10.0), electron_count=22.0)

    assert provider.raw_forward == pytest.approx(22.0, rel=1e-4)
    assert provider(np.zeros((1, 3)))[0].real == pytest.approx(22.0, rel=1e-13)


def test_quadrature_provider_matches_scalar_form_factor() -> None:
    model = HydrogenicModel(charge=1.0, electrons=1.0)
    grid = spherical_grid(20, 10.0)
    provider = QuadratureFormFactor(model.density, grid)
    delta = MomentumTransfer(1.5, 0.8, 0.3)

    assert provider(delta.cartesian()[None])[0] == pytest.approx(form_factor(model.density, grid, delta), abs=1e-12)


@pytest.fixture(scope="module")
def co2_table_setup() -> tuple:
    here = Path(__file__).resolve().parents[1] / "src" / "twisted_scattering" / "data" / "co2_gaussian.wfn"
    density = WavefunctionDensity(load_wfn(here))
    grid = spherical_grid(15, 10.0)
    table = build_form_factor_table(density.density, grid, k_max=2.0, n_delta=128, n_cos=32, electron_count=22.0)
    direct = QuadratureFormFactor(density.density, grid, electron_count=22.0)
    return table, direct


def test_table_reproduces_nodes(co2_table_setup: tuple) -> None:
    table, direct = co2_table_setup
    perp = np.array([1.0, 0.0, 0.0])
    vectors = []
    expected = []
    for i in (0, 5, 40, 127):
        for j in (0, 7, 16, 31):
            cos_g = table.cos_grid[j]
            sin_g = np.sqrt(max(0.0, 1.0 - cos_g**2))
            vectors.append(table.delta_grid[i] * (cos_g * table.axis + sin_g * perp))
            expected.append(table.values[i, j])
    vectors_arr = np.array(vectors)

    np.testing.assert_allclose(table(vectors_arr), expected, atol=1e-9)
    np.testing.assert_allclose(direct(vectors_arr), expected, atol=1e-9)


def test_table_interpolates_between_nodes(co2_table_setup: tuple) -> None:
    table, direct = co2_table_setup
    rng = np.random.default_rng(2)
    # x-z half-plane, where the table and the direct sum share the same angular samples
    gamma = rng.uniform(0.0, np.pi, size=60)
    directions = np.column_stack((np.sin(gamma), np.zeros(60), np.cos(gamma)))
    vectors = directions * rng.uniform(0.0, 4.0, size=(60, 1))

    assert np.max(np.abs(table(vectors) - direct(vectors))) < 1e-3 * 22.0


def test_bilinear_accessor(co2_table_setup: tuple) -> None:
    table, _ = co2_table_setup
    delta = np.array([table.delta_grid[10], 1.234])
    cos_gamma = np.array([table.cos_grid[3], 0.41])

    exact = table.bilinear(delta[:1], cos_gamma[:1])
    assert exact[0] == pytest.approx(table.values[10, 3], abs=1e-12)
    assert abs(table.bilinear(delta, cos_gamma)[1] - table.lookup(delta, cos_gamma)[1]) < 1e-2 * 22.0


def test_table_forward_row_equals_electron_count(co2_table_setup: tuple) -> None:
    table, _ = co2_table_setup

    np.testing.assert_allclose(table.values[0].real, 22.0, rtol=1e-12)
    assert table(np.zeros((1, 3)))[0].real == pytest.approx(22.0, rel=1e-12)


def test_table_rejects_transfer_beyond_range(co2_table_setup: tuple) -> None:
    table, _ = co2_table_setup

    with pytest.raises(DomainError):
        table(np.array([[0.0, 0.0, 4.1]]))


def test_table_size_limits() -> None:
    model = HydrogenicModel(charge=1.0, electrons=1.0)
    grid = spherical_grid(8, 5.0)

    with pytest.raises(DomainError):
        build_form_factor_table(model.density, grid, k_max=1.0, n_delta=32)
    with pytest.raises(DomainError):
        build_form_factor_table(model.density, grid, k_max=1.0, n_cos=16)


def test_grid_convergence_sweeps_up_to_the_largest_transfer(co2_path: Path) -> None:
    density = WavefunctionDensity(load_wfn(co2_path))
    reach_100ev = 2.0 * wave_number(100.0)
    reach_1kev = 2.0 * wave_number(1000.0)

    low = grid_convergence(density.density, 25, 10.0, reach_100ev, 22.0)
    high = grid_convergence(density.density, 25, 10.0, reach_1kev, 22.0)
    refined = grid_convergence(density.density, 45, 10.0, reach_1kev, 22.0)

    assert (low.order, low.reference_order) == (25, 35)
    assert low.delta_max == pytest.approx(reach_100ev)
    assert low.change < 1e-4
    assert high.change > 1e-2
    assert refined.change < 5e-3
    assert refined.to_dict()["reference_order"] == 55


def test_grid_convergence_rejects_empty_range() -> None:
    model = HydrogenicModel(charge=1.0, electrons=1.0)

    with pytest.raises(DomainError):
        grid_convergence(model.density, 10, 10.0, 0.0, 1.0)
