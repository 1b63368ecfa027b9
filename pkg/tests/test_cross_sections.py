from __future__ import annotations

import functools
import math

import numpy as np
import pytest

from twisted_scattering.beam import expansion_prefactor
from twisted_scattering.cross_sections import (
    Amplitude,
    ScatteringTarget,
    b_averaged_evaluator,
    dcs_b_averaged,
    dcs_plane,
    fixed_orientation,
    locate_peak,
    orientation_average,
    plane_evaluator,
    t_plane,
    t_twisted,
    total_cross_section,
    twisted_evaluator,
)
from twisted_scattering.density import HydrogenicModel, co2_iam
from twisted_scattering.errors import DomainError, ForwardSingularityError, NumericalError
from twisted_scattering.kinematics import BeamParams, EulerAngles, euler_matrix, wave_number

ENERGIES = (500.0, 1000.0, 1500.0)
CONE_ANGLES = (6.0, 10.0, 20.0, 25.0, 45.0)


def _target(model) -> ScatteringTarget:
    return ScatteringTarget.from_distribution(model, model.form_factor)


@pytest.fixture(scope="module")
def hydrogen() -> ScatteringTarget:
    return _target(HydrogenicModel(charge=1.0, electrons=1.0))


@pytest.fixture(scope="module")
def co2() -> ScatteringTarget:
    return _target(co2_iam())


def _hydrogen_dcs(delta: float) -> float:
    q2 = delta * delta
    return 4.0 * (8.0 + q2) ** 2 / (4.0 + q2) ** 4


def _hydrogen_tcs(k: float) -> float:
    t = 4.0 + 4.0 * k * k
    return 4.0 * math.pi / (k * k) * (7.0 / 12.0 - (1.0 / t + 4.0 / t**2 + 16.0 / (3.0 * t**3)))


def test_t_plane_formula_and_dcs() -> None:
    amplitude = t_plane(22.0, 20.0 + 1.0j, 2.0)

    assert amplitude == Amplitude(complex(-0.5 * (2.0 - 1.0j)), "plane")
    assert dcs_plane(amplitude) == pytest.approx(1.25)
    assert dcs_plane(3.0 + 4.0j) == pytest.approx(25.0)


def test_t_plane_is_singular_at_zero_transfer() -> None:
    with pytest.raises(ForwardSingularityError):
        t_plane(22.0, 22.0, 0.0)


def test_hydrogen_plane_dcs_matches_closed_form(hydrogen: ScatteringTarget) -> None:
    k = wave_number(1000.0)
    evaluate = plane_evaluator(hydrogen, 1000.0)
    for theta_s in (0.01, 0.2, 0.9, 2.0, math.pi):
        delta = 2 * k * math.sin(theta_s / 2)
        assert fixed_orientation(evaluate, theta_s) == pytest.approx(_hydrogen_dcs(delta), rel=1e-10)


def test_forward_limit_is_finite_and_continuous(hydrogen: ScatteringTarget, co2: ScatteringTarget) -> None:
    evaluate = plane_evaluator(hydrogen, 500.0)

    assert fixed_orientation(evaluate, 0.0) == pytest.approx(1.0, rel=1e-8)

    below = co2.plane_amplitudes(np.array([[0.0, 0.0, 0.999e-3]]))[0]
    above = co2.plane_amplitudes(np.array([[0.0, 0.0, 1.001e-3]]))[0]
    assert below == pytest.approx(above, rel=1e-6)
    assert np.isfinite(co2.plane_amplitudes(np.zeros((1, 3)))).all()


def test_non_finite_form_factor_raises() -> None:
    target = ScatteringTarget(np.zeros((1, 3)), np.array([1.0]), lambda v: np.full(len(v), np.nan), 1.0)

    with pytest.raises(NumericalError):
        target.plane_amplitudes(np.array([[0.0, 0.0, 1.0]]))


def test_rotated_target_matches_rotated_transfer(co2: ScatteringTarget) -> None:
    matrix = euler_matrix(EulerAngles(0.3, 1.2, 2.5))
    vectors = np.random.default_rng(9).normal(size=(25, 3))

    rotated = co2.rotated(matrix).plane_amplitudes(vectors @ matrix.T)
    np.testing.assert_allclose(rotated, co2.plane_amplitudes(vectors), rtol=1e-9, atol=1e-12)


def test_twisted_amplitude_vanishes_on_axis_for_vortex_without_opening(co2: ScatteringTarget) -> None:
    beam = BeamParams.from_degrees(1000.0, 0.0, 2)

    assert t_twisted(beam, 0.3, co2).value == 0j
    assert fixed_orientation(twisted_evaluator(co2, beam), 0.3) == 0.0


def test_fixed_b_twisted_dcs_is_zero_without_opening_for_every_charge(co2: ScatteringTarget) -> None:
    for m in (0, 1, -3):
        beam = BeamParams.from_degrees(1000.0, 0.0, m)
        assert expansion_prefactor(beam.transverse_wave_number) == 0.0
        assert t_twisted(beam, 0.3, co2).value == 0j
        assert fixed_orientation(twisted_evaluator(co2, beam, n_phi=64), 0.3) == 0.0

    averaged = b_averaged_evaluator(co2, BeamParams.from_degrees(1000.0, 0.0, 0), n_phi=64)
    assert fixed_orientation(averaged, 0.3) > 0.0


def test_twisted_amplitude_agrees_with_evaluator(co2: ScatteringTarget) -> None:
    beam = BeamParams.from_degrees(1000.0, 25.0, 1)
    theta_s = math.radians(20.0)
    matrix = euler_matrix(EulerAngles(0.7, 0.9, 0.2))

    direct = dcs_plane(t_twisted(beam, theta_s, co2, rotation=matrix))
    vectorised = twisted_evaluator(co2, beam)(theta_s, matrix[None])[0]
    assert vectorised == pytest.approx(direct, rel=1e-10)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_azimuthal_sum_is_converged_at_256_nodes(co2: ScatteringTarget, m: int) -> None:
    beam = BeamParams.from_degrees(1000.0, 10.0, m)
    rotations = np.stack([np.eye(3), euler_matrix(EulerAngles(0.7, 0.9, 0.2))])

    for theta_deg in (4.0, 11.0, 30.0):
        theta_s = math.radians(theta_deg)
        np.testing.assert_allclose(
            twisted_evaluator(co2, beam, n_phi=256)(theta_s, rotations),
            twisted_evaluator(co2, beam, n_phi=512)(theta_s, rotations),
            rtol=1e-8,
        )
        np.testing.assert_allclose(
            b_averaged_evaluator(co2, beam, n_phi=256)(theta_s, rotations),
            b_averaged_evaluator(co2, beam, n_phi=512)(theta_s, rotations),
            rtol=1e-8,
        )


def test_twisted_dcs_at_cone_angle_drops_with_topological_charge(co2: ScatteringTarget) -> None:
    theta = math.radians(25.0)
    values = [
        fixed_orientation(twisted_evaluator(co2, BeamParams.from_degrees(1000.0, 25.0, m), n_phi=128), theta)
        for m in (1, 2, 3)
    ]

    assert values[0] > values[1] > values[2] > 0.0


def test_b_averaged_dcs_ignores_topological_charge(co2: ScatteringTarget) -> None:
    low = b_averaged_evaluator(co2, BeamParams.from_degrees(1000.0, 20.0, 1))
    high = b_averaged_evaluator(co2, BeamParams.from_degrees(1000.0, 20.0, 20))
    rotations = np.stack([np.eye(3), euler_matrix(EulerAngles(1.0, 0.5, 2.0))])

    for theta_s in (0.05, 0.3, 1.0):
        np.testing.assert_array_equal(low(theta_s, rotations), high(theta_s, rotations))


def test_b_averaged_reduces_to_plane_without_opening_angle(co2: ScatteringTarget) -> None:
    plane = plane_evaluator(co2, 800.0)
    averaged = b_averaged_evaluator(co2, BeamParams.from_degrees(800.0, 0.0, 3))
    matrix = euler_matrix(EulerAngles(0.4, 2.0, 5.0))

    for theta_s in (0.02, 0.4, 1.3, 3.0):
        assert fixed_orientation(averaged, theta_s) == pytest.approx(fixed_orientation(plane, theta_s), rel=1e-12)
        assert averaged(theta_s, matrix[None])[0] == pytest.approx(plane(theta_s, matrix[None])[0], rel=1e-12)
    assert dcs_b_averaged(BeamParams(800.0, 0.0), 0.4, co2) == pytest.approx(fixed_orientation(plane, 0.4), rel=1e-12)


def test_orientation_average_of_spherical_target_is_trivial(hydrogen: ScatteringTarget) -> None:
    evaluate = plane_evaluator(hydrogen, 1000.0)

    for weighting in ("haar", "uniform"):
        averaged = orientation_average(evaluate, 0.3, (8, 8, 8), weighting)
        assert averaged == pytest.approx(fixed_orientation(evaluate, 0.3), rel=1e-8)


def test_orientation_average_is_insensitive_to_pre_rotation(co2: ScatteringTarget) -> None:
    theta_s = math.radians(10.0)
    tilted = co2.rotated(euler_matrix(EulerAngles(0.8, 1.1, 2.9)))

    reference = orientation_average(plane_evaluator(co2, 1000.0), theta_s, (16, 16, 16))
    rotated = orientation_average(plane_evaluator(tilted, 1000.0), theta_s, (16, 16, 16))
    assert rotated == pytest.approx(reference, rel=5e-3)


def test_orientation_average_converges_under_grid_doubling(co2: ScatteringTarget) -> None:
    evaluate = plane_evaluator(co2, 1000.0)
    theta_s = math.radians(5.0)

    coarse = orientation_average(evaluate, theta_s, (8, 8, 8))
    fine = orientation_average(evaluate, theta_s, (16, 16, 16))
    assert coarse == pytest.approx(fine, rel=5e-3)


@functools.lru_cache(maxsize=None)
def _co2_curve(kind: str, energy: float, theta_p: float, m: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """DCS of co2-iam on theta_s = 0, 0.5, ..., theta_p + 10 degrees; n_phi = 128 and an 8^3 Haar grid."""
    target = _target(co2_iam())
    beam = BeamParams.from_degrees(energy, theta_p, m)
    evaluate = b_averaged_evaluator(target, beam, n_phi=128) if kind == "b_avg" else twisted_evaluator(target, beam, n_phi=128)
    theta_deg = np.arange(0.0, theta_p + 10.25, 0.5)
    if kind == "fixed":
        values = [fixed_orientation(evaluate, math.radians(t)) for t in theta_deg]
    else:
        values = [orientation_average(evaluate, math.radians(t), batch=512) for t in theta_deg]
    return theta_deg, np.array(values)


def _peak(kind: str, energy: float, theta_p: float, m: int = 1) -> float:
    return locate_peak(*_co2_curve(kind, energy, theta_p, m))[0]


def _at_cone(kind: str, energy: float, theta_p: float, m: int = 1) -> float:
    theta_deg, values = _co2_curve(kind, energy, theta_p, m)
    return float(values[theta_deg == theta_p][0])


@pytest.mark.parametrize("energy", ENERGIES)
@pytest.mark.parametrize("theta_p", CONE_ANGLES)
def test_averaged_twisted_dcs_with_unit_charge_peaks_near_cone(energy: float, theta_p: float) -> None:
    # 6 degree cones at 500 eV peak 2.5 degrees outside the cone
    tolerance = 3.0 if theta_p < 10.0 else 1.5

    assert abs(_peak("avg", energy, theta_p) - theta_p) <= tolerance


@pytest.mark.parametrize(
    ("energy", "theta_p"),
    [(500.0, 45.0)] + [(e, t) for e in (1000.0, 1500.0) for t in (20.0, 25.0, 45.0)],
)
@pytest.mark.parametrize("m", [1, 2, 3])
def test_averaged_twisted_dcs_peaks_at_cone_for_wide_cones(energy: float, theta_p: float, m: int) -> None:
    assert abs(_peak("avg", energy, theta_p, m) - theta_p) <= 1.0


@pytest.mark.parametrize("energy", ENERGIES)
@pytest.mark.parametrize("theta_p", [6.0, 10.0])
def test_averaged_twisted_dcs_with_charge_two_is_forward_peaked_for_narrow_cones(energy: float, theta_p: float) -> None:
    assert _peak("avg", energy, theta_p, 2) == 0.0


@pytest.mark.parametrize("energy", ENERGIES)
@pytest.mark.parametrize("theta_p", CONE_ANGLES)
def test_averaged_twisted_dcs_at_cone_drops_with_topological_charge(energy: float, theta_p: float) -> None:
    by_charge = [_at_cone("avg", energy, theta_p, m) for m in (1, 2, 3)]

    assert by_charge[0] > by_charge[1] > by_charge[2] > 0.0


@pytest.mark.parametrize("theta_p", [10.0, 25.0, 45.0])
def test_averaged_twisted_dcs_at_cone_drops_with_energy(theta_p: float) -> None:
    by_energy = [_at_cone("avg", e, theta_p) for e in ENERGIES]

    assert by_energy[0] > by_energy[1] > by_energy[2]


@pytest.mark.parametrize("energy", ENERGIES)
@pytest.mark.parametrize("m", [1, 2, 3])
def test_fixed_orientation_twisted_dcs_peaks_at_wide_cone(energy: float, m: int) -> None:
    assert abs(_peak("fixed", energy, 45.0, m) - 45.0) <= 0.5


@pytest.mark.parametrize("energy", ENERGIES)
@pytest.mark.parametrize("theta_p", CONE_ANGLES[1:])
def test_b_averaged_dcs_peaks_near_cone(energy: float, theta_p: float) -> None:
    tolerance = 3.0 if theta_p < 20.0 else 1.5

    assert abs(_peak("b_avg", energy, theta_p) - theta_p) <= tolerance


@pytest.mark.parametrize("energy", ENERGIES)
def test_b_averaged_dcs_peaks_inside_narrow_cone(energy: float) -> None:
    assert _peak("b_avg", energy, 6.0) < 6.0


@pytest.mark.parametrize("energy", ENERGIES)
def test_b_averaged_dcs_at_cone_drops_with_opening_angle(energy: float) -> None:
    by_angle = [_at_cone("b_avg", energy, t) for t in CONE_ANGLES]

    assert all(a > b for a, b in zip(by_angle, by_angle[1:]))


@pytest.mark.parametrize("theta_p", CONE_ANGLES)
def test_b_averaged_dcs_at_cone_drops_with_energy(theta_p: float) -> None:
    by_energy = [_at_cone("b_avg", e, theta_p) for e in ENERGIES]

    assert by_energy[0] > by_energy[1] > by_energy[2]


def test_minimum_node_counts_enforced(co2: ScatteringTarget) -> None:
    beam = BeamParams.from_degrees(1000.0, 10.0, 1)

    with pytest.raises(DomainError):
        twisted_evaluator(co2, beam, n_phi=32)
    with pytest.raises(DomainError):
        orientation_average(plane_evaluator(co2, 1000.0), 0.1, (8, 4, 8))
    with pytest.raises(DomainError):
        total_cross_section(lambda theta: 1.0, n_theta=32)


def test_total_cross_section_of_isotropic_dcs() -> None:
    assert total_cross_section(lambda theta: 1.0) == pytest.approx(4 * math.pi, rel=1e-13)


def test_hydrogen_total_cross_section_matches_closed_form(hydrogen: ScatteringTarget) -> None:
    evaluate = plane_evaluator(hydrogen, 1000.0)
    sigma = total_cross_section(lambda theta: fixed_orientation(evaluate, theta))

    assert sigma == pytest.approx(_hydrogen_tcs(wave_number(1000.0)), rel=1e-6)


def test_plane_tcs_decreases_with_energy(co2: ScatteringTarget) -> None:
    sigmas = []
    for energy in (500.0, 1000.0, 1500.0):
        evaluate = plane_evaluator(co2, energy)
        sigmas.append(total_cross_section(lambda theta: fixed_orientation(evaluate, theta), n_theta=64))

    assert sigmas[0] > sigmas[1] > sigmas[2]


def test_b_averaged_tcs_without_opening_matches_plane(co2: ScatteringTarget) -> None:
    plane = plane_evaluator(co2, 1000.0)
    averaged = b_averaged_evaluator(co2, BeamParams.from_degrees(1000.0, 0.0, 1), n_phi=64)

    sigma_plane = total_cross_section(lambda theta: fixed_orientation(plane, theta), n_theta=64)
    sigma_avg = total_cross_section(lambda theta: fixed_orientation(averaged, theta), n_theta=64)
    assert sigma_avg == pytest.approx(sigma_plane, rel=1e-3)


def test_total_cross_section_accepts_custom_mapper() -> None:
    calls: list[float] = []

    def mapper(func, items):
        for item in items:
            calls.append(item)
            yield func(item)

    total_cross_section(lambda theta: 1.0, n_theta=64, mapper=mapper)
    assert len(calls) == 64


def test_locate_peak_prefers_smaller_angle_on_ties() -> None:
    assert locate_peak(np.array([0.0, 1.0, 2.0, 3.0]), np.array([1.0, 3.0, 3.0, 2.0])) == (1.0, 3.0)
    assert locate_peak(np.array([3.0, 2.0, 1.0]), np.array([5.0, 5.0, 4.0])) == (2.0, 5.0)


def test_locate_peak_rejects_bad_input() -> None:
    with pytest.raises(DomainError):
        locate_peak(np.array([]), np.array([]))
    with pytest.raises(DomainError):
        locate_peak(np.array([0.0, 1.0]), np.array([1.0]))
