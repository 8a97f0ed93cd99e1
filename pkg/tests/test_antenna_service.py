import numpy as np
import pytest

from app.schemas.optimization import AlephPolicy, PgaConfig
from app.services import channel_model
from app.services.antenna_service import (
    TrigForms,
    grad_rx,
    grad_tx,
    pga_rx,
    pga_tx,
    project_ordered_exact,
    project_rx,
    project_tx,
    rx_objective,
    tx_objective,
    xi_terms,
)
from app.services.objective import aleph_factors, information_matrices

BOUNDS = (0.0, 2.0)
SPACING = 0.5


def _feasible(positions, bounds=BOUNDS, spacing=SPACING):
    low, high = bounds
    return (
        positions[0] >= low - 1e-12
        and positions[-1] <= high + 1e-12
        and np.all(np.diff(positions) >= spacing - 1e-12)
    )


@pytest.mark.parametrize("project", [project_tx, project_rx, project_ordered_exact])
def test_projections_return_feasible_layouts(project):
    for candidate in ([1.0, 1.1, 1.2], [-3.0, 5.0, 0.4], [2.0, 2.0, 2.0], [0.0, 0.5, 1.0]):
        assert _feasible(project(candidate, BOUNDS, SPACING))


@pytest.mark.parametrize("project", [project_tx, project_rx, project_ordered_exact])
def test_projections_keep_feasible_layouts(project):
    layout = np.array([0.1, 0.9, 1.7])
    np.testing.assert_allclose(project(layout, BOUNDS, SPACING), layout)


def test_exact_projection_is_never_farther_than_the_clamp():
    rng = np.random.default_rng(2)
    for _ in range(20):
        candidate = rng.uniform(-1.0, 3.0, size=4)
        bounds = (0.0, 3.0)
        exact = project_ordered_exact(candidate, bounds, SPACING)
        clamped = project_tx(candidate, bounds, SPACING)
        assert np.linalg.norm(exact - candidate) <= np.linalg.norm(clamped - candidate) + 1e-12


def test_region_too_short_is_rejected():
    with pytest.raises(ValueError):
        project_tx([0.0, 0.1, 0.2], (0.0, 0.5), SPACING)


def test_transmit_gradient_matches_finite_differences(system, layout, vehicles, beams):
    aleph = aleph_factors(AlephPolicy.UNIT, information_matrices(system, layout, beams, vehicles))
    analytic = grad_tx(system, layout, beams, vehicles, 0.5, aleph)
    step = 1e-6 * system.wavelength
    numeric = np.zeros_like(analytic)
    for index in range(layout.num_tx):
        plus, minus = layout.tx_positions.copy(), layout.tx_positions.copy()
        plus[index] += step
        minus[index] -= step
        numeric[index] = (
            tx_objective(system, layout.with_tx(plus, checked=False), beams, vehicles, 0.5, aleph)
            - tx_objective(system, layout.with_tx(minus, checked=False), beams, vehicles, 0.5, aleph)
        ) / (2 * step)
    np.testing.assert_allclose(numeric, analytic, rtol=1e-4, atol=1e-6 * np.abs(analytic).max())


def test_receive_gradient_matches_finite_differences(system, layout, vehicles, beams):
    analytic = grad_rx(system, layout, beams, vehicles)
    step = 1e-6 * system.wavelength
    numeric = np.zeros_like(analytic)
    for index in range(layout.num_rx):
        plus, minus = layout.rx_positions.copy(), layout.rx_positions.copy()
        plus[index] += step
        minus[index] -= step
        numeric[index] = (
            rx_objective(system, layout.with_rx(plus, checked=False), beams, vehicles)
            - rx_objective(system, layout.with_rx(minus, checked=False), beams, vehicles)
        ) / (2 * step)
    np.testing.assert_allclose(numeric, analytic, rtol=1e-4, atol=1e-6 * np.abs(analytic).max())


def test_transmit_ascent_is_monotone_and_feasible(system, layout, vehicles, beams):
    aleph = aleph_factors(AlephPolicy.UNIT, information_matrices(system, layout, beams, vehicles))
    result = pga_tx(system, layout, beams, vehicles, 0.5, aleph, PgaConfig(max_iterations=10))
    assert all(later > earlier for earlier, later in zip(result.objective_trace, result.objective_trace[1:]))
    assert _feasible(result.positions, layout.tx_bounds, layout.min_spacing)
    layout.with_tx(result.positions)


def test_receive_ascent_is_monotone_and_feasible(system, layout, vehicles, beams):
    result = pga_rx(system, layout, beams, vehicles, PgaConfig(max_iterations=10, exact_projection=True))
    assert all(later > earlier for earlier, later in zip(result.objective_trace, result.objective_trace[1:]))
    assert _feasible(result.positions, layout.rx_bounds, layout.min_spacing)
    assert result.objective_trace[-1] >= rx_objective(system, layout, beams, vehicles)


def test_real_forms_reproduce_the_complex_beam_products():
    rng = np.random.default_rng(5)
    wavelength = 0.01
    for _ in range(200):
        count = int(rng.integers(2, 9))
        positions = np.sort(rng.uniform(0.0, 10 * wavelength, size=count))
        theta = float(rng.uniform(0.05, np.pi - 0.05))
        beam = rng.standard_normal(count) + 1j * rng.standard_normal(count)
        trig = TrigForms.build(positions, theta, wavelength, beam)
        xi, xi1, xi2, xi3 = xi_terms(trig, positions)

        transmit = channel_model.steering(positions, theta, wavelength)
        response = transmit.conj() @ beam
        weighted = transmit.conj() @ (positions * beam)
        envelope = np.sum(np.abs(beam)) ** 2
        assert abs(xi - abs(response) ** 2) <= 1e-10 * envelope
        assert abs(xi1 - abs(weighted) ** 2) <= 1e-10 * envelope * positions.max() ** 2
        assert abs(xi2 - weighted.conjugate() * response) <= 1e-10 * envelope * positions.max()
        assert xi3 == xi2.conjugate()


def test_trig_forms_split_into_symmetric_and_antisymmetric_parts():
    rng = np.random.default_rng(6)
    positions = np.array([0.0, 0.004, 0.011, 0.02])
    trig = TrigForms.build(positions, 0.7, 0.01, rng.standard_normal(4) + 1j * rng.standard_normal(4))
    np.testing.assert_array_equal(trig.U.T, -trig.U)
    np.testing.assert_array_equal(trig.D.T, -trig.D)
    np.testing.assert_array_equal(trig.A, trig.A.T)
    np.testing.assert_array_equal(trig.T, trig.T.T)


def test_literal_transmit_anchor_packs_the_array_against_the_far_edge():
    packed = project_tx([0.1, 0.2, 0.3], BOUNDS, SPACING, literal_anchor=True)
    np.testing.assert_allclose(packed, [1.0, 1.5, 2.0])
    assert _feasible(packed)


def test_literal_receive_envelope_stays_feasible():
    for candidate in ([1.0, 1.1, 1.2], [-3.0, 5.0, 0.4], [0.0, 0.0, 0.0]):
        assert _feasible(project_rx(candidate, BOUNDS, SPACING, literal_anchor=True))


def test_transmit_ascent_with_literal_anchor_keeps_a_valid_layout(system, layout, vehicles, beams):
    aleph = aleph_factors(AlephPolicy.UNIT, information_matrices(system, layout, beams, vehicles))
    config = PgaConfig(max_iterations=3, literal_anchor=True)
    result = pga_tx(system, layout, beams, vehicles, 0.5, aleph, config)
    layout.with_tx(result.positions)
    assert result.objective_trace[-1] >= result.objective_trace[0]
