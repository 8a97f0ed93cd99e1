import math

import numpy as np
import pytest

from app.core.errors import DomainError
from app.services import channel_model


def test_steering_is_unit_modulus_and_flat_at_broadside(system, layout):
    vector = channel_model.steering(layout.tx_positions, 0.3, system.wavelength)
    np.testing.assert_allclose(np.abs(vector), 1.0)
    broadside = channel_model.steering(layout.tx_positions, math.pi / 2, system.wavelength)
    np.testing.assert_allclose(broadside, np.ones(layout.num_tx), atol=1e-12)


@pytest.mark.parametrize("theta", [0.0, math.pi, -0.1, float("nan")])
def test_steering_rejects_angles_outside_open_interval(system, layout, theta):
    with pytest.raises(DomainError):
        channel_model.steering(layout.tx_positions, theta, system.wavelength)


def test_path_loss_equals_reference_at_reference_distance(system):
    path_loss, attenuation, gamma = channel_model.channel_gains(system, system.ref_distance)
    assert path_loss == pytest.approx(system.ref_path_loss)
    assert gamma == pytest.approx(attenuation * system.useful_duration)


def test_matched_beam_collects_full_array_gain(system, layout, vehicles, beams):
    gains = channel_model.effective_gains(system, layout, beams, vehicles)
    expected = channel_model.rate_coefficients(system, vehicles, beams.assignment) * layout.num_tx ** 2
    np.testing.assert_allclose(gains, expected, rtol=1e-10)


def test_sum_rate_adds_subcarrier_rates(system, layout, vehicles, beams):
    gains = channel_model.effective_gains(system, layout, beams, vehicles)
    expected = np.sum(np.log2(1.0 + gains * beams.powers))
    assert channel_model.sum_rate(system, layout, beams, vehicles) == pytest.approx(expected)
    rates = channel_model.subcarrier_rates(system, layout, beams, vehicles)
    assert rates.shape == (system.num_subcarriers,)


def test_synth_echo_is_deterministic_per_seed(system, layout, vehicles, beams):
    first = channel_model.synth_echo(system, layout, beams, vehicles, 11)
    second = channel_model.synth_echo(system, layout, beams, vehicles, 11)
    other = channel_model.synth_echo(system, layout, beams, vehicles, 12)
    np.testing.assert_array_equal(first.samples, second.samples)
    assert not np.allclose(first.samples, other.samples)
    assert first.samples.shape == (system.num_subcarriers, system.num_blocks, layout.num_rx)


def test_noise_free_echo_matches_model(system, layout, vehicles, beams):
    echo = channel_model.synth_echo(system, layout, beams, vehicles, 0, noise=False)
    np.testing.assert_array_equal(echo.samples, channel_model.noiseless_echo(system, layout, beams, vehicles))
    np.testing.assert_allclose(
        echo.noise_variance, beams.powers * system.radar_noise_psd * system.useful_duration
    )


def test_echo_jacobian_matches_finite_differences(system, layout, vehicles, beams):
    gammas = [channel_model.echo_parameters(system, vehicle).gamma for vehicle in vehicles]
    base = channel_model.observables(system, vehicles)
    jacobian = channel_model.echo_jacobian(system, layout, beams, vehicles)
    steps = np.array([1e-7, 1e-14, 1e-3])
    for k in range(len(vehicles)):
        for index, step in enumerate(steps):
            plus, minus = base.copy(), base.copy()
            plus[k, index] += step
            minus[k, index] -= step
            numeric = (
                channel_model.noiseless_echo_from_observables(system, layout, beams, gammas, plus)
                - channel_model.noiseless_echo_from_observables(system, layout, beams, gammas, minus)
            ).reshape(-1) / (2 * step)
            column = jacobian[:, 3 * k + index]
            scale = np.abs(column).max()
            np.testing.assert_allclose(numeric, column, rtol=1e-4, atol=1e-5 * scale)


def test_noise_free_echo_superposes_over_vehicles(system, layout, vehicles, beams):
    joint = channel_model.synth_echo(system, layout, beams, vehicles, noise=False).samples
    separate = sum(
        channel_model.synth_echo(system, layout, beams, [vehicle], noise=False).samples for vehicle in vehicles
    )
    np.testing.assert_allclose(joint, separate, rtol=1e-12, atol=1e-12 * np.abs(joint).max())


def test_echo_noise_is_circular_with_the_stated_variance(system, layout, vehicles, beams):
    clean = channel_model.noiseless_echo(system, layout, beams, vehicles)
    rng = np.random.default_rng(3)
    draws = np.stack([
        channel_model.synth_echo(system, layout, beams, vehicles, rng).samples - clean for _ in range(400)
    ])
    residual = draws.transpose(1, 0, 2, 3).reshape(system.num_subcarriers, -1)
    variance = channel_model.echo_noise_variance(system, beams)
    np.testing.assert_allclose(np.mean(np.abs(residual) ** 2, axis=1), variance, rtol=0.1)
    assert np.all(np.abs(np.mean(residual ** 2, axis=1)) < 0.1 * variance)
    assert np.all(np.abs(np.mean(residual, axis=1)) < 0.1 * np.sqrt(variance))
