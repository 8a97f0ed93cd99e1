import numpy as np

from app.schemas.core import vehicles_from_array, vehicles_to_array
from app.schemas.tracking import MotionModel, TrackingConfig, TrackState
from app.services import channel_model
from app.services.fisher_service import pcrlb_diag, prior_fim
from app.services.kinematics import propagate_state
from app.services.linalg import spd_inverse
from app.services.tracking_service import (
    direct_covariance_update,
    ekf_step,
    initial_track,
    measurement_jacobian,
    predict_track,
)


def _track(vehicles):
    states = vehicles_to_array(vehicles)
    return TrackState(estimate=states, covariance=TrackingConfig().initial_covariance(len(vehicles)))


def _scaled(matrix, reference):
    scale = np.sqrt(np.diag(reference))
    return matrix / np.outer(scale, scale)


def test_information_update_equals_textbook_update(system, layout, vehicles, beams):
    motion = MotionModel()
    track = _track(vehicles)
    predicted, prior = predict_track(track, motion)
    sensitivity = measurement_jacobian(system, layout, beams, vehicles_from_array(predicted))
    variance = np.repeat(channel_model.echo_noise_variance(system, beams), system.num_blocks * layout.num_rx)

    echo = channel_model.synth_echo(system, layout, beams, vehicles_from_array(predicted), 5)
    updated = ekf_step(track, echo, system, layout, beams, motion)
    direct = direct_covariance_update(spd_inverse(prior), sensitivity, variance)
    np.testing.assert_allclose(
        _scaled(direct, updated.covariance), _scaled(updated.covariance, updated.covariance),
        rtol=1e-6, atol=1e-8,
    )


def test_posterior_covariance_is_the_pcrlb(system, layout, vehicles, beams):
    motion = MotionModel()
    track = _track(vehicles)
    echo = channel_model.synth_echo(system, layout, beams, vehicles, 1)
    updated = ekf_step(track, echo, system, layout, beams, motion)
    bound = pcrlb_diag(updated.observed_information, updated.prior_information)
    np.testing.assert_allclose(bound.reshape(-1), np.diag(updated.covariance), rtol=1e-9)
    assert np.all(np.diag(updated.covariance) <= np.diag(spd_inverse(updated.prior_information)) * (1 + 1e-9))


def test_noise_free_echo_at_the_prediction_leaves_it_unchanged(system, layout, vehicles, beams):
    motion = MotionModel()
    track = _track(vehicles)
    predicted = propagate_state(track.estimate, motion)
    echo = channel_model.synth_echo(system, layout, beams, vehicles_from_array(predicted), None, noise=False)
    updated = ekf_step(track, echo, system, layout, beams, motion)
    np.testing.assert_allclose(updated.estimate, predicted, rtol=1e-12)
    assert updated.slot == 1


def test_prior_from_track_matches_prediction(vehicles):
    motion = MotionModel()
    track = _track(vehicles)
    _, prior = predict_track(track, motion)
    np.testing.assert_allclose(prior_fim(track, motion), prior)


def test_initial_track_is_seeded():
    states = np.array([[0.16, 400.0, 20.0]])
    first = initial_track(states, TrackingConfig(), np.random.default_rng([0, 0, 2]))
    second = initial_track(states, TrackingConfig(), np.random.default_rng([0, 0, 2]))
    np.testing.assert_array_equal(first.estimate, second.estimate)
    assert first.covariance[1, 1] == TrackingConfig().init_sigma_distance ** 2
