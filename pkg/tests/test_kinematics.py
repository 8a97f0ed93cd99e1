import numpy as np
import pytest

from app.core.errors import DomainError
from app.schemas.tracking import MotionModel
from app.services.kinematics import motion_jacobian, propagate_exact, propagate_state

STATES = np.array([[0.16, 400.0, 20.0], [0.21, 410.0, 18.0]])


def test_linearised_step_tracks_exact_geometry():
    motion = MotionModel()
    linear = propagate_state(STATES, motion)
    exact = propagate_exact(STATES, motion)
    np.testing.assert_allclose(linear[:, 0], exact[:, 0], atol=1e-5)
    np.testing.assert_allclose(linear[:, 1], exact[:, 1], atol=1e-3)
    np.testing.assert_allclose(linear[:, 2], exact[:, 2])


def test_noiseless_step_uses_mean_speed_increment():
    motion = MotionModel(speed_increment_min=0.1, speed_increment_max=0.3)
    result = propagate_state(STATES, motion)
    np.testing.assert_allclose(result[:, 2], STATES[:, 2] + 0.2)


def test_motion_jacobian_matches_finite_differences():
    motion = MotionModel()
    jacobian = motion_jacobian(STATES, motion)
    flat = STATES.reshape(-1)
    steps = np.tile([1e-5, 1e-3, 1e-3], 2)
    numeric = np.zeros_like(jacobian)
    for index, step in enumerate(steps):
        plus, minus = flat.copy(), flat.copy()
        plus[index] += step
        minus[index] -= step
        numeric[:, index] = (
            propagate_state(plus, motion, speed_increment=0.0).reshape(-1)
            - propagate_state(minus, motion, speed_increment=0.0).reshape(-1)
        ) / (2 * step)
    np.testing.assert_allclose(numeric, jacobian, rtol=1e-6, atol=1e-9)


def test_random_steps_are_reproducible():
    motion = MotionModel()
    first = propagate_state(STATES, motion, rng=np.random.default_rng([3, 1, 0]))
    second = propagate_state(STATES, motion, rng=np.random.default_rng([3, 1, 0]))
    np.testing.assert_array_equal(first, second)


def test_vehicle_passing_the_rsu_is_a_domain_error():
    with pytest.raises(DomainError):
        propagate_state(np.array([[0.05, 0.1, 20.0]]), MotionModel())


def test_process_covariance_folds_in_speed_increment():
    motion = MotionModel(sigma_speed=0.1, speed_increment_min=-0.2, speed_increment_max=0.2)
    covariance = motion.process_covariance(2)
    assert covariance.shape == (6, 6)
    assert covariance[2, 2] == pytest.approx(0.01 + 0.4 ** 2 / 12)
    assert covariance[5, 5] == covariance[2, 2]
