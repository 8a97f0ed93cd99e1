import pathlib
import sys

import numpy as np
import pytest

ROOT = pathlib.Path(__file__).resolve().parents[1] / "backend"
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from app.schemas.core import ArrayLayout, SystemConfig, VehicleState  # noqa: E402
from app.services import channel_model  # noqa: E402


@pytest.fixture
def system():
    return SystemConfig(num_subcarriers=4, num_blocks=3)


@pytest.fixture
def layout(system):
    return ArrayLayout.half_wavelength(system.wavelength, 3, 3, 3 * system.wavelength)


@pytest.fixture
def vehicles():
    return [
        VehicleState.from_degrees(9.2, 400.0, 20.0),
        VehicleState.from_degrees(12.0, 410.0, 18.0),
    ]


@pytest.fixture
def assignment():
    return np.array([0, 0, 1, 1])


@pytest.fixture
def beams(system, layout, vehicles, assignment):
    return channel_model.matched_beams(system, layout, vehicles, assignment)
