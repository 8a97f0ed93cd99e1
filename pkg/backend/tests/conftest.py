import os
import tempfile
from pathlib import Path

import pytest

LEDGER_DIR = Path(tempfile.mkdtemp(prefix="ma-isac-ledger-"))
os.environ["DATABASE_URL"] = f"sqlite:///{LEDGER_DIR / 'runs.db'}"

from app.core.config import get_settings  # noqa: E402
from app.db.session import get_engine  # noqa: E402

get_settings.cache_clear()
get_engine.cache_clear()


@pytest.fixture
def small_payload():
  return {
    "system": {"num_subcarriers": 4, "num_blocks": 3},
    "array": {"num_tx": 3, "num_rx": 3, "region_length_lambda": 3.0, "movement": "none"},
    "solver": {"max_outer_iterations": 2, "max_sca_iterations": 3, "randomization_samples": 10},
    "run": {"seed": 7},
  }
