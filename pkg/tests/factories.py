"""Small run configurations shared by the numeric and CLI tests."""
import json

from app.services.config_loader import build_scenario, load_config_text

SMALL_CONFIG = {
    "system": {"num_subcarriers": 4, "num_blocks": 3},
    "array": {"num_tx": 3, "num_rx": 3, "region_length_lambda": 3.0},
    "solver": {"max_outer_iterations": 2, "max_sca_iterations": 3, "randomization_samples": 10},
    "swarm": {"particles": 2, "iterations": 1, "retention_threshold": 1},
    "pga": {"max_iterations": 5},
    "run": {"horizon_slots": 1, "seed": 7},
}

QOS_OBJECTIVE = {
    "mode": "qos",
    "thresholds": {"theta_rad2": 1e-2, "distance_m2": 10.0, "speed_m2ps2": 100.0},
}


def small_config(**sections):
    payload = json.loads(json.dumps(SMALL_CONFIG))
    for name, values in sections.items():
        payload.setdefault(name, {}).update(values)
    return load_config_text(json.dumps(payload))


def small_scenario(**sections):
    return build_scenario(small_config(**sections))
