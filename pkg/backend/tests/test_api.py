from fastapi.testclient import TestClient

from app.main import app


def test_health_endpoint():
  with TestClient(app) as client:
    response = client.get("/health")
  assert response.status_code == 200
  assert response.json() == {"status": "ok"}


def test_bounds_for_each_vehicle(small_payload):
  with TestClient(app) as client:
    response = client.post("/bounds", json={"config": small_payload})
  assert response.status_code == 200
  body = response.json()
  assert len(body["config_hash"]) == 16
  assert [item["vehicle"] for item in body["vehicles"]] == [0, 1]
  for item in body["vehicles"]:
    assert 0 < item["lpcrlb_theta"] <= item["lcrlb_theta"]
    assert item["lpcrlb_d"] <= item["lcrlb_d"]


def test_bounds_reject_an_invalid_angle(small_payload):
  small_payload["vehicles"] = [{"theta_deg": 200, "distance_m": 400, "speed_mps": 20}]
  with TestClient(app) as client:
    response = client.post("/bounds", json={"config": small_payload})
  assert response.status_code == 422


def test_bounds_report_unit_errors_as_bad_requests(small_payload):
  small_payload["system"]["symbol_duration_s"] = 5e-6
  with TestClient(app) as client:
    response = client.post("/bounds", json={"config": small_payload})
  assert response.status_code == 400
  assert "symbol_duration_s" in response.json()["detail"]


def test_weighted_run_is_recorded_and_notified(small_payload):
  with TestClient(app) as client:
    response = client.post("/optimize/weighted", json={"config": small_payload, "rho": 0.7})
    assert response.status_code == 200
    body = response.json()
    runs = client.get("/runs", params={"command": "optimize-weighted"}).json()
    notifications = client.get("/notifications").json()
  assert body["sum_rate_bits"] > 0
  assert len(body["objective_trace"]) == body["iterations"] + 1
  assert len(body["aleph"]) == 3
  assert body["run_id"] in [row["id"] for row in runs]
  assert any(item["command"] == "optimize-weighted" and item["status"] == "completed" for item in notifications)


def test_runs_limit_is_validated():
  with TestClient(app) as client:
    response = client.get("/runs", params={"limit": 0})
  assert response.status_code == 422
