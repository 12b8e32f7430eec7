import pytest
from fastapi.testclient import TestClient

from icvec import __version__
from icvec.service import create_app


@pytest.fixture(scope="module")
def client():
    with TestClient(create_app()) as c:
        yield c


def tiny_chanest():
    return {
        "link": {"num_operators": 2, "lines_per_operator": 3,
                 "training_length": 24, "seed": 7},
        "snr_db": [15.0],
        "alpha": [0.5],
        "trials": 3,
        "iterations": 3,
    }


class TestEndpoints:
    def test_health(self, client):
        resp = client.get("/health")
        assert resp.status_code == 200
        assert resp.json() == {"status": "ok", "version": __version__}

    def test_presets_listing(self, client):
        resp = client.get("/presets")
        assert resp.status_code == 200
        names = set(resp.json())
        assert {"fig5-k2", "fig6", "fig7", "table1", "convergence"} <= names

    def test_single_preset(self, client):
        resp = client.get("/presets/fig7")
        assert resp.status_code == 200
        assert resp.json()["experiment"] == "mud"

    def test_missing_preset_404(self, client):
        assert client.get("/presets/fig99").status_code == 404

    def test_run_chanest(self, client):
        resp = client.post("/run/chanest", json=tiny_chanest())
        assert resp.status_code == 200
        body = resp.json()
        assert body["experiment"] == "chanest"
        assert "chanest_snr15_alpha0.5.csv" in body["files"]
        csv = body["files"]["chanest_snr15_alpha0.5.csv"]
        assert csv.startswith("iteration,mse_self_db")

    def test_experiment_field_optional_in_body(self, client):
        # the path names the experiment; the body may omit the selector
        resp = client.post("/run/chanest", json=tiny_chanest())
        assert resp.status_code == 200

    def test_mismatched_experiment_rejected(self, client):
        doc = tiny_chanest()
        doc["experiment"] = "mud"
        resp = client.post("/run/chanest", json=doc)
        assert resp.status_code == 422

    def test_unknown_experiment_404(self, client):
        assert client.post("/run/everything", json={}).status_code == 404

    def test_invalid_scenario_422(self, client):
        doc = tiny_chanest()
        doc["unknown_key"] = 1
        resp = client.post("/run/chanest", json=doc)
        assert resp.status_code == 422

    def test_deterministic_across_calls(self, client):
        a = client.post("/run/chanest", json=tiny_chanest()).json()
        b = client.post("/run/chanest", json=tiny_chanest()).json()
        assert a["files"] == b["files"]

    def test_threads_query_param(self, client):
        a = client.post("/run/chanest", json=tiny_chanest(),
                        params={"threads": 2}).json()
        b = client.post("/run/chanest", json=tiny_chanest()).json()
        assert a["files"] == b["files"]

    def test_run_convergence(self, client):
        doc = {
            "link": {"num_operators": 2, "lines_per_operator": 3,
                     "training_length": 24, "seed": 8},
            "alpha": [0.5],
            "seeds": 4,
            "equivalence": {"enabled": False},
        }
        resp = client.post("/run/convergence", json=doc)
        assert resp.status_code == 200
        assert "convergence_rho.csv" in resp.json()["files"]
