import numpy as np
import pytest
from fastapi.testclient import TestClient

from kinrom.service import app

from .test_config import micro_config


@pytest.fixture(scope="module")
def client():
    return TestClient(app)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    return tmp_path_factory.mktemp("svc")


def _io_block(root, name):
    return {
        "workdir": str(root / name),
    }


class TestBasics:
    def test_health(self, client):
        body = client.get("/health").json()
        assert body["status"] == "ok"

    def test_presets_listed(self, client):
        assert set(client.get("/presets").json()["presets"]) == {"example1", "example2"}

    def test_config_schema_served(self, client):
        schema = client.get("/config/schema").json()
        assert "properties" in schema and "rom" in schema["properties"]

    def test_bad_config_maps_to_config_error(self, client):
        cfg = micro_config()
        cfg["rom"]["nope"] = 1
        resp = client.post("/snapshots", json={"config": cfg})
        assert resp.status_code == 400
        assert resp.json()["error"]["kind"] == "config"
        assert "nope" in resp.json()["error"]["message"]

    def test_config_and_preset_mutually_exclusive(self, client):
        resp = client.post("/snapshots", json={"config": micro_config(), "preset": "example1"})
        assert resp.status_code == 400

    def test_missing_bundle_is_io_error(self, client, workspace):
        resp = client.post(
            "/predict",
            json={"bundle_dir": str(workspace / "nodir"), "t": 0.0625, "mu": 1.0},
        )
        assert resp.status_code in (404, 409)
        assert resp.json()["error"]["kind"] == "io"


@pytest.fixture(scope="module")
def built(client, workspace):
    cfg = micro_config()
    cfg["io"] = _io_block(workspace, "flow")
    snap = client.post("/snapshots", json={"config": cfg}).json()
    build = client.post("/build", json={"config": cfg}).json()
    return cfg, snap, build


@pytest.fixture(scope="module")
def snapshot_cfg(client, workspace):
    cfg = micro_config()
    cfg["io"] = _io_block(workspace, "methods")
    client.post("/snapshots", json={"config": cfg})
    return cfg


class TestPipelineFlow:
    def test_snapshot_dimensions(self, built):
        _, snap, _ = built
        assert snap["n_dofs"] == 4 * 16
        assert snap["n_snapshots"] == 8 * 5

    def test_build_single_interval_pod(self, built):
        _, _, build = built
        assert build["method"] == "pod"
        assert build["kinds"] == ["pod"]
        assert build["boundaries"][0] == 0.0
        assert build["boundaries"][-1] == pytest.approx(0.5)

    def test_predict_roundtrip(self, built, client):
        cfg, _, build = built
        resp = client.post(
            "/predict",
            json={
                "bundle_dir": build["bundle_dir"],
                "t": 0.25,
                "mu": 1.75,
                "include_state": True,
            },
        )
        assert resp.status_code == 200
        body = resp.json()
        assert body["interval"] == 0
        assert len(body["state"]) == 64
        assert len(body["rho"]) == 16
        assert np.isfinite(body["rho"]).all()

    def test_predict_off_grid_time_rejected(self, built, client):
        _, _, build = built
        resp = client.post(
            "/predict", json={"bundle_dir": build["bundle_dir"], "t": 0.2, "mu": 1.0}
        )
        assert resp.status_code == 400
        assert resp.json()["error"]["kind"] == "config"

    def test_evaluate_and_report(self, built, client, workspace):
        cfg, _, build = built
        resp = client.post("/evaluate", json={"config": cfg})
        assert resp.status_code == 200, resp.text
        body = resp.json()
        assert body["n_cases"] == 2 * 8
        assert body["e_f"] <= 1e-5  # linear-in-mu problem, spline is exact
        rep = client.post(
            "/report",
            json={"rows_csv": body["rows_csv"], "out_dir": str(workspace / "plots")},
        )
        assert rep.status_code == 200
        files = rep.json()["files"]
        assert files and files[0].endswith(".svg")
        svg = open(files[0]).read()
        assert svg.startswith("<svg") and "polyline" in svg

    def test_evaluate_hash_mismatch_refused_then_forced(self, built, client, workspace):
        cfg, _, build = built
        other = micro_config()
        other["sampling"]["training_params"] = [1.0, 2.0, 3.0]
        other["io"] = _io_block(workspace, "other")
        client.post("/snapshots", json={"config": other}).raise_for_status
        resp = client.post(
            "/evaluate",
            json={
                "config": cfg,
                "bundle_dir": build["bundle_dir"],
                "snapshots_path": str((workspace / "other") / "snapshots.bin"),
            },
        )
        assert resp.status_code == 409
        assert resp.json()["error"]["kind"] == "io"
        forced = client.post(
            "/evaluate",
            json={
                "config": cfg,
                "bundle_dir": build["bundle_dir"],
                "snapshots_path": str((workspace / "other") / "snapshots.bin"),
                "force": True,
            },
        )
        assert forced.status_code == 200


class TestMethods:
    def test_uniform_build(self, snapshot_cfg, client, workspace):
        resp = client.post(
            "/build",
            json={
                "config": snapshot_cfg,
                "overrides": {"method": "uniform", "out": str(workspace / "methods/uni")},
            },
        )
        body = resp.json()
        assert body["method"] == "uniform-2"
        assert len(body["kinds"]) == 2

    def test_adaptive_build_reports_sweeps(self, snapshot_cfg, client, workspace):
        resp = client.post(
            "/build",
            json={
                "config": snapshot_cfg,
                "overrides": {"method": "adaptive", "out": str(workspace / "methods/adp")},
            },
        )
        body = resp.json()
        assert body["method"] == "adaptive"
        assert body["sweep_history"]

    def test_hybrid_build_with_forced_autoencoder(self, snapshot_cfg, client, workspace):
        cfg = dict(snapshot_cfg)
        cfg["rom"] = {**snapshot_cfg["rom"], "method": "hybrid", "r_max": 1, "r_min": 0,
                      "tau_min": 10.0}
        resp = client.post(
            "/build",
            json={"config": cfg, "overrides": {"out": str(workspace / "methods/hyb")}},
        )
        assert resp.status_code == 200, resp.text
        body = resp.json()
        assert body["method"] == "hybrid"
        assert "ae" in body["kinds"]
        pred = client.post(
            "/predict", json={"bundle_dir": body["bundle_dir"], "t": 0.0625, "mu": 1.6}
        )
        assert pred.status_code == 200
        assert np.isfinite(pred.json()["rho"]).all()
