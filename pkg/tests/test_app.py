import pytest

from components.metrics_analysis import GenerationReport, write_generation_reports


def _report(generation, best):
    return GenerationReport(generation=generation, max_f_e=best, mean_f_e=best / 4, min_f_e=0.0,
                            max_f_i=2.0, mean_f_i=1.0, best_so_far=best, coverage_percent=1.5 * (generation + 1),
                            buffer_size=50, icm_loss=float("nan"), evaluations=4 * (generation + 1),
                            wall_clock_ms=3.25)


@pytest.fixture
def registered(tmp_path):
    from app import create_app
    from run_registry import store_run_record

    app = create_app(tmp_path / "runs.db")
    app.config["TESTING"] = True
    run_dir = tmp_path / "curiosity_es_snake_s2"
    run_dir.mkdir()
    reports = [_report(0, 0.0), _report(1, 0.4)]
    write_generation_reports(run_dir / "generations.csv", reports)
    (run_dir / "run.log").write_text("gen 0\n")
    (run_dir / "policy.bin").write_bytes(b"\x00" * 16)
    (tmp_path / "secret.csv").write_text("x\n")
    run = store_run_record(run_dir, {"algorithm": "curiosity_es", "environment": "snake", "seed": 2},
                           reports)
    return app.test_client(), run.id


def test_health(registered):
    client, _ = registered
    response = client.get("/api/health")
    assert response.status_code == 200
    assert response.get_json()["status"] == "ok"


def test_run_list(registered):
    client, run_id = registered
    runs = client.get("/api/runs").get_json()["runs"]
    assert [r["id"] for r in runs] == [run_id]
    assert runs[0]["best_reward"] == 0.4
    assert runs[0]["generations"] == 2


def test_run_detail(registered):
    client, run_id = registered
    payload = client.get(f"/api/runs/{run_id}").get_json()["run"]
    assert payload["algorithm"] == "curiosity_es" and payload["seed"] == 2
    assert [r["generation"] for r in payload["reports"]] == [0, 1]
    assert payload["reports"][1]["icm_loss"] is None
    assert payload["reports"][0]["wall_clock_ms"] == 3.25
    assert payload["final_coverage"] == 3.0
    assert payload["artifacts"] == ["generations.csv", "run.log"]


def test_unknown_run(registered):
    client, _ = registered
    response = client.get("/api/runs/999")
    assert response.status_code == 404
    assert response.get_json()["message"] == "Run not found"


def test_download_report(registered):
    client, run_id = registered
    response = client.get(f"/api/runs/{run_id}/download")
    assert response.status_code == 200
    assert response.mimetype == "application/json"
    disposition = response.headers["Content-Disposition"]
    assert f"curiosity_es-snake-s2-run{run_id}-report.json" in disposition


def test_artifact_served(registered):
    client, run_id = registered
    response = client.get(f"/api/runs/{run_id}/artifacts/generations.csv")
    assert response.status_code == 200
    assert response.data.decode().startswith("generation,max_f_e")


@pytest.mark.parametrize("name", ["policy.bin", "missing.csv", "..%2Fsecret.csv", "../secret.csv"])
def test_artifact_outside_whitelist_is_hidden(registered, name):
    client, run_id = registered
    assert client.get(f"/api/runs/{run_id}/artifacts/{name}").status_code == 404
