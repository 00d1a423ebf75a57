import numpy as np
import pytest

from app.models.path import SampledPath
from app.services.simulate import simulate_cox


@pytest.fixture(scope="module")
def payload(true_intensity):
    """推定リクエストの共通部分 (2001 点の正弦経路)"""
    times = np.linspace(0.0, 1.0, 2001)
    values = 14.0 + 16.0 * np.sin(2.0 * np.pi * 40.0 * times)
    path = SampledPath(times=times, values=values, horizon=1.0)
    events = simulate_cox(path, true_intensity, n=1, seed=17)
    return {
        "path": {"t": times.tolist(), "x": values.tolist(), "horizon": 1.0},
        "events": events.event_times.tolist(),
        "interval": [0.0, 28.0],
        "grid": "arithmetic:0.5",
        "h_max": 4.0,
        "eval_grid_size": 101,
    }


@pytest.mark.api
class TestRootEndpoint:
    """ルートエンドポイント"""

    def test_root(self, client):
        response = client.get("/")
        assert response.status_code == 200
        data = response.json()
        assert data["status"] == "running"
        assert "message" in data


@pytest.mark.api
class TestKernelEndpoints:
    """カーネル情報"""

    def test_get_kernel(self, client):
        response = client.get("/kernels/epanechnikov", params={"degree": 1})
        assert response.status_code == 200
        data = response.json()
        assert data["kernel"] == "epanechnikov"
        assert data["inner"] == pytest.approx(413113 / 985600, abs=1e-5)
        assert data["moment_matrix"] == pytest.approx([[1.0, 0.0], [0.0, 0.2]], abs=1e-8)

    def test_unknown_kernel(self, client):
        response = client.get("/kernels/gaussian")
        assert response.status_code == 404

    def test_negative_degree(self, client):
        response = client.get("/kernels/epanechnikov", params={"degree": -1})
        assert response.status_code == 422


@pytest.mark.api
class TestEstimateEndpoint:
    """推定エンドポイント"""

    def test_estimate(self, client, payload):
        response = client.post("/estimate", json=payload)
        assert response.status_code == 200
        data = response.json()
        assert len(data["grid"]) == len(data["qhat"]) == 101
        assert data["n_events"] > 0
        assert data["h_min"] <= data["h_hat"] <= 4.0
        rows = data["criterion"]
        defined = [row for row in rows if row["defined"]]
        assert min(row["criterion"] for row in defined) == pytest.approx(
            next(row["criterion"] for row in defined if row["h"] == data["h_hat"])
        )

    def test_masked_bandwidth_has_null_criterion(self, client, payload):
        # 経路は 1 周期 50 点なので h_min では窓に 1 値しか入らない
        rows = client.post("/estimate", json=payload).json()["criterion"]
        first = rows[0]
        assert first["defined"] is False
        assert first["criterion"] is None
        assert all((row["criterion"] is None) == (not row["defined"]) for row in rows)

    def test_bad_interval(self, client, payload):
        response = client.post("/estimate", json={**payload, "interval": [5.0, 1.0]})
        assert response.status_code == 400

    def test_bad_grid(self, client, payload):
        response = client.post("/estimate", json={**payload, "grid": "geometric:2"})
        assert response.status_code == 400

    def test_unknown_kernel(self, client, payload):
        response = client.post("/estimate", json={**payload, "kernel": "gaussian"})
        assert response.status_code == 400

    def test_interval_off_the_path(self, client, payload):
        response = client.post(
            "/estimate", json={**payload, "interval": [35.0, 45.0], "grid_count": 100.0}
        )
        assert response.status_code == 422

    def test_missing_path(self, client):
        response = client.post("/estimate", json={"interval": [0.0, 1.0]})
        assert response.status_code == 422


@pytest.mark.api
class TestGofEndpoint:
    """適合度検定エンドポイント"""

    def test_constant_rejected(self, client, payload):
        body = {**payload, "family": "const", "h": 2.0}
        response = client.post("/test", json=body)
        assert response.status_code == 200
        report = response.json()
        assert report["family"] == "constant"
        assert report["reject"] is True
        assert report["p_value"] <= report["level"]

    def test_invalid_gamma(self, client, payload):
        response = client.post("/test", json={**payload, "gamma": 0.0})
        assert response.status_code == 422


@pytest.mark.api
class TestSimulateEndpoint:
    """シミュレーションエンドポイント"""

    def test_simulate(self, client):
        body = {"run": {"T_hours": 200, "seed": 1}, "seed": 5}
        first = client.post("/simulate", json=body).json()
        second = client.post("/simulate", json=body).json()
        assert len(first["path"]["t"]) == 201
        assert first == second
        assert first["prices"] is None

    def test_simulate_with_prices(self, client):
        body = {"run": {"T_hours": 100}, "spike": {"beta": 0.5}}
        response = client.post("/simulate", json=body)
        assert response.status_code == 200
        assert len(response.json()["prices"]["x"]) == 101

    def test_unknown_field(self, client):
        response = client.post("/simulate", json={"weather": {}})
        assert response.status_code == 422
