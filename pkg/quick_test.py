#!/usr/bin/env python3
"""
クイックテストスクリプト - 問題の特定用
"""

import sys
import os


def test_basic_setup():
    """基本セットアップテスト"""
    print("🔍 Testing basic setup...")

    # 環境変数
    print(f"ENVIRONMENT: {os.environ.get('ENVIRONMENT', 'NOT SET')}")
    print(f"PYTHONPATH: {os.environ.get('PYTHONPATH', 'NOT SET')}")

    # インポートテスト
    try:
        import numpy
        import scipy

        print(f"✅ numpy {numpy.__version__}, scipy {scipy.__version__} imported")

        from app.main import app

        print("✅ FastAPI app imported")

        from app.services.kernels import epanechnikov, test_constant

        print("✅ Kernel services imported")

    except ImportError as e:
        print(f"❌ Import error: {e}")
        return False

    return True


def test_kernel_constant():
    """Epanechnikov (m = 1) の検定定数"""
    print("🔍 Testing kernel constant...")

    from app.services.kernels import epanechnikov, test_constant

    inner, a_of_k = test_constant(epanechnikov(), 1)
    expected = 413113 / 985600
    print(f"📐 inner = {inner:.7f} (expected {expected:.7f}), A(K) = {a_of_k:.7f}")
    if abs(inner - expected) > 1e-5:
        print("❌ Kernel constant mismatch")
        return False
    print("✅ Kernel constant OK")
    return True


def test_small_pipeline():
    """小さなシナリオで simulate -> estimate"""
    print("🔍 Testing simulate -> estimate...")

    from app.schemas.scenario import ScenarioConfig
    from app.schemas.estimation import EstimatorConfig
    from app.services.localpoly import LocalPolynomialEstimator, default_grid
    from app.services.simulate import simulate_scenario

    scenario = ScenarioConfig.model_validate({"run": {"T_hours": 8760, "seed": 1}})
    sim = simulate_scenario(scenario)
    factor = scenario.intensity.time_factor
    path = sim.temperature.rescaled(factor)
    events = sim.events.rescaled(factor)
    print(f"📊 samples = {path.size}, events = {events.count}")

    cfg = EstimatorConfig(interval="-5:33")
    estimator = LocalPolynomialEstimator(path, events, cfg)
    count = max(estimator.n_events, 1)
    grid = default_grid(cfg, count=count, h_max=11.0)
    selection = estimator.select(grid, scale=count)
    print(f"✅ h_hat = {selection.h_hat:.4f} over {len(grid)} bandwidths")
    return True


def main():
    os.environ.setdefault("ENVIRONMENT", "testing")

    checks = [test_basic_setup, test_kernel_constant, test_small_pipeline]
    for check in checks:
        try:
            if not check():
                sys.exit(1)
        except Exception as e:
            print(f"❌ {check.__name__} failed: {e}")
            sys.exit(1)

    print("\n🎉 Quick checks passed!")


if __name__ == "__main__":
    main()
