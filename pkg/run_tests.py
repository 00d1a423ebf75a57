#!/usr/bin/env python3
"""
Cox Intensity テスト実行スクリプト
"""

import os
import sys
import subprocess


def run_tests(
    test_pattern="tests/",
    verbose=False,
    coverage=False,
    stop_on_fail=True,
    slow=False,
    workers=None,
):
    """テスト実行"""
    print(f"🚀 Running tests: {test_pattern}")

    # 環境変数設定
    env = os.environ.copy()
    env["ENVIRONMENT"] = "testing"

    # pytestコマンド構築
    cmd = [sys.executable, "-m", "pytest"]

    if verbose:
        cmd.append("-v")
    else:
        cmd.append("-q")

    if coverage:
        cmd.extend(
            ["--cov=app", "--cov-report=term-missing", "--cov-report=html:htmlcov"]
        )

    # 既定では slow マーカーを除外 (pytest.ini)
    if slow:
        cmd.extend(["-m", "slow or not slow"])

    if workers:
        cmd.extend(["-n", str(workers)])

    if stop_on_fail:
        cmd.append("--maxfail=3")

    cmd.append(test_pattern)

    print(f"📋 Command: {' '.join(cmd)}")

    try:
        result = subprocess.run(cmd, env=env, check=False)
        return result.returncode == 0
    except KeyboardInterrupt:
        print("\n⏹️  Tests interrupted by user")
        return False
    except Exception as e:
        print(f"❌ Test execution error: {e}")
        return False


def run_specific_test_class(class_name):
    """特定のテストクラスのみ実行"""
    print(f"🎯 Running specific test class: {class_name}")

    modules = {
        "tests/test_kernels.py": ["TestEpanechnikov", "TestMoments", "TestTestConstant"],
        "tests/test_occupation.py": ["TestPathModels", "TestOccupation", "TestObservability"],
        "tests/test_localpoly.py": [
            "TestBandwidthGrid", "TestLocalPolynomial", "TestVarianceAndPenalty", "TestSelection",
        ],
        "tests/test_normal.py": ["TestNormal", "TestTwoSided"],
        "tests/test_gof.py": [
            "TestFamilies", "TestOptimizer", "TestDecision", "TestContrast", "TestRunTest",
            "TestMle", "TestFunctionalInterface",
        ],
        "tests/test_simulate.py": ["TestTimeGrid", "TestTemperature", "TestCox", "TestSpikes", "TestScenario"],
        "tests/test_jumps.py": ["TestMultipower", "TestDetection"],
        "tests/test_experiment.py": ["TestSummaries", "TestMonteCarlo"],
        "tests/test_io.py": ["TestFormatting", "TestCsv", "TestJson"],
        "tests/test_cli.py": ["TestCliPipeline", "TestCliErrors"],
        "tests/test_config.py": ["TestSettingsLoading", "TestRunConfigs", "TestScenarioDefaults"],
        "tests/test_acceptance.py": ["TestEstimationAccuracy", "TestSimulationOracles"],
    }
    test_file = next((f for f, names in modules.items() if class_name in names), None)
    if test_file is None and "Endpoint" in class_name:
        test_file = "tests/test_api.py"
    if test_file is None:
        test_file = "tests/"

    pattern = f"{test_file}::{class_name}" if test_file != "tests/" else test_file
    return run_tests(pattern, verbose=True, stop_on_fail=False)


def main():
    """メイン実行"""
    import argparse

    parser = argparse.ArgumentParser(
        description="Run Cox Intensity Tests",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python run_tests.py                          # 全テスト実行 (slow を除く)
  python run_tests.py -v                       # 詳細出力
  python run_tests.py -c                       # カバレッジ付き
  python run_tests.py --slow                   # モンテカルロの受け入れテストも実行
  python run_tests.py --class TestDecision  # 特定クラスのみ
        """,
    )

    parser.add_argument("--verbose", "-v", action="store_true", help="詳細出力")
    parser.add_argument(
        "--coverage", "-c", action="store_true", help="カバレッジレポート生成"
    )
    parser.add_argument("--class", dest="test_class", help="特定のテストクラスのみ実行")
    parser.add_argument("--pattern", default="tests/", help="テストファイルパターン")
    parser.add_argument("--slow", action="store_true", help="slow マーカーのテストも実行")
    parser.add_argument("--workers", "-n", type=int, help="pytest-xdist の並列数")

    args = parser.parse_args()

    success = True

    try:
        # テスト実行
        if args.test_class:
            success = run_specific_test_class(args.test_class)
        else:
            success = run_tests(
                test_pattern=args.pattern,
                verbose=args.verbose,
                coverage=args.coverage,
                slow=args.slow,
                workers=args.workers,
            )

        # 結果表示
        if success:
            print("\n🎉 All tests passed!")
            if args.coverage:
                print("📊 Coverage report: htmlcov/index.html")
        else:
            print("\n❌ Some tests failed!")

    except KeyboardInterrupt:
        print("\n⏹️  Interrupted by user")
        success = False

    sys.exit(0 if success else 1)


if __name__ == "__main__":
    main()
