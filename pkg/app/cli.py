#!/usr/bin/env python3
"""
Cox 過程の強度推定 コマンドラインツール

終了コード: 0 成功/非棄却, 2 入力エラー, 3 棄却, 4 推定不能, 5 最適化失敗
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Type

from pydantic import BaseModel, ValidationError

from .config import settings
from .exceptions import InputError, IntensityError, OptimizerError
from .models.path import EventRecord, Interval, SampledPath
from .schemas.estimation import EstimateSummary, EstimatorConfig, GridSpec
from .schemas.run import (
    DetectRun,
    EstimateRun,
    EstimationRun,
    InfoRun,
    McRun,
    RateRun,
    SimulateRun,
    TestRun,
)
from .schemas.scenario import ScenarioConfig
from .services import io
from .services.experiment import rate_check, run_mc
from .services.families import build_family
from .services.gof import mle_exponential, run_test
from .services.jumps import detect
from .services.kernels import get_kernel, kernel_info
from .services.localpoly import LocalPolynomialEstimator, alpha_scan, observed_grid
from .services.logging_service import RunLogger, configure_logging, get_logger
from .services.simulate import simulate_scenario

log = get_logger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_REJECTED = 3

# フラグ以外の引数 (RunConfig に渡さない)
_META = {"command", "config", "handler", "model", "log_json", "log_level"}


def _float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from exc


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from exc


def load_run_config(model: Type[BaseModel], args: argparse.Namespace) -> BaseModel:
    """--config の JSON を読み、明示されたフラグで上書きして検証"""
    values: Dict[str, Any] = {}
    config = getattr(args, "config", None)
    if config:
        values.update(io.load_json(config))
    values.update({k: v for k, v in vars(args).items() if k not in _META})
    return model.model_validate(values)


def load_scenario(path: Optional[str]) -> ScenarioConfig:
    if path is None:
        return ScenarioConfig()
    return ScenarioConfig.model_validate(io.load_json(path))


def _load_inputs(run: EstimationRun) -> Tuple[SampledPath, EventRecord]:
    """経路とイベントを読み、強度の時間単位に変換"""
    raw = io.read_path(run.path)
    events = io.read_events(run.events, horizon=raw.horizon, time_factor=run.time_factor)
    path = raw.rescaled(run.time_factor) if run.time_factor != 1.0 else raw
    return path, events


def _estimator(run: EstimationRun) -> LocalPolynomialEstimator:
    cfg = EstimatorConfig(
        interval=run.interval,
        degree=run.degree,
        kernel=run.kernel,
        n=run.n,
        alpha=run.alpha,
        eval_grid_size=run.eval_grid_size,
        min_nu=run.min_nu,
        clip_floor=run.clip_floor,
    )
    path, events = _load_inputs(run)
    return LocalPolynomialEstimator(path, events, cfg, workers=run.threads)


def _observability_ok(achieved_nu: Optional[float], nu: float) -> bool:
    if achieved_nu is None:
        return False
    return achieved_nu >= nu if nu > 0 else achieved_nu > 0


def cmd_estimate(run: EstimateRun) -> int:
    estimator = _estimator(run)
    grid = observed_grid(estimator, GridSpec.parse(run.grid), run.h_max, run.grid_count)
    selection = estimator.select(grid, scale=run.grid_count)

    scans = None
    if run.alphas:
        scans = alpha_scan(
            estimator.path, estimator.events, estimator.cfg, grid, run.alphas,
            workers=run.threads, scale=run.grid_count,
        )

    out = Path(run.out)
    io.write_curve(out / "curve.csv", selection.curve)
    io.write_diagnostics(out / "diagnostics.csv", selection, scans)
    interval = estimator.interval
    summary = EstimateSummary(
        interval=[interval.lo, interval.hi],
        degree=run.degree,
        kernel=estimator.kernel.name,
        n=run.n,
        alpha=selection.alpha,
        h_hat=selection.h_hat,
        h_min=selection.h_min,
        grid_size=len(grid),
        n_events=selection.n_events,
        achieved_nu=selection.achieved_nu,
        observability_ok=_observability_ok(selection.achieved_nu, run.min_nu),
        masked_fraction=selection.curve.masked_fraction,
        criterion_at_h_hat=selection.criterion[selection.h_hat],
        alphas={f"{a:g}": s.h_hat for a, s in scans.items()} if scans else None,
    )
    io.write_json(out / "summary.json", summary)
    print(io.dumps(summary))
    return EXIT_OK


def cmd_test(run: TestRun) -> int:
    estimator = _estimator(run)
    if run.h == "from-estimate":
        grid = observed_grid(estimator, GridSpec.parse(run.grid), run.h_max, run.grid_count)
        selection = estimator.select(grid, scale=run.grid_count)
        h_n, pilot = selection.h_hat, selection.curve
    else:
        h_n = float(run.h)
        pilot = estimator.estimate(h_n)

    box = None
    if run.box_lo is not None or run.box_hi is not None:
        if run.box_lo is None or run.box_hi is None:
            raise InputError("both --box-lo and --box-hi are required")
        box = (run.box_lo, run.box_hi)
    family = build_family(run.family, curve=pilot, interval=estimator.interval, box=box)
    report = run_test(estimator, h_n, family, run.gamma, run.max_iter, workers=run.threads)

    if family.name == "exponential" and estimator.n_events > 0:
        # 最尤推定の失敗は検定結果に影響させない
        try:
            mle = mle_exponential(estimator.path, estimator.events, estimator.cfg)
        except (OptimizerError, InputError) as exc:
            log.warning("mle_failed", reason=exc.message)
        else:
            report = report.model_copy(update={"mle_theta": [float(t) for t in mle]})

    if run.out:
        io.write_json(run.out, report)
    print(io.dumps(report))
    return EXIT_REJECTED if report.reject else EXIT_OK


def cmd_simulate(run: SimulateRun) -> int:
    scenario = load_scenario(run.scenario)
    updates = {}
    if run.seed is not None:
        updates["seed"] = run.seed
    if run.T_hours is not None:
        updates["T_hours"] = run.T_hours
    if updates:
        document = scenario.model_dump()
        document["run"].update(updates)
        scenario = ScenarioConfig.model_validate(document)

    sim = simulate_scenario(scenario)
    out = Path(run.out)
    io.write_path(out / "path.csv", sim.temperature)
    io.write_events(out / "events.csv", sim.events)
    if sim.prices is not None:
        io.write_path(out / "prices.csv", sim.prices)
    print(json.dumps({"samples": sim.temperature.size, "events": sim.events.count,
                      "prices": sim.prices is not None, "out": str(out)}))
    return EXIT_OK


def cmd_detect(run: DetectRun) -> int:
    prices = io.read_path(run.prices)
    result = detect(prices, run.order, run.mult, run.exponent, run.segment_hours)
    io.write_events(run.out, result.events)
    print(json.dumps({
        "events": result.events.count,
        "segments": [segment._asdict() for segment in result.segments],
    }))
    return EXIT_OK


def cmd_mc(run: McRun) -> int:
    scenario = load_scenario(run.scenario)
    intervals = [Interval.parse(text) for text in run.intervals] if run.intervals else None
    run_logger = RunLogger("mc") if run.detail else None
    summaries = run_mc(
        scenario,
        intervals=intervals,
        reps=run.reps,
        seed=run.seed,
        workers=run.threads,
        run_logger=run_logger,
        keep_curves=run.curves is not None,
    )
    io.write_table(run.out, summaries)
    if run_logger is not None:
        run_logger.write_csv(run.detail)
    if run.curves:
        io.write_mean_curves(run.curves, summaries)
    print(io.dumps([s.model_dump(mode="json", exclude={"grid", "mean_curve"}) for s in summaries]))
    return EXIT_OK


def cmd_info(run: InfoRun) -> int:
    print(io.dumps(kernel_info(get_kernel(run.kernel), run.degree)))
    return EXIT_OK


def cmd_rate(run: RateRun) -> int:
    scenario = load_scenario(run.scenario)
    interval = Interval.parse(run.interval) if run.interval else None
    result = rate_check(scenario, run.n_values, run.reps, run.seed, interval, workers=run.threads)
    if run.out:
        io.write_json(run.out, result)
    print(io.dumps(result))
    return EXIT_OK


def cmd_schema(args: argparse.Namespace) -> int:
    print(json.dumps(ScenarioConfig.model_json_schema(), indent=2, sort_keys=True))
    return EXIT_OK


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="設定 JSON (フラグが優先)")
    parser.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="並列数 (既定: 全コア)")
    parser.add_argument("--log-json", action="store_true", help="ログを JSON 行で出力")
    parser.add_argument("--log-level", default=None, help="ログレベル")


def _estimation_flags(parser: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    parser.add_argument("path", nargs="?", default=S, help="共変量の経路 CSV (t,x)")
    parser.add_argument("events", nargs="?", default=S, help="イベント時刻 CSV (t)")
    parser.add_argument("--interval", default=S, help="推定区間 lo:hi")
    parser.add_argument("--degree", type=int, default=S, help="局所多項式の次数 m")
    parser.add_argument("--kernel", default=S)
    parser.add_argument("--n", type=int, default=S, help="強度のスケール n")
    parser.add_argument("--alpha", type=float, default=S, help="罰則の係数 alpha")
    parser.add_argument("--grid", default=S, help="arithmetic:step | divisor")
    parser.add_argument("--h-max", dest="h_max", type=float, default=S)
    parser.add_argument("--grid-count", dest="grid_count", type=float, default=S,
                        help="h_min の計算に使う件数 (既定: 区間内のイベント数)")
    parser.add_argument("--eval-grid-size", dest="eval_grid_size", type=int, default=S)
    parser.add_argument("--min-nu", dest="min_nu", type=float, default=S, help="観測可能性の警告閾値")
    parser.add_argument("--clip-floor", dest="clip_floor", type=float, default=S)
    parser.add_argument("--time-unit", dest="time_unit", default=S,
                        help="強度の時間単位 (時間数 または hour/day/week/year)")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(
        prog="cox-intensity",
        description="Cox 過程の強度推定・適合度検定・シミュレーション",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
使用例:
  python -m app.cli estimate path.csv events.csv --interval -5:33 --out out
  python -m app.cli test path.csv events.csv --interval -5:33 --family exp
  python -m app.cli simulate docs/scenario.json --seed 1 --out sim
  python -m app.cli detect sim/prices.csv --out detected.csv
  python -m app.cli mc docs/scenario.json --reps 50 --out table.csv
  python -m app.cli info --kernel epanechnikov --degree 1
        """,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="強度の推定とバンド幅選択")
    _common(p)
    _estimation_flags(p)
    p.add_argument("--out", default=S, help="出力ディレクトリ")
    p.add_argument("--alphas", type=_float_list, default=S, help="例: 0.25,0.5,1,1.5")
    p.set_defaults(handler=cmd_estimate, model=EstimateRun)

    p = sub.add_parser("test", help="パラメトリック族の適合度検定")
    _common(p)
    _estimation_flags(p)
    p.add_argument("--family", default=S, help="exp | const | module:factory")
    p.add_argument("--h", default=S, help="from-estimate または数値")
    p.add_argument("--gamma", type=float, default=S, help="有意水準")
    p.add_argument("--box-lo", dest="box_lo", type=_float_list, default=S)
    p.add_argument("--box-hi", dest="box_hi", type=_float_list, default=S)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=S)
    p.add_argument("--out", default=S, help="レポート JSON の出力先")
    p.set_defaults(handler=cmd_test, model=TestRun)

    p = sub.add_parser("simulate", help="シナリオから経路とイベントを生成")
    _common(p)
    p.add_argument("scenario", nargs="?", default=S, help="シナリオ JSON (既定: 組み込み)")
    p.add_argument("--out", default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--T-hours", dest="T_hours", type=float, default=S)
    p.set_defaults(handler=cmd_simulate, model=SimulateRun)

    p = sub.add_parser("detect", help="価格系列からスパイクを検出")
    _common(p)
    p.add_argument("prices", nargs="?", default=S, help="価格 CSV (t,x)")
    p.add_argument("--order", type=int, default=S, help="multipower variation の次数")
    p.add_argument("--mult", type=float, default=S, help="閾値の倍率")
    p.add_argument("--exponent", type=float, default=S, help="閾値の指数")
    p.add_argument("--segment-hours", dest="segment_hours", type=float, default=S)
    p.add_argument("--out", default=S)
    p.set_defaults(handler=cmd_detect, model=DetectRun)

    p = sub.add_parser("mc", help="モンテカルロ実験")
    _common(p)
    p.add_argument("scenario", nargs="?", default=S)
    p.add_argument("--reps", type=int, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--intervals", type=lambda s: s.split(","), default=S, help="例: -1:29,-5:33")
    p.add_argument("--out", default=S, help="集計表 CSV")
    p.add_argument("--detail", default=S, help="反復ごとの詳細 CSV")
    p.add_argument("--curves", default=S, help="平均推定曲線 CSV")
    p.set_defaults(handler=cmd_mc, model=McRun)

    p = sub.add_parser("info", help="カーネル定数の表示")
    _common(p)
    p.add_argument("--kernel", default=S)
    p.add_argument("--degree", type=int, default=S)
    p.set_defaults(handler=cmd_info, model=InfoRun)

    p = sub.add_parser("rate", help="n に対する誤差の収束率")
    _common(p)
    p.add_argument("scenario", nargs="?", default=S)
    p.add_argument("--n-values", dest="n_values", type=_int_list, default=S, help="例: 1,4,16")
    p.add_argument("--reps", type=int, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--interval", default=S)
    p.add_argument("--out", default=S)
    p.set_defaults(handler=cmd_rate, model=RateRun)

    p = sub.add_parser("schema", help="シナリオ JSON のスキーマを表示")
    p.set_defaults(handler=cmd_schema, model=None)

    return parser


def _setup_logging(args: argparse.Namespace) -> None:
    updates = {}
    if getattr(args, "log_json", False):
        updates["log_json"] = True
    if getattr(args, "log_level", None):
        updates["log_level"] = args.log_level
    if updates:
        configure_logging(settings.model_copy(update=updates), force=True)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args)
    handler: Callable[..., int] = args.handler
    try:
        if args.model is None:
            return handler(args)
        run = load_run_config(args.model, args)
        return handler(run)
    except ValidationError as exc:
        for error in exc.errors():
            where = ".".join(str(part) for part in error["loc"]) or "config"
            print(f"error: {where}: {error['msg']}", file=sys.stderr)
        return EXIT_INPUT
    except IntensityError as exc:
        log.error("command_failed", command=args.command, error=exc.message, **exc.context)
        print(f"error: {exc.message}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
