from typing import Any, Dict, List, Literal, Optional

from fastapi import APIRouter, HTTPException, Query
from pydantic import BaseModel, Field

from ..exceptions import EstimationError, InputError, IntensityError, OptimizerError
from ..models.path import EventRecord, SampledPath
from ..schemas.estimation import EstimatorConfig, GridSpec
from ..schemas.gof import TestReport
from ..schemas.scenario import ScenarioConfig
from ..services.families import build_family
from ..services.gof import run_test
from ..services.kernels import get_kernel, kernel_info
from ..services.localpoly import LocalPolynomialEstimator, observed_grid
from ..services.logging_service import get_logger
from ..services.simulate import simulate_scenario

router = APIRouter(tags=["intensity"])
log = get_logger(__name__)


class PathPayload(BaseModel):
    t: List[float]
    x: List[float]
    horizon: Optional[float] = None


class EstimateRequest(BaseModel):
    path: PathPayload
    events: List[float] = []
    interval: List[float] = Field(min_length=2, max_length=2)
    degree: int = Field(default=1, ge=0)
    kernel: str = "epanechnikov"
    alpha: float = Field(default=1.0, gt=0)
    n: int = Field(default=1, ge=1)
    grid: str = "arithmetic:0.1"
    h_max: Optional[float] = Field(default=None, gt=0)
    grid_count: Optional[float] = Field(default=None, gt=0)
    eval_grid_size: int = Field(default=512, ge=2)


class CriterionRow(BaseModel):
    h: float
    criterion: Optional[float]
    defined: bool
    vhat: float
    penalty: float


class EstimateResponse(BaseModel):
    h_hat: float
    h_min: float
    criterion: List[CriterionRow]
    grid: List[float]
    qhat: List[Optional[float]]
    achieved_nu: Optional[float]
    masked_fraction: float
    n_events: int


class TestRequest(EstimateRequest):
    family: Literal["exp", "exponential", "const", "constant"] = "exp"
    gamma: float = Field(default=0.05, gt=0, le=1)
    h: Optional[float] = Field(default=None, gt=0)


class SimulateRequest(ScenarioConfig):
    seed: Optional[int] = Field(default=None, ge=0)


class SimulateResponse(BaseModel):
    path: PathPayload
    events: List[float]
    prices: Optional[PathPayload] = None


def _raise_http(exc: IntensityError) -> None:
    """ライブラリの例外を HTTP ステータスに対応させる"""
    log.warning("request_failed", error=exc.message, kind=type(exc).__name__)
    if isinstance(exc, InputError):
        raise HTTPException(status_code=400, detail=exc.message)
    if isinstance(exc, (EstimationError, OptimizerError)):
        raise HTTPException(status_code=422, detail=exc.message)
    raise HTTPException(status_code=500, detail=exc.message)


def _estimator(request: EstimateRequest) -> LocalPolynomialEstimator:
    try:
        path = SampledPath(
            times=request.path.t, values=request.path.x, horizon=request.path.horizon
        )
        events = EventRecord(event_times=sorted(request.events), horizon=path.horizon)
        cfg = EstimatorConfig(
            interval=request.interval,
            degree=request.degree,
            kernel=request.kernel,
            n=request.n,
            alpha=request.alpha,
            eval_grid_size=request.eval_grid_size,
        )
    except ValueError as exc:
        # pydantic の ValidationError も ValueError
        raise HTTPException(status_code=400, detail=str(exc))
    except InputError as exc:
        _raise_http(exc)
    return LocalPolynomialEstimator(path, events, cfg)


def _payload(path: SampledPath) -> PathPayload:
    return PathPayload(t=path.times.tolist(), x=path.values.tolist(), horizon=path.horizon)


@router.get("/kernels/{name}")
def get_kernel_info(name: str, degree: int = Query(default=1, ge=0)) -> Dict[str, Any]:
    """カーネルのノルム・モーメント行列・検定定数"""
    try:
        kernel = get_kernel(name)
    except InputError:
        raise HTTPException(status_code=404, detail=f"Kernel not found: {name}")
    return kernel_info(kernel, degree)


@router.post("/estimate", response_model=EstimateResponse)
def estimate_intensity(request: EstimateRequest):
    """バンド幅を選択して強度を推定"""
    estimator = _estimator(request)
    try:
        spec = GridSpec.parse(request.grid)
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    try:
        grid = observed_grid(estimator, spec, request.h_max, request.grid_count)
        selection = estimator.select(grid, scale=request.grid_count)
    except IntensityError as exc:
        _raise_http(exc)

    curve = selection.curve
    return EstimateResponse(
        h_hat=selection.h_hat,
        h_min=selection.h_min,
        criterion=[CriterionRow(**row) for row in selection.table()],
        grid=curve.grid.tolist(),
        qhat=[float(q) if ok else None for q, ok in zip(curve.values, curve.defined_mask)],
        achieved_nu=selection.achieved_nu,
        masked_fraction=curve.masked_fraction,
        n_events=selection.n_events,
    )


@router.post("/test", response_model=TestReport)
def run_gof_test(request: TestRequest):
    """パラメトリック族の適合度検定"""
    estimator = _estimator(request)
    try:
        spec = GridSpec.parse(request.grid)
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    try:
        if request.h is None:
            grid = observed_grid(estimator, spec, request.h_max, request.grid_count)
            selection = estimator.select(grid, scale=request.grid_count)
            h_n, pilot = selection.h_hat, selection.curve
        else:
            h_n = request.h
            pilot = estimator.estimate(h_n)
        family = build_family(request.family, curve=pilot, interval=estimator.interval)
        return run_test(estimator, h_n, family, request.gamma)
    except IntensityError as exc:
        _raise_http(exc)


@router.post("/simulate", response_model=SimulateResponse)
def simulate(request: SimulateRequest):
    """シナリオから気温経路・イベント・(価格) を生成"""
    scenario = ScenarioConfig.model_validate(request.model_dump(exclude={"seed"}))
    try:
        sim = simulate_scenario(scenario, request.seed)
    except IntensityError as exc:
        _raise_http(exc)
    return SimulateResponse(
        path=_payload(sim.temperature),
        events=sim.events.event_times.tolist(),
        prices=_payload(sim.prices) if sim.prices is not None else None,
    )
