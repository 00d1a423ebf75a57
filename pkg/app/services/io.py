"""CSV / JSON の入出力 (UTF-8, LF, '.' 小数点)

path / prices: t,x    events: t    curve: x,qhat,defined
selection diagnostics: h,criterion,vhat,penalty,defined[,criterion_alpha=...]
(全点マスクのバンド幅は criterion 空欄, defined = 0)
"""

import csv
import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
from pydantic import ValidationError

from ..exceptions import InputError
from ..models.estimate import CurveEstimate, SelectionResult
from ..models.path import EventRecord, SampledPath
from ..schemas.experiment import TABLE_COLUMNS, McSummary

PathLike = Union[str, Path]


def format_number(value: Any) -> str:
    """最短の往復可能な 10 進表現。欠損は空欄"""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return ""
    return repr(value)


def _read_rows(path: PathLike, header: Sequence[str]) -> List[List[str]]:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise InputError(f"{path} is not UTF-8") from exc
    if not rows or [c.strip() for c in rows[0]] != list(header):
        raise InputError(f"{path}: expected header {','.join(header)}", file=str(path))
    body = [row for row in rows[1:] if row]
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise InputError(f"{path}:{lineno}: expected {len(header)} fields", file=str(path))
    return body


def _parse_column(rows: List[List[str]], index: int, path: PathLike) -> np.ndarray:
    out = np.empty(len(rows))
    for lineno, row in enumerate(rows, start=2):
        try:
            out[lineno - 2] = float(row[index])
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: not a number {row[index]!r}") from exc
    return out


def read_path(
    path: PathLike, horizon: Optional[float] = None, time_factor: float = 1.0
) -> SampledPath:
    rows = _read_rows(path, ["t", "x"])
    times = _parse_column(rows, 0, path)
    values = _parse_column(rows, 1, path)
    try:
        sampled = SampledPath(times=times, values=values, horizon=horizon)
    except ValidationError as exc:
        raise InputError(f"{path}: invalid path: {exc.errors()[0]['msg']}") from exc
    return sampled.rescaled(time_factor) if time_factor != 1.0 else sampled


def read_events(path: PathLike, horizon: float, time_factor: float = 1.0) -> EventRecord:
    """horizon は読み込み後の時間単位ではなくファイルの時間単位"""
    rows = _read_rows(path, ["t"])
    times = _parse_column(rows, 0, path)
    try:
        record = EventRecord(event_times=times, horizon=horizon)
    except ValidationError as exc:
        raise InputError(f"{path}: invalid events: {exc.errors()[0]['msg']}") from exc
    return record.rescaled(time_factor) if time_factor != 1.0 else record


def _write_rows(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_number(v) if not isinstance(v, str) else v for v in row])
    return path


def write_path(path: PathLike, sampled: SampledPath) -> Path:
    return _write_rows(path, ["t", "x"], zip(sampled.times, sampled.values))


def write_events(path: PathLike, events: EventRecord) -> Path:
    return _write_rows(path, ["t"], ([t] for t in events.event_times))


def write_curve(path: PathLike, curve: CurveEstimate) -> Path:
    rows = (
        [x, q if ok else None, bool(ok)]
        for x, q, ok in zip(curve.grid, curve.values, curve.defined_mask)
    )
    return _write_rows(path, ["x", "qhat", "defined"], rows)


def read_curve(path: PathLike) -> CurveEstimate:
    rows = _read_rows(path, ["x", "qhat", "defined"])
    grid = _parse_column(rows, 0, path)
    defined = np.array([row[2] == "1" for row in rows])
    values = np.array([float(row[1]) if row[1] else np.nan for row in rows])
    return CurveEstimate(grid=grid, values=values, defined_mask=defined)


def write_diagnostics(
    path: PathLike,
    selection: SelectionResult,
    alpha_criteria: Optional[Dict[float, SelectionResult]] = None,
) -> Path:
    header = ["h", "criterion", "vhat", "penalty", "defined"]
    extra = sorted(alpha_criteria or {})
    header += [f"criterion_alpha={a:g}" for a in extra]
    rows = []
    for row in selection.table():
        h = row["h"]
        rows.append(
            [h, row["criterion"], row["vhat"], row["penalty"], row["defined"]]
            + [alpha_criteria[a].criterion[h] for a in extra]
        )
    return _write_rows(path, header, rows)


def write_table(path: PathLike, summaries: Sequence[McSummary]) -> Path:
    rows = []
    for summary in summaries:
        row = summary.table_row()
        rows.append([row[c] for c in TABLE_COLUMNS])
    return _write_rows(path, TABLE_COLUMNS, rows)


def write_mean_curves(path: PathLike, summaries: Sequence[McSummary]) -> Path:
    """区間ごとの推定曲線の平均 (interval,x,qhat_mean)"""
    rows = []
    for summary in summaries:
        if summary.grid is None or summary.mean_curve is None:
            continue
        rows.extend([summary.interval, x, q] for x, q in zip(summary.grid, summary.mean_curve))
    return _write_rows(path, ["interval", "x", "qhat_mean"], rows)


def write_json(path: PathLike, document: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(dumps(document))
        fh.write("\n")
    return path


def dumps(document: Any) -> str:
    if hasattr(document, "model_dump"):
        document = document.model_dump(mode="json")
    return json.dumps(document, indent=2, sort_keys=True, ensure_ascii=False)


def load_json(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc.msg} (line {exc.lineno})") from exc
    if not isinstance(data, dict):
        raise InputError(f"{path}: top-level JSON value must be an object")
    return data
