import csv
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import structlog

from ..config import Settings, settings as default_settings

_configured = False


def configure_logging(settings: Optional[Settings] = None, force: bool = False) -> None:
    """structlog の初期化 (コンソール or JSON 出力)"""
    global _configured
    if _configured and not force:
        return

    settings = settings or default_settings
    level = getattr(logging, settings.log_level.upper(), logging.INFO)

    if settings.log_json:
        renderer = structlog.processors.JSONRenderer(sort_keys=True)
    else:
        renderer = structlog.dev.ConsoleRenderer(colors=False)

    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            renderer,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(level),
        # 標準出力は CSV/JSON の出力先になり得るのでログは stderr
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=False,
    )
    _configured = True


def get_logger(name: str) -> Any:
    configure_logging()
    return structlog.get_logger(name)


class RunLogger:
    """モンテカルロ実験の反復ごとの記録"""

    FIELDS = [
        "replication",
        "interval",
        "converged",
        "achieved_nu",
        "h_hat",
        "rel_error",
        "n_events",
        "pvalue_exponential",
        "pvalue_constant",
        "a0",
        "a1",
    ]

    def __init__(self, experiment: str = "mc"):
        self.experiment = experiment
        self.records: List[Dict[str, Any]] = []
        self.log = get_logger("experiment").bind(experiment=experiment)

    def log_replication(self, **record: Any) -> Dict[str, Any]:
        """反復結果を記録"""
        row = {field: record.get(field) for field in self.FIELDS}
        self.records.append(row)
        self.log.debug("replication_logged", **row)
        return row

    def converged_fraction(self, interval: str) -> float:
        rows = [r for r in self.records if r["interval"] == interval]
        if not rows:
            return 0.0
        return sum(1 for r in rows if r["converged"]) / len(rows)

    def write_csv(self, path: Union[str, Path]) -> Path:
        """反復ごとの詳細 CSV を出力"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.FIELDS, lineterminator="\n")
            writer.writeheader()
            for row in self.records:
                writer.writerow({k: _format_cell(v) for k, v in row.items()})
        return path


def _format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)
