from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, model_validator

TABLE_COLUMNS = [
    "interval",
    "e_hat",
    "e_oracle",
    "pct_converged",
    "pct_exponential",
    "pct_constant",
    "a0_lo",
    "a0_hi",
    "a1_lo",
    "a1_hi",
]


class McSummary(BaseModel):
    """1 区間分のモンテカルロ集計 (表の 1 行)"""

    interval: str
    replications: int = Field(ge=1)
    converged: int = Field(ge=0)
    e_hat: Optional[float] = None
    e_hat_se: Optional[float] = None
    e_oracle: Optional[float] = None
    oracle_h: Optional[float] = None
    h_hat_mean: Optional[float] = None
    pct_converged: float = Field(ge=0, le=100)
    pct_not_rejected: Dict[str, Optional[float]] = {}
    theta_hat_ci: Dict[str, Optional[Tuple[float, float]]] = {}
    mle_theta_mean: Optional[List[float]] = None
    grid: Optional[List[float]] = None
    mean_curve: Optional[List[Optional[float]]] = None

    @model_validator(mode="after")
    def _check_percentages(self):
        for name, pct in self.pct_not_rejected.items():
            if pct is not None and not 0 <= pct <= 100:
                raise ValueError(f"percentage for {name} out of range")
        if self.converged > self.replications:
            raise ValueError("more converged runs than replications")
        return self

    def table_row(self) -> Dict[str, Optional[float]]:
        """Table 形式 CSV の 1 行"""
        a0 = self.theta_hat_ci.get("a0")
        a1 = self.theta_hat_ci.get("a1")
        return {
            "interval": self.interval,
            "e_hat": self.e_hat,
            "e_oracle": self.e_oracle,
            "pct_converged": self.pct_converged,
            "pct_exponential": self.pct_not_rejected.get("exponential"),
            "pct_constant": self.pct_not_rejected.get("constant"),
            "a0_lo": a0[0] if a0 else None,
            "a0_hi": a0[1] if a0 else None,
            "a1_lo": a1[0] if a1 else None,
            "a1_hi": a1[1] if a1 else None,
        }


class RateCheck(BaseModel):
    """収束率の検証結果 (log e_hat を log n に回帰した傾き)"""

    interval: str
    n_values: List[int]
    mean_errors: List[float]
    slope: float
