from typing import List, Optional

from pydantic import BaseModel, Field, model_validator


class TestReport(BaseModel):
    """パラメトリック適合度検定の結果"""

    family: str
    parameter_names: List[str]
    theta_hat: List[float]
    contrast_value: float
    statistic: float
    variance_estimate: float = Field(gt=0)
    critical_value: float = Field(ge=0)
    p_value: float = Field(ge=0, le=1)
    reject: bool
    level: float = Field(gt=0, le=1)
    h_n: float = Field(gt=0)
    n: int = Field(ge=1)
    masked_fraction: float = 0.0
    starts_converged: int = 0
    mle_theta: Optional[List[float]] = None

    @model_validator(mode="after")
    def _consistent_decision(self):
        by_contrast = abs(self.contrast_value) >= self.critical_value
        by_pvalue = self.p_value <= self.level
        if not (self.reject == by_contrast == by_pvalue):
            raise ValueError(
                "reject, critical value and p-value disagree "
                f"(reject={self.reject}, |M|>=c={by_contrast}, p<=gamma={by_pvalue})"
            )
        return self
