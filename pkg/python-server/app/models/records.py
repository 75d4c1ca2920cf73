"""Episode records, episode results and benchmark metrics."""

from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, model_validator

from app.models.core_types import ContactPhase


class Mode(str, Enum):
    BASELINE = "baseline"
    ADAPTOR = "adaptor"


class EpisodeOutcome(str, Enum):
    SUCCESS = "success"
    FAILED_FORCE = "failed_force"
    FAILED_TIMEOUT = "failed_timeout"
    FAILED_DIVERGED = "failed_diverged"


class EpisodeRecord(BaseModel):
    """One logged control tick; the JSONL dataset row."""

    t: float
    task_id: str
    mode: Mode
    phase: ContactPhase
    wrench: List[float] = Field(min_length=6, max_length=6)
    k: List[float] = Field(min_length=3, max_length=3)
    d: List[float] = Field(min_length=3, max_length=3)
    alpha: float
    pose: List[float] = Field(min_length=7, max_length=7)
    setpoint: List[float] = Field(min_length=7, max_length=7)
    advisor_source: str
    safety_state: str


class EpisodeResult(BaseModel):
    scenario_id: str
    mode: Mode
    seed: int
    trial: int = 0
    outcome: EpisodeOutcome
    duration: float
    peak_force: float
    violation_total: int
    control_ticks: int
    chunks: int
    advisor_queries: int
    diagnostic: Optional[str] = None
    records: List[EpisodeRecord] = Field(default_factory=list)


class ScenarioMetrics(BaseModel):
    trials: int = Field(ge=0)
    successes: int = Field(ge=0)
    success_rate: float = Field(ge=0.0, le=1.0)
    violation_count: int = Field(ge=0)
    peak_force: float
    mean_time_to_success: Optional[float] = None
    outcomes: Dict[str, int] = Field(default_factory=dict)


class MetricsReport(BaseModel):
    mode: Optional[Mode] = None
    scenarios: Dict[str, ScenarioMetrics]
    aggregate: ScenarioMetrics


class ComparisonRow(BaseModel):
    scenario: str
    baseline_success_rate: float
    adaptor_success_rate: float
    success_delta: float
    baseline_violations: int
    adaptor_violations: int
    violation_delta: int
    baseline_peak_force: float
    adaptor_peak_force: float


class ComparisonTable(BaseModel):
    rows: List[ComparisonRow]
    aggregate: ComparisonRow

    @model_validator(mode="after")
    def _unique(self) -> "ComparisonTable":
        names = [row.scenario for row in self.rows]
        if len(names) != len(set(names)):
            raise ValueError("duplicate scenario rows")
        return self

    def to_text(self) -> str:
        header = (
            f"{'scenario':<16} {'base':>6} {'adapt':>6} {'delta':>7} "
            f"{'v_base':>7} {'v_adapt':>7} {'v_delta':>8} {'F_base':>8} {'F_adapt':>8}"
        )
        lines = [header, "-" * len(header)]
        for row in self.rows + [self.aggregate]:
            lines.append(
                f"{row.scenario:<16} {row.baseline_success_rate:>6.2f} {row.adaptor_success_rate:>6.2f} "
                f"{row.success_delta:>+7.2f} {row.baseline_violations:>7d} {row.adaptor_violations:>7d} "
                f"{row.violation_delta:>+8d} {row.baseline_peak_force:>8.2f} {row.adaptor_peak_force:>8.2f}"
            )
        return "\n".join(lines) + "\n"
