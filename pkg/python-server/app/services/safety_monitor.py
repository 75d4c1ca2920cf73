"""
Force safety monitor.

Converts measured force into the stiffness scaling factor alpha and tracks
consecutive threshold violations. Every mode runs through the same monitor so
baseline and adaptor share one termination criterion.
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.errors import ContractViolation
from app.models.core_types import Wrench

logger = logging.getLogger(__name__)


class SafetyConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    hard_threshold: float = Field(default=30.0, gt=0.0)
    soft_threshold: float = Field(default=15.0, gt=0.0)
    consecutive_limit: int = Field(default=3, ge=1)
    alpha_min: float = Field(default=0.2, gt=0.0, le=1.0)
    metric: Literal["axis_max", "norm"] = "axis_max"

    @model_validator(mode="after")
    def _soft_below_hard(self) -> "SafetyConfig":
        if self.soft_threshold > self.hard_threshold:
            raise ValueError(
                f"soft threshold {self.soft_threshold} exceeds hard threshold {self.hard_threshold}"
            )
        return self

    def for_task(self, force_threshold: float) -> "SafetyConfig":
        """Take the task's force limit unless the hard threshold was set explicitly.

        An unset soft threshold follows at half the hard one.
        """
        if "hard_threshold" in self.model_fields_set:
            return self
        values = self.model_dump()
        values["hard_threshold"] = force_threshold
        if "soft_threshold" in self.model_fields_set:
            values["soft_threshold"] = min(self.soft_threshold, force_threshold)
        else:
            values["soft_threshold"] = force_threshold / 2.0
        return SafetyConfig(**values)


class SafetyState(str, Enum):
    OK = "ok"
    WARNING = "warning"
    TERMINATED = "terminated"


@dataclass(frozen=True)
class SafetyStatus:
    state: SafetyState = SafetyState.OK
    consecutive_violations: int = 0
    peak_force: float = 0.0
    violation_total: int = 0


def force_metric(w: Wrench, cfg: SafetyConfig) -> float:
    """Per-axis maximum by default, Euclidean norm when configured."""
    if cfg.metric == "norm":
        return float(np.linalg.norm(w.force))
    return float(np.max(np.abs(w.force)))


def alpha_for_forces(forces: np.ndarray, cfg: SafetyConfig) -> np.ndarray:
    """Alpha for each row of an (n, 3) force array."""
    forces = np.asarray(forces, dtype=float).reshape(-1, 3)
    if cfg.metric == "norm":
        f = np.linalg.norm(forces, axis=1)
    else:
        f = np.max(np.abs(forces), axis=1)
    span = max(cfg.hard_threshold - cfg.soft_threshold, 1e-12)
    ramp = 1.0 - (1.0 - cfg.alpha_min) * (f - cfg.soft_threshold) / span
    alpha = np.where(f <= cfg.soft_threshold, 1.0, np.clip(ramp, cfg.alpha_min, 1.0))
    return np.where(f >= cfg.hard_threshold, cfg.alpha_min, alpha)


def compute_alpha(w: Wrench, cfg: SafetyConfig) -> float:
    return float(alpha_for_forces(w.force, cfg)[0])


def update(status: SafetyStatus, w: Wrench, cfg: SafetyConfig) -> SafetyStatus:
    if status.state is SafetyState.TERMINATED:
        raise ContractViolation("safety monitor already terminated; reset before reuse")
    f = force_metric(w, cfg)
    violated = f > cfg.hard_threshold
    consecutive = status.consecutive_violations + 1 if violated else 0
    if consecutive >= cfg.consecutive_limit:
        state = SafetyState.TERMINATED
    elif f > cfg.soft_threshold:
        state = SafetyState.WARNING
    else:
        state = SafetyState.OK
    return replace(
        status,
        state=state,
        consecutive_violations=consecutive,
        peak_force=max(status.peak_force, f),
        violation_total=status.violation_total + int(violated),
    )


def reset(cfg: SafetyConfig) -> SafetyStatus:
    return SafetyStatus()


class SafetyMonitor:
    """Owns one safety status for the duration of an episode."""

    def __init__(self, config: SafetyConfig):
        self.config = config
        self._status = reset(config)

    @property
    def status(self) -> SafetyStatus:
        return self._status

    def alpha(self, w: Wrench) -> float:
        return compute_alpha(w, self.config)

    def update(self, w: Wrench) -> SafetyStatus:
        previous = self._status.state
        self._status = update(self._status, w, self.config)
        if self._status.state is not previous:
            if self._status.state is SafetyState.TERMINATED:
                logger.warning(
                    f"Safety termination after {self._status.consecutive_violations} "
                    f"consecutive samples above {self.config.hard_threshold} N "
                    f"(peak {self._status.peak_force:.2f} N)"
                )
            else:
                logger.debug(f"Safety state {previous.value} -> {self._status.state.value}")
        return self._status

    def reset(self) -> None:
        self._status = reset(self.config)
