"""
Hybrid contact-phase detection.

Force evidence decides Contact (with debounce and hysteresis); kinematics
decide between Retreat, Approaching and FreeMotion once contact is released.
"""

import logging
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.models.core_types import ContactPhase, ObservationFrame, TaskSpec

logger = logging.getLogger(__name__)


class PhaseConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    contact_on: float = Field(default=2.0, gt=0.0)
    contact_off: float = Field(default=0.5, ge=0.0)
    approach_distance: float = Field(default=0.05, ge=0.0)
    debounce: int = Field(default=5, ge=1)
    retreat_speed: float = Field(default=1e-3, ge=0.0)

    @model_validator(mode="after")
    def _hysteresis(self) -> "PhaseConfig":
        if not self.contact_off < self.contact_on:
            raise ValueError("contact_off must be below contact_on")
        return self


class PhaseDetector:
    """
    Contact-phase state machine.

    The detector keeps a short history: the number of consecutive samples
    at or above ``contact_on`` and the last contact normal, taken as the
    direction of the sensed force while in contact.
    """

    def __init__(self, config: Optional[PhaseConfig] = None):
        self.config = config or PhaseConfig()
        self._above = 0
        self._normal: Optional[np.ndarray] = None

    def reset(self) -> None:
        self._above = 0
        self._normal = None

    def detect(
        self, obs: ObservationFrame, task: TaskSpec, prev: ContactPhase
    ) -> ContactPhase:
        cfg = self.config
        force = obs.wrench.force
        magnitude = float(np.linalg.norm(force))
        self._above = self._above + 1 if magnitude >= cfg.contact_on else 0

        if prev is ContactPhase.CONTACT:
            if magnitude >= cfg.contact_off:
                self._remember_normal(force, magnitude)
                return ContactPhase.CONTACT
            if self._moving_away(obs, force, magnitude):
                return ContactPhase.RETREAT
            return self._by_distance(obs, task)

        if self._above >= cfg.debounce:
            self._remember_normal(force, magnitude)
            return ContactPhase.CONTACT

        if prev is ContactPhase.RETREAT and self._moving_away(obs, force, magnitude):
            return ContactPhase.RETREAT
        return self._by_distance(obs, task)

    def _remember_normal(self, force: np.ndarray, magnitude: float) -> None:
        if magnitude > 0.0:
            self._normal = force / magnitude

    def _moving_away(self, obs: ObservationFrame, force: np.ndarray, magnitude: float) -> bool:
        normal = self._normal
        if normal is None and magnitude > 1e-9:
            normal = force / magnitude
        if normal is None:
            return False
        # the sensed force points out of the surface, so does separation
        return float(np.dot(obs.twist.linear, normal)) > self.config.retreat_speed

    def _by_distance(self, obs: ObservationFrame, task: TaskSpec) -> ContactPhase:
        if task.target_position is None:
            return ContactPhase.FREE_MOTION
        distance = float(np.linalg.norm(obs.pose.position - np.asarray(task.target_position)))
        if distance <= self.config.approach_distance:
            return ContactPhase.APPROACHING
        return ContactPhase.FREE_MOTION


def detect(
    obs: ObservationFrame,
    task: TaskSpec,
    prev: ContactPhase,
    cfg: PhaseConfig,
    detector: Optional[PhaseDetector] = None,
) -> ContactPhase:
    """Single-step detection; pass a detector to carry the history window across calls."""
    detector = detector or PhaseDetector(cfg)
    return detector.detect(obs, task, prev)


def fuse(semantic: Optional[ContactPhase], sensed: ContactPhase) -> ContactPhase:
    """Sensed Contact is authoritative; otherwise the advisor's phase wins when present."""
    if sensed is ContactPhase.CONTACT:
        return sensed
    if semantic is not None:
        return semantic
    return sensed
