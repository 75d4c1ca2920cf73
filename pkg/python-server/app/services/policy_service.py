"""
Action-chunk policies.

Scripted policies stand in for a vision-language-action model: they walk a
scenario's waypoints with capped, equal deltas and, in the noisy variant,
seeded Gaussian perturbations. The remote policy lives in the bridge module.
"""

import logging
from enum import Enum
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.models.core_types import ActionChunk, ActionCommand, ObservationFrame
from app.models.scenario import ScenarioSpec, Waypoint

logger = logging.getLogger(__name__)


class PolicyKind(str, Enum):
    SCRIPTED_WAYPOINT = "scripted_waypoint"
    SCRIPTED_NOISY = "scripted_noisy"
    REMOTE = "remote"


class PolicyHandle(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: PolicyKind = PolicyKind.SCRIPTED_NOISY
    waypoints: List[Waypoint] = Field(default_factory=list)
    chunk_len: int = Field(default=8, ge=1)
    noise_std: float = Field(default=0.0005, ge=0.0)
    seed: int = Field(default=0, ge=0)
    step_cap: float = Field(default=0.01, gt=0.0)
    reach_tolerance: float = Field(default=0.005, ge=0.0)
    server_url: Optional[str] = None
    timeout: float = Field(default=5.0, gt=0.0)
    retries: int = Field(default=3, ge=1)

    @classmethod
    def for_scenario(cls, spec: ScenarioSpec, **overrides) -> "PolicyHandle":
        return cls(waypoints=list(spec.waypoints), **overrides)


class Policy:
    """Interface shared by in-process and remote policies."""

    def __init__(self, handle: PolicyHandle):
        self.handle = handle
        self.seed = handle.seed

    def reset(self, seed: Optional[int] = None) -> None:
        raise NotImplementedError

    def next_chunk(self, obs: ObservationFrame) -> ActionChunk:
        raise NotImplementedError

    def close(self) -> None:
        pass


def cap_norm(delta: np.ndarray, cap: float) -> np.ndarray:
    norm = float(np.linalg.norm(delta))
    if norm > cap:
        return delta * (cap / norm)
    return delta


class ScriptedPolicy(Policy):
    """Waypoint follower; adds seeded noise when the handle asks for it."""

    def __init__(self, handle: PolicyHandle):
        super().__init__(handle)
        self._index = 0
        self._calls = 0

    def reset(self, seed: Optional[int] = None) -> None:
        self.seed = self.handle.seed if seed is None else seed
        self._index = 0
        self._calls = 0

    def _current_target(self, position: np.ndarray) -> Optional[Waypoint]:
        waypoints = self.handle.waypoints
        if not waypoints:
            return None
        last = len(waypoints) - 1
        while self._index < last and self._distance(position, waypoints[self._index]) <= self.handle.reach_tolerance:
            self._index += 1
            logger.debug(f"Policy advanced to waypoint {self._index}")
        return waypoints[self._index]

    @staticmethod
    def _distance(position: np.ndarray, waypoint: Waypoint) -> float:
        return float(np.linalg.norm(np.asarray(waypoint.position) - position))

    def next_chunk(self, obs: ObservationFrame) -> ActionChunk:
        h = self.handle
        position = obs.pose.position
        target = self._current_target(position)

        if target is None:
            delta = np.zeros(3)
            gripper = obs.gripper
        else:
            gripper = target.gripper
            remaining = np.asarray(target.position) - position
            converged = (
                self._index == len(h.waypoints) - 1
                and float(np.linalg.norm(remaining)) <= h.reach_tolerance
            )
            delta = np.zeros(3) if converged else cap_norm(remaining / h.chunk_len, h.step_cap)

        deltas = np.tile(delta, (h.chunk_len, 1))
        if h.kind is PolicyKind.SCRIPTED_NOISY and h.noise_std > 0.0:
            rng = np.random.default_rng([self.seed, self._calls])
            deltas = deltas + rng.normal(0.0, h.noise_std, deltas.shape)

        self._calls += 1
        actions = tuple(
            ActionCommand(cap_norm(row, h.step_cap), np.zeros(3), gripper) for row in deltas
        )
        return ActionChunk(seq=self._calls, actions=actions)


def make_policy(handle: PolicyHandle) -> Policy:
    if handle.kind is PolicyKind.REMOTE:
        from app.services.bridge_service import RemotePolicy

        return RemotePolicy(handle)
    return ScriptedPolicy(handle)
