"""
Scenario definitions for the simulated contact-rich tasks.

Scenarios are shipped as JSON files under ``app/scenarios``; the schema is
documented in ``docs/SCENARIOS.md``.
"""

import json
import logging
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from app.core.errors import ScenarioNotFound
from app.models.core_types import ImpedanceRange, TaskSpec, as_vec3

logger = logging.getLogger(__name__)

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"
BENCHMARK_SUITE: Tuple[str, ...] = ("push_box", "drawer_slide", "peg_insert", "fragile_place")


def _vec3(value: List[float], name: str) -> List[float]:
    return [float(v) for v in as_vec3(value, name)]


class ScenarioKind(str, Enum):
    PUSH_BOX = "push_box"
    DRAWER_SLIDE = "drawer_slide"
    PEG_INSERT = "peg_insert"
    FRAGILE_PLACE = "fragile_place"


class Waypoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    position: List[float]
    gripper: float = Field(default=0.0, ge=0.0, le=1.0)

    @field_validator("position")
    @classmethod
    def _position(cls, value: List[float]) -> List[float]:
        return _vec3(value, "waypoint position")


class SensorModel(BaseModel):
    model_config = ConfigDict(frozen=True)

    noise_std: float = Field(default=0.05, ge=0.0)
    bias: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0])
    seed: int = 0

    @field_validator("bias")
    @classmethod
    def _bias(cls, value: List[float]) -> List[float]:
        return _vec3(value, "bias")


class PushBoxGeometry(BaseModel):
    """A box pushed along the task's primary axis in the positive direction."""

    model_config = ConfigDict(frozen=True)

    box_center: List[float]
    box_half_extents: List[float]
    box_mass: float = Field(default=2.0, gt=0.0)
    sliding_drag: float = Field(default=400.0, ge=0.0)
    goal_distance: float = Field(default=0.15, ge=0.0)

    @field_validator("box_center", "box_half_extents")
    @classmethod
    def _vectors(cls, value: List[float]) -> List[float]:
        return _vec3(value, "box vector")


class DrawerGeometry(BaseModel):
    model_config = ConfigDict(frozen=True)

    handle_position: List[float]
    pull_direction: List[float]
    drawer_mass: float = Field(default=1.5, gt=0.0)
    rail_friction: float = Field(default=4.0, ge=0.0)
    damper: float = Field(default=100.0, ge=0.0)
    travel_goal: float = Field(default=0.15, ge=0.0)
    travel_limit: float = Field(default=0.30, gt=0.0)
    tolerance: float = Field(default=0.005, ge=0.0)
    grasp_distance: float = Field(default=0.01, gt=0.0)

    @field_validator("handle_position")
    @classmethod
    def _handle(cls, value: List[float]) -> List[float]:
        return _vec3(value, "handle_position")

    @field_validator("pull_direction")
    @classmethod
    def _direction(cls, value: List[float]) -> List[float]:
        arr = as_vec3(value, "pull_direction")
        norm = float(np.linalg.norm(arr))
        if norm < 1e-9:
            raise ValueError("pull_direction must be non-zero")
        return [float(v) for v in arr / norm]


class PegGeometry(BaseModel):
    """A held peg inserted into a vertical hole whose top face is at ``hole_center``."""

    model_config = ConfigDict(frozen=True)

    hole_center: List[float]
    clearance: float = Field(default=0.004, gt=0.0)
    hole_depth: float = Field(default=0.045, gt=0.0)
    insertion_depth: float = Field(default=0.03, gt=0.0)
    tolerance: float = Field(default=0.005, ge=0.0)
    fit_friction: float = Field(default=6.0, ge=0.0)
    fit_drag: float = Field(default=800.0, ge=0.0)
    fit_velocity_scale: float = Field(default=0.02, gt=0.0)
    fit_ramp: float = Field(default=0.005, gt=0.0)

    @field_validator("hole_center")
    @classmethod
    def _center(cls, value: List[float]) -> List[float]:
        return _vec3(value, "hole_center")


class PlaceGeometry(BaseModel):
    model_config = ConfigDict(frozen=True)

    table_height: float = 0.0
    target_center: List[float] = Field(default_factory=lambda: [0.0, 0.0])
    target_radius: float = Field(default=0.01, gt=0.0)
    tolerance: float = Field(default=0.005, ge=0.0)
    settle_speed: float = Field(default=0.01, gt=0.0)

    @field_validator("target_center")
    @classmethod
    def _target(cls, value: List[float]) -> List[float]:
        if len(value) != 2:
            raise ValueError("target_center needs x and y")
        return [float(v) for v in value]


Geometry = Union[PushBoxGeometry, DrawerGeometry, PegGeometry, PlaceGeometry]

GEOMETRY_MODELS = {
    ScenarioKind.PUSH_BOX: PushBoxGeometry,
    ScenarioKind.DRAWER_SLIDE: DrawerGeometry,
    ScenarioKind.PEG_INSERT: PegGeometry,
    ScenarioKind.FRAGILE_PLACE: PlaceGeometry,
}


class ScenarioSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    kind: ScenarioKind
    task: TaskSpec
    geometry: Geometry
    ee_start: List[float]
    waypoints: List[Waypoint] = Field(default_factory=list)
    env_stiffness: float = Field(default=5000.0, gt=0.0)
    env_damping: float = Field(default=50.0, ge=0.0)
    friction_coefficient: float = Field(default=0.5, ge=0.0)
    m_eff: List[float] = Field(default_factory=lambda: [1.0, 1.0, 1.0])
    impedance_range: ImpedanceRange = Field(default_factory=ImpedanceRange)
    sensor: SensorModel = Field(default_factory=SensorModel)

    @model_validator(mode="before")
    @classmethod
    def _geometry_for_kind(cls, data):
        if isinstance(data, dict) and isinstance(data.get("geometry"), dict):
            kind = ScenarioKind(data.get("kind"))
            data = dict(data, geometry=GEOMETRY_MODELS[kind].model_validate(data["geometry"]))
        return data

    @model_validator(mode="after")
    def _geometry_matches(self) -> "ScenarioSpec":
        expected = GEOMETRY_MODELS[self.kind]
        if not isinstance(self.geometry, expected):
            raise ValueError(f"{self.kind.value} needs {expected.__name__} geometry")
        return self

    @field_validator("ee_start")
    @classmethod
    def _start(cls, value: List[float]) -> List[float]:
        return _vec3(value, "ee_start")

    @field_validator("m_eff")
    @classmethod
    def _mass(cls, value: List[float]) -> List[float]:
        arr = as_vec3(value, "m_eff")
        if np.any(arr <= 0.0):
            raise ValueError("m_eff must be positive")
        return [float(v) for v in arr]


def load_scenario_file(path: Path) -> ScenarioSpec:
    with open(path, "r", encoding="utf-8") as f:
        return ScenarioSpec.model_validate(json.load(f))


def load_catalog(directory: Optional[Path] = None) -> Dict[str, ScenarioSpec]:
    """Load every scenario JSON in a directory, keyed by scenario id."""
    directory = Path(directory) if directory else SCENARIO_DIR
    catalog: Dict[str, ScenarioSpec] = {}
    for path in sorted(directory.glob("*.json")):
        try:
            spec = load_scenario_file(path)
        except (ValidationError, json.JSONDecodeError) as e:
            logger.error(f"Skipping invalid scenario file {path}: {e}")
            continue
        catalog[spec.id] = spec
    return catalog


def load_scenario(scenario_id: str, directory: Optional[Path] = None) -> ScenarioSpec:
    catalog = load_catalog(directory)
    if scenario_id not in catalog:
        known = ", ".join(sorted(catalog)) or "none"
        raise ScenarioNotFound(f"unknown scenario '{scenario_id}' (known: {known})")
    return catalog[scenario_id]


def resolve_scenarios(selector: str, directory: Optional[Path] = None) -> List[ScenarioSpec]:
    """``all`` selects the benchmark suite; anything else names one scenario."""
    catalog = load_catalog(directory)
    ids = list(BENCHMARK_SUITE) if selector == "all" else [selector]
    missing = [sid for sid in ids if sid not in catalog]
    if missing:
        known = ", ".join(sorted(catalog)) or "none"
        raise ScenarioNotFound(f"unknown scenario '{missing[0]}' (known: {known})")
    return [catalog[sid] for sid in ids]
