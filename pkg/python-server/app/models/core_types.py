"""
Shared value types for the compliant control stack.

Vectors are numpy arrays of shape (3,) in SI units. Frozen dataclasses hold
read-only copies so values passed between the control loop, the advisor and
the logger cannot be mutated behind a consumer's back.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.transform import Rotation
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

VecLike = Union[Sequence[float], np.ndarray]

QUAT_TOLERANCE = 1e-9


def as_vec3(value: VecLike, name: str = "vector") -> np.ndarray:
    """Return a read-only float copy of a 3-vector, rejecting bad shapes and non-finite values."""
    arr = np.array(value, dtype=float)
    if arr.shape != (3,):
        raise ValueError(f"{name} must have 3 components, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite components: {arr.tolist()}")
    arr.setflags(write=False)
    return arr


def zeros3() -> np.ndarray:
    return as_vec3(np.zeros(3))


def identity_quaternion() -> np.ndarray:
    q = np.array([1.0, 0.0, 0.0, 0.0])
    q.setflags(write=False)
    return q


def normalize_quaternion(value: VecLike) -> np.ndarray:
    """Validate a (w, x, y, z) quaternion and renormalize it when it drifts."""
    q = np.array(value, dtype=float)
    if q.shape != (4,) or not np.all(np.isfinite(q)):
        raise ValueError(f"orientation must be 4 finite numbers, got {q.tolist()}")
    norm = float(np.linalg.norm(q))
    if norm < 1e-12:
        raise ValueError("orientation quaternion has zero norm")
    if abs(norm - 1.0) > QUAT_TOLERANCE:
        q = q / norm
    q.setflags(write=False)
    return q


def quat_to_rotation(q: VecLike) -> Rotation:
    """Rotation from a (w, x, y, z) quaternion; scipy stores the scalar last."""
    w, x, y, z = q
    return Rotation.from_quat([x, y, z, w])


def rotvec_to_rotation(v: VecLike) -> Rotation:
    """Rotation from a rotation vector; scipy needs a writable buffer."""
    return Rotation.from_rotvec(np.array(v, dtype=float))


def rotation_to_quat(r: Rotation) -> np.ndarray:
    x, y, z, w = r.as_quat()
    q = np.array([w, x, y, z])
    if w < 0.0:
        q = -q
    return q


class Axis(str, Enum):
    X = "x"
    Y = "y"
    Z = "z"

    @property
    def index(self) -> int:
        return "xyz".index(self.value)

    @property
    def unit(self) -> np.ndarray:
        e = np.zeros(3)
        e[self.index] = 1.0
        return e


class ContactPhase(str, Enum):
    """Interaction phase of the end effector with its environment."""

    FREE_MOTION = "free_motion"
    APPROACHING = "approaching"
    CONTACT = "contact"
    RETREAT = "retreat"

    @property
    def label(self) -> str:
        """Name used in advisor prompts and responses."""
        return _PHASE_LABELS[self]


_PHASE_LABELS = {
    ContactPhase.FREE_MOTION: "Free_motion",
    ContactPhase.APPROACHING: "Approaching",
    ContactPhase.CONTACT: "Contact",
    ContactPhase.RETREAT: "Retreat",
}


@dataclass(frozen=True, eq=False)
class Pose:
    position: np.ndarray
    orientation: np.ndarray = field(default_factory=identity_quaternion)

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", as_vec3(self.position, "position"))
        object.__setattr__(self, "orientation", normalize_quaternion(self.orientation))

    def to_list(self) -> List[float]:
        """Position followed by the (w, x, y, z) quaternion."""
        return [float(v) for v in self.position] + [float(v) for v in self.orientation]

    @classmethod
    def from_list(cls, values: Sequence[float]) -> "Pose":
        if len(values) != 7:
            raise ValueError(f"pose needs 7 numbers, got {len(values)}")
        return cls(np.asarray(values[:3]), np.asarray(values[3:]))


@dataclass(frozen=True, eq=False)
class Twist:
    linear: np.ndarray = field(default_factory=zeros3)
    angular: np.ndarray = field(default_factory=zeros3)

    def __post_init__(self) -> None:
        object.__setattr__(self, "linear", as_vec3(self.linear, "linear"))
        object.__setattr__(self, "angular", as_vec3(self.angular, "angular"))

    def to_list(self) -> List[float]:
        return [float(v) for v in self.linear] + [float(v) for v in self.angular]

    @classmethod
    def from_list(cls, values: Sequence[float]) -> "Twist":
        if len(values) != 6:
            raise ValueError(f"twist needs 6 numbers, got {len(values)}")
        return cls(np.asarray(values[:3]), np.asarray(values[3:]))


@dataclass(frozen=True, eq=False)
class Wrench:
    force: np.ndarray = field(default_factory=zeros3)
    torque: np.ndarray = field(default_factory=zeros3)

    def __post_init__(self) -> None:
        object.__setattr__(self, "force", as_vec3(self.force, "force"))
        object.__setattr__(self, "torque", as_vec3(self.torque, "torque"))

    def to_list(self) -> List[float]:
        return [float(v) for v in self.force] + [float(v) for v in self.torque]

    @classmethod
    def from_list(cls, values: Sequence[float]) -> "Wrench":
        if len(values) != 6:
            raise ValueError(f"wrench needs 6 numbers, got {len(values)}")
        return cls(np.asarray(values[:3]), np.asarray(values[3:]))


def wrench_force_magnitude(w: Wrench) -> float:
    """Euclidean norm of the force part."""
    return float(np.linalg.norm(w.force))


def max_axis_force(w: Wrench) -> float:
    """Largest absolute force component."""
    return float(np.max(np.abs(w.force)))


@dataclass(frozen=True, eq=False)
class ImpedanceParams:
    """Translational and rotational gains, per axis."""

    k: np.ndarray
    d: np.ndarray
    k_o: np.ndarray
    d_o: np.ndarray

    def __post_init__(self) -> None:
        for name in ("k", "d", "k_o", "d_o"):
            value = as_vec3(getattr(self, name), name)
            if np.any(value < 0.0):
                raise ValueError(f"{name} must be non-negative, got {value.tolist()}")
            object.__setattr__(self, name, value)


class ImpedanceRange(BaseModel):
    """Per-axis stiffness bounds and the damping band as fractions of stiffness."""

    model_config = ConfigDict(frozen=True)

    k_min: List[float] = Field(default_factory=lambda: [50.0, 50.0, 50.0])
    k_max: List[float] = Field(default_factory=lambda: [1000.0, 1000.0, 1000.0])
    damping_fraction_min: float = 0.10
    damping_fraction_max: float = 0.20

    @field_validator("k_min", "k_max", mode="before")
    @classmethod
    def _broadcast(cls, value):
        if isinstance(value, (int, float)):
            return [float(value)] * 3
        return value

    @field_validator("k_min", "k_max")
    @classmethod
    def _three_finite(cls, value: List[float]) -> List[float]:
        arr = as_vec3(value, "stiffness bound")
        if np.any(arr <= 0.0):
            raise ValueError("stiffness bounds must be positive")
        return [float(v) for v in arr]

    @model_validator(mode="after")
    def _ordered(self) -> "ImpedanceRange":
        if any(lo > hi for lo, hi in zip(self.k_min, self.k_max)):
            raise ValueError(f"k_min {self.k_min} exceeds k_max {self.k_max}")
        if not 0.0 <= self.damping_fraction_min <= self.damping_fraction_max:
            raise ValueError("damping fractions must satisfy 0 <= min <= max")
        return self

    @property
    def k_min_array(self) -> np.ndarray:
        return np.asarray(self.k_min, dtype=float)

    @property
    def k_max_array(self) -> np.ndarray:
        return np.asarray(self.k_max, dtype=float)

    @property
    def damping_fraction_mid(self) -> float:
        return 0.5 * (self.damping_fraction_min + self.damping_fraction_max)


def validate_impedance(p: ImpedanceParams, rng: ImpedanceRange) -> bool:
    """True iff every stiffness lies in range and every damping in its band of that stiffness."""
    k_ok = np.all(p.k >= rng.k_min_array) and np.all(p.k <= rng.k_max_array)
    d_lo = rng.damping_fraction_min * p.k
    d_hi = rng.damping_fraction_max * p.k
    tol = 1e-9 * np.maximum(1.0, p.k)
    d_ok = np.all(p.d >= d_lo - tol) and np.all(p.d <= d_hi + tol)
    return bool(k_ok and d_ok)


class TaskSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    instruction: str
    primary_motion_axis: Axis
    force_threshold: float = Field(default=30.0, gt=0.0)
    time_limit: float = Field(gt=0.0)
    target_position: Optional[List[float]] = None

    @field_validator("target_position")
    @classmethod
    def _target(cls, value: Optional[List[float]]) -> Optional[List[float]]:
        if value is None:
            return None
        return [float(v) for v in as_vec3(value, "target_position")]


@dataclass(frozen=True, eq=False)
class ObservationFrame:
    timestamp: float
    pose: Pose
    twist: Twist
    wrench: Wrench
    gripper: float = 0.0
    images: Optional[Dict[str, bytes]] = None


@dataclass(frozen=True, eq=False)
class ActionCommand:
    """Relative end-effector motion; orientation delta is a rotation vector."""

    delta_position: np.ndarray
    delta_orientation: np.ndarray = field(default_factory=zeros3)
    gripper: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "delta_position", as_vec3(self.delta_position, "delta_position")
        )
        object.__setattr__(
            self, "delta_orientation", as_vec3(self.delta_orientation, "delta_orientation")
        )
        if not np.isfinite(self.gripper):
            raise ValueError("gripper must be finite")

    def to_list(self) -> List[float]:
        return (
            [float(v) for v in self.delta_position]
            + [float(v) for v in self.delta_orientation]
            + [float(self.gripper)]
        )

    @classmethod
    def from_list(cls, values: Sequence[float]) -> "ActionCommand":
        if len(values) != 7:
            raise ValueError(f"action needs 7 numbers, got {len(values)}")
        return cls(np.asarray(values[:3]), np.asarray(values[3:6]), float(values[6]))


@dataclass(frozen=True, eq=False)
class ActionChunk:
    seq: int
    actions: Tuple[ActionCommand, ...]

    def __post_init__(self) -> None:
        actions = tuple(self.actions)
        if not actions:
            raise ValueError("an action chunk needs at least one action")
        object.__setattr__(self, "actions", actions)

    @property
    def horizon(self) -> int:
        return len(self.actions)
