"""
Point-mass world with penalty contacts and a simulated wrist sensor.

The end effector is a point mass driven by the commanded wrench. Contacts
are spring-damper penalties with regularized Coulomb friction. Objects (box,
drawer) have their own one-dimensional dynamics; the peg and the placed
object are held rigidly by the end effector.

Sign convention: ``contact_wrench`` is the force the environment exerts on
the end effector, which is also what the wrist sensor reads. Pushing into a
wall in +x therefore senses a negative x force.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np

from app.core.errors import ContractViolation, IntegrationError
from app.models.core_types import (
    Pose,
    Twist,
    Wrench,
    identity_quaternion,
    quat_to_rotation,
    rotvec_to_rotation,
    rotation_to_quat,
)
from app.models.scenario import (
    DrawerGeometry,
    PegGeometry,
    PlaceGeometry,
    PushBoxGeometry,
    ScenarioKind,
    ScenarioSpec,
    SensorModel,
)

logger = logging.getLogger(__name__)

GRAVITY = 9.81
MAX_DT = 0.002
ROTATIONAL_INERTIA = 0.1
GRIPPER_CLOSED = 0.5


@dataclass(frozen=True, eq=False)
class WorldState:
    """
    Full simulator state.

    ``object_position`` is the box centre for PushBox and the handle for
    DrawerSlide; held objects (peg, placed object) coincide with the end
    effector.
    """

    time: float
    ee_position: np.ndarray
    ee_velocity: np.ndarray
    ee_orientation: np.ndarray = field(default_factory=identity_quaternion)
    ee_angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gripper: float = 0.0
    object_position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    object_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    attached: bool = False
    grasp_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    inserted: bool = False

    @property
    def ee_pose(self) -> Pose:
        return Pose(self.ee_position, self.ee_orientation)

    @property
    def ee_twist(self) -> Twist:
        return Twist(self.ee_velocity, self.ee_angular_velocity)


class _Derived:
    """Arrays precomputed from a scenario spec for the stepping loop."""

    def __init__(self, spec: ScenarioSpec):
        self.spec = spec
        self.m_eff = np.asarray(spec.m_eff, dtype=float)
        self.inertia = np.full(3, ROTATIONAL_INERTIA)
        self.k_env = spec.env_stiffness
        self.d_env = spec.env_damping
        self.mu = spec.friction_coefficient
        self.axis = spec.task.primary_motion_axis.index
        g = spec.geometry
        if isinstance(g, PushBoxGeometry):
            self.box_center = np.asarray(g.box_center, dtype=float)
            self.box_half = np.asarray(g.box_half_extents, dtype=float)
        elif isinstance(g, DrawerGeometry):
            self.handle = np.asarray(g.handle_position, dtype=float)
            self.pull = np.asarray(g.pull_direction, dtype=float)
        elif isinstance(g, PegGeometry):
            self.hole = np.asarray(g.hole_center, dtype=float)
        elif isinstance(g, PlaceGeometry):
            self.target_xy = np.asarray(g.target_center, dtype=float)


_DERIVED: Dict[int, _Derived] = {}


def _derived(spec: ScenarioSpec) -> _Derived:
    cached = _DERIVED.get(id(spec))
    if cached is None or cached.spec is not spec:
        if len(_DERIVED) > 64:
            _DERIVED.clear()
        cached = _Derived(spec)
        _DERIVED[id(spec)] = cached
    return cached


def initial_state(spec: ScenarioSpec) -> WorldState:
    ee = np.asarray(spec.ee_start, dtype=float)
    g = spec.geometry
    if isinstance(g, PushBoxGeometry):
        return WorldState(0.0, ee, np.zeros(3), object_position=np.asarray(g.box_center, dtype=float))
    if isinstance(g, DrawerGeometry):
        return WorldState(
            0.0, ee, np.zeros(3), object_position=np.asarray(g.handle_position, dtype=float)
        )
    # peg and placed object start in the closed gripper
    return WorldState(0.0, ee, np.zeros(3), gripper=1.0, object_position=ee.copy(), attached=True)


def _penalty(
    depth: float, normal: np.ndarray, v_rel: np.ndarray, k_env: float, d_env: float, mu: float
) -> np.ndarray:
    """Normal spring-damper force along ``normal`` plus friction opposing tangential slip."""
    if depth <= 0.0:
        return np.zeros(3)
    vn = float(v_rel @ normal)
    fn = k_env * depth + d_env * max(0.0, -vn)
    force = fn * normal
    v_t = v_rel - vn * normal
    speed_t = float(np.linalg.norm(v_t))
    if mu > 0.0 and speed_t > 1e-12:
        force = force - min(mu * fn, d_env * speed_t) * (v_t / speed_t)
    return force


def _peg_inside(state: WorldState, g: PegGeometry, hole: np.ndarray) -> bool:
    if state.ee_position[2] >= hole[2]:
        return False
    radial = math.hypot(state.ee_position[0] - hole[0], state.ee_position[1] - hole[1])
    return state.inserted or radial <= g.clearance


def _contact_terms(state: WorldState, spec: ScenarioSpec) -> Tuple[np.ndarray, np.ndarray]:
    """
    Split the contact force into an explicit part and a per-axis drag coefficient.

    The force on the end effector is ``explicit - drag * v``; the drag part
    is integrated implicitly by ``step``.
    """
    g = spec.geometry
    w = _derived(spec)
    x, v = state.ee_position, state.ee_velocity
    explicit = np.zeros(3)
    drag = np.zeros(3)

    if isinstance(g, PushBoxGeometry):
        a = w.axis
        box = state.object_position
        lateral = [j for j in range(3) if j != a]
        if all(abs(x[j] - box[j]) <= w.box_half[j] for j in lateral):
            depth = x[a] - (box[a] - w.box_half[a])
            normal = np.zeros(3)
            normal[a] = -1.0
            explicit = _penalty(depth, normal, v - state.object_velocity, w.k_env, w.d_env, w.mu)

    elif isinstance(g, DrawerGeometry):
        if state.attached:
            stretch = (state.object_position - x) - state.grasp_offset
            explicit = w.k_env * stretch + w.d_env * (state.object_velocity - v)

    elif isinstance(g, PegGeometry):
        hole = w.hole
        up = np.array([0.0, 0.0, 1.0])
        if _peg_inside(state, g, hole):
            rx, ry = x[0] - hole[0], x[1] - hole[1]
            radial = math.hypot(rx, ry)
            if radial > g.clearance:
                normal = np.array([-rx / radial, -ry / radial, 0.0])
                explicit = explicit + _penalty(radial - g.clearance, normal, v, w.k_env, w.d_env, w.mu)
            bottom = hole[2] - g.hole_depth
            explicit = explicit + _penalty(bottom - x[2], up, v, w.k_env, w.d_env, w.mu)
            inserted_depth = hole[2] - x[2]
            ramp = min(1.0, inserted_depth / g.fit_ramp)
            vz = float(v[2])
            if abs(vz) > 1e-9:
                coulomb = g.fit_friction * math.tanh(vz / g.fit_velocity_scale) / vz
            else:
                coulomb = g.fit_friction / g.fit_velocity_scale
            drag[2] = ramp * (g.fit_drag + coulomb)
        else:
            explicit = _penalty(hole[2] - x[2], up, v, w.k_env, w.d_env, w.mu)

    elif isinstance(g, PlaceGeometry):
        up = np.array([0.0, 0.0, 1.0])
        explicit = _penalty(g.table_height - x[2], up, v, w.k_env, w.d_env, w.mu)

    return explicit, drag


def contact_wrench(state: WorldState, spec: ScenarioSpec) -> Wrench:
    explicit, drag = _contact_terms(state, spec)
    return Wrench(explicit - drag * state.ee_velocity, np.zeros(3))


def _stick_slip(v: float, force: float, friction: float, mass: float, dt: float) -> float:
    """Velocity after one step under Coulomb friction, allowing the body to stick."""
    v_free = v + dt * force / mass
    slip = dt * friction / mass
    if abs(v_free) <= slip:
        return 0.0
    return v_free - math.copysign(slip, v_free)


def _update_grasp(state: WorldState, spec: ScenarioSpec, gripper: float) -> WorldState:
    g = spec.geometry
    if not isinstance(g, DrawerGeometry):
        return replace(state, gripper=gripper)
    if not state.attached and gripper >= GRIPPER_CLOSED:
        gap = state.object_position - state.ee_position
        if float(np.linalg.norm(gap)) <= g.grasp_distance:
            logger.debug(f"Handle grasped at t={state.time:.3f}s")
            return replace(state, gripper=gripper, attached=True, grasp_offset=gap)
    if state.attached and gripper < GRIPPER_CLOSED:
        return replace(state, gripper=gripper, attached=False, grasp_offset=np.zeros(3))
    return replace(state, gripper=gripper)


def step(
    state: WorldState,
    applied: Wrench,
    spec: ScenarioSpec,
    dt: float,
    gripper: Optional[float] = None,
) -> WorldState:
    """
    Advance the world by ``dt`` with semi-implicit Euler.

    Raises:
        ContractViolation: dt outside (0, 0.002]
        IntegrationError: the new state is not finite
    """
    if not (0.0 < dt <= MAX_DT):
        raise ContractViolation(f"dt must lie in (0, {MAX_DT}], got {dt}")
    if gripper is not None and gripper != state.gripper:
        state = _update_grasp(state, spec, gripper)

    w = _derived(spec)
    explicit, drag = _contact_terms(state, spec)
    velocity = (state.ee_velocity + dt * (applied.force + explicit) / w.m_eff) / (
        1.0 + dt * drag / w.m_eff
    )
    position = state.ee_position + dt * velocity

    omega = state.ee_angular_velocity + dt * applied.torque / w.inertia
    orientation = state.ee_orientation
    if np.any(omega != 0.0):
        rotation = rotvec_to_rotation(omega * dt) * quat_to_rotation(orientation)
        orientation = rotation_to_quat(rotation)

    object_position = state.object_position
    object_velocity = state.object_velocity
    inserted = state.inserted
    g = spec.geometry

    if isinstance(g, PushBoxGeometry):
        a = w.axis
        vb = _stick_slip(
            float(object_velocity[a]),
            -float(explicit[a]),
            spec.friction_coefficient * g.box_mass * GRAVITY,
            g.box_mass,
            dt,
        )
        vb = vb / (1.0 + dt * g.sliding_drag / g.box_mass)
        object_velocity = np.zeros(3)
        object_velocity[a] = vb
        object_position = object_position.copy()
        object_position[a] += dt * vb

    elif isinstance(g, DrawerGeometry):
        u = w.pull
        travel = float((object_position - w.handle) @ u)
        vs = float(object_velocity @ u)
        force = -float(explicit @ u) if state.attached else 0.0
        if travel < 0.0:
            force += spec.env_stiffness * -travel + spec.env_damping * max(0.0, -vs)
        elif travel > g.travel_limit:
            force -= spec.env_stiffness * (travel - g.travel_limit) + spec.env_damping * max(0.0, vs)
        vs = _stick_slip(vs, force, g.rail_friction, g.drawer_mass, dt)
        vs = vs / (1.0 + dt * g.damper / g.drawer_mass)
        object_velocity = vs * u
        object_position = object_position + dt * object_velocity

    elif isinstance(g, PegGeometry):
        radial = math.hypot(position[0] - w.hole[0], position[1] - w.hole[1])
        inserted = position[2] < w.hole[2] and (state.inserted or radial <= g.clearance)
        object_position = position
        object_velocity = velocity

    else:
        object_position = position
        object_velocity = velocity

    if not (
        np.all(np.isfinite(position))
        and np.all(np.isfinite(velocity))
        and np.all(np.isfinite(omega))
        and np.all(np.isfinite(object_position))
    ):
        raise IntegrationError(f"non-finite state at t={state.time + dt:.4f}s")

    return replace(
        state,
        time=state.time + dt,
        ee_position=position,
        ee_velocity=velocity,
        ee_orientation=orientation,
        ee_angular_velocity=omega,
        object_position=object_position,
        object_velocity=object_velocity,
        inserted=inserted,
    )


class ForceTorqueSensor:
    """Seeded wrist sensor; noise is drawn in call order."""

    def __init__(self, model: SensorModel, seed: Optional[int] = None):
        self.model = model
        self.seed = model.seed if seed is None else seed
        self._bias = np.asarray(model.bias, dtype=float)
        self._rng = np.random.default_rng(self.seed)

    def read(self, true_force: np.ndarray) -> Wrench:
        force = true_force + self._bias
        torque = np.zeros(3)
        if self.model.noise_std > 0.0:
            noise = self._rng.normal(0.0, self.model.noise_std, 6)
            force = force + noise[:3]
            torque = torque + noise[3:]
        return Wrench(force, torque)


def sense(state: WorldState, spec: ScenarioSpec, sensor: ForceTorqueSensor) -> Wrench:
    return sensor.read(contact_wrench(state, spec).force)


def push_displacement(state: WorldState, spec: ScenarioSpec) -> float:
    g = spec.geometry
    a = spec.task.primary_motion_axis.index
    return float(state.object_position[a] - g.box_center[a])


def drawer_travel(state: WorldState, spec: ScenarioSpec) -> float:
    g = spec.geometry
    return float((state.object_position - np.asarray(g.handle_position)) @ np.asarray(g.pull_direction))


def check_success(state: WorldState, spec: ScenarioSpec) -> bool:
    g = spec.geometry
    if isinstance(g, PushBoxGeometry):
        return push_displacement(state, spec) >= g.goal_distance
    if isinstance(g, DrawerGeometry):
        return drawer_travel(state, spec) >= g.travel_goal - g.tolerance
    if isinstance(g, PegGeometry):
        if not state.inserted:
            return False
        depth = g.hole_center[2] - state.ee_position[2]
        radial = math.hypot(
            state.ee_position[0] - g.hole_center[0], state.ee_position[1] - g.hole_center[1]
        )
        return abs(depth - g.insertion_depth) <= g.tolerance and radial <= g.clearance
    if isinstance(g, PlaceGeometry):
        x = state.ee_position
        lateral = math.hypot(x[0] - g.target_center[0], x[1] - g.target_center[1])
        speed = float(np.linalg.norm(state.ee_velocity))
        return (
            abs(x[2] - g.table_height) <= g.tolerance
            and lateral <= g.target_radius
            and speed <= g.settle_speed
        )
    return False

