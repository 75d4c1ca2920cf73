"""
Multi-rate episode executor.

Everything runs on a virtual clock of integer control ticks. Each tick the
loop senses, updates the safety monitor, detects the phase, computes gains
and the control wrench, and steps the world. Every chunk period it requests
a policy chunk, and every few chunks (adaptor mode) it asks the advisor.
"""

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.spatial.transform import Rotation, Slerp

from app.core.errors import ContractViolation
from app.models.core_types import (
    ActionChunk,
    ActionCommand,
    ContactPhase,
    ImpedanceParams,
    ImpedanceRange,
    ObservationFrame,
    Pose,
    Twist,
    VecLike,
    Wrench,
    as_vec3,
    quat_to_rotation,
    rotvec_to_rotation,
    rotation_to_quat,
)
from app.models.records import EpisodeOutcome, EpisodeRecord, EpisodeResult, Mode
from app.models.scenario import ScenarioSpec
from app.services.advisor_service import (
    AdvisorBackend,
    AdvisorContext,
    AdvisorWorker,
    HeuristicBackend,
    LatestMailbox,
    advise,
)
from app.services.impedance_law import GainConstants, adaptor_gains, baseline_gains, control_wrench
from app.services.phase_detector import PhaseConfig, PhaseDetector, fuse
from app.services.policy_service import Policy, PolicyHandle, make_policy
from app.services.safety_monitor import SafetyConfig, SafetyMonitor, SafetyState
from app.services.sim_world import ForceTorqueSensor, check_success, initial_state, sense, step

logger = logging.getLogger(__name__)


class RateConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    control_hz: float = Field(default=1000.0, gt=0.0)
    policy_hz: float = Field(default=1.0 / 0.3, gt=0.0)
    advisor_every_n_chunks: int = Field(default=2, ge=1)
    chunk_keep: int = Field(default=2, ge=1)
    action_clip: List[float] = Field(default_factory=lambda: [0.02, 0.02, 0.02])
    substeps_per_action: Optional[int] = Field(default=None, ge=1)
    record_decimation: int = Field(default=10, ge=1)
    gain_slew_time: float = Field(default=0.05, ge=0.0)
    advisor_async: bool = False
    realtime: bool = False

    @field_validator("action_clip", mode="before")
    @classmethod
    def _broadcast_clip(cls, value):
        if isinstance(value, (int, float)):
            return [float(value)] * 3
        return value

    @field_validator("action_clip")
    @classmethod
    def _positive_clip(cls, value: List[float]) -> List[float]:
        arr = as_vec3(value, "action_clip")
        if np.any(arr <= 0.0):
            raise ValueError("action_clip must be positive")
        return [float(v) for v in arr]

    @model_validator(mode="after")
    def _rates_ordered(self) -> "RateConfig":
        if self.policy_hz > self.control_hz:
            raise ValueError("policy rate cannot exceed the control rate")
        return self

    @property
    def dt(self) -> float:
        return 1.0 / self.control_hz

    @property
    def ticks_per_chunk(self) -> int:
        return max(1, int(round(self.control_hz / self.policy_hz)))

    @property
    def substeps(self) -> int:
        if self.substeps_per_action is not None:
            return self.substeps_per_action
        return max(1, self.ticks_per_chunk // self.chunk_keep)

    def ticks_for(self, duration: float) -> int:
        return int(math.floor(duration * self.control_hz + 1e-9))


def clip_action(cmd: ActionCommand, clip: VecLike) -> ActionCommand:
    clip = np.asarray(clip, dtype=float)
    if np.any(clip <= 0.0):
        raise ContractViolation("clip bounds must be positive")
    return ActionCommand(np.clip(cmd.delta_position, -clip, clip), cmd.delta_orientation, cmd.gripper)


def truncate_chunk(chunk: ActionChunk, keep: int) -> ActionChunk:
    if keep < 1:
        raise ContractViolation(f"keep must be at least 1, got {keep}")
    return ActionChunk(seq=chunk.seq, actions=chunk.actions[:keep])


def _interpolate_arrays(
    from_position: np.ndarray, from_orientation: np.ndarray, chunk: ActionChunk, substeps: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Setpoint positions, quaternions and grippers, ``substeps`` per action."""
    if substeps < 1:
        raise ContractViolation(f"substeps must be at least 1, got {substeps}")
    n = chunk.horizon * substeps
    positions = np.empty((n, 3))
    quats = np.empty((n, 4))
    grippers = np.empty(n)
    fractions = np.arange(1, substeps + 1) / substeps
    start_p = np.asarray(from_position, dtype=float)
    start_q = np.asarray(from_orientation, dtype=float)
    for i, action in enumerate(chunk.actions):
        rows = slice(i * substeps, (i + 1) * substeps)
        end_p = start_p + action.delta_position
        positions[rows] = start_p + fractions[:, None] * (end_p - start_p)
        positions[(i + 1) * substeps - 1] = end_p
        if np.any(action.delta_orientation != 0.0):
            r0 = quat_to_rotation(start_q)
            r1 = rotvec_to_rotation(action.delta_orientation) * r0
            slerp = Slerp([0.0, 1.0], Rotation.concatenate([r0, r1]))
            x, y, z, w = slerp(fractions).as_quat().T
            segment = np.stack([w, x, y, z], axis=1)
            segment[segment[:, 0] < 0.0] *= -1.0
            quats[rows] = segment
            end_q = rotation_to_quat(r1)
            quats[(i + 1) * substeps - 1] = end_q
        else:
            quats[rows] = start_q
            end_q = start_q
        grippers[rows] = action.gripper
        start_p, start_q = end_p, end_q
    return positions, quats, grippers


def interpolate_chunk(from_pose: Pose, chunk: ActionChunk, substeps_per_action: int) -> List[Pose]:
    positions, quats, _ = _interpolate_arrays(
        from_pose.position, from_pose.orientation, chunk, substeps_per_action
    )
    return [Pose(p, q) for p, q in zip(positions, quats)]


def orientation_error(q_desired: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Rotation vector taking ``q`` to ``q_desired``."""
    if np.array_equal(q_desired, q):
        return np.zeros(3)
    return (quat_to_rotation(q_desired) * quat_to_rotation(q).inv()).as_rotvec()


class GainSlew:
    """Linear ramp from the current stiffness to a new target."""

    def __init__(self, initial: np.ndarray, duration: float):
        self.duration = duration
        self._start = np.asarray(initial, dtype=float)
        self._target = self._start
        self._t0 = 0.0

    def retarget(self, target: np.ndarray, t: float) -> None:
        self._start = self.value(t)
        self._target = np.asarray(target, dtype=float)
        self._t0 = t

    def value(self, t: float) -> np.ndarray:
        if self.duration <= 0.0 or t >= self._t0 + self.duration:
            return self._target
        fraction = (t - self._t0) / self.duration
        return self._start + fraction * (self._target - self._start)


class SetpointStream:
    """Dense setpoints for the control loop; holds the last one when exhausted."""

    def __init__(self, position: np.ndarray, orientation: np.ndarray, gripper: float):
        self.position = np.asarray(position, dtype=float)
        self.orientation = np.asarray(orientation, dtype=float)
        self.velocity = np.zeros(3)
        self.angular_velocity = np.zeros(3)
        self.gripper = gripper
        self._positions = np.empty((0, 3))
        self._quats = np.empty((0, 4))
        self._grippers = np.empty(0)
        self._velocities = np.empty((0, 3))
        self._angular = np.empty((0, 3))
        self._index = 0

    def load(self, chunk: ActionChunk, substeps: int, dt: float) -> None:
        positions, quats, grippers = _interpolate_arrays(
            self.position, self.orientation, chunk, substeps
        )
        segment_time = substeps * dt
        self._velocities = np.repeat(
            np.stack([a.delta_position for a in chunk.actions]) / segment_time, substeps, axis=0
        )
        self._angular = np.repeat(
            np.stack([a.delta_orientation for a in chunk.actions]) / segment_time, substeps, axis=0
        )
        self._positions, self._quats, self._grippers = positions, quats, grippers
        self._index = 0

    def advance(self) -> None:
        i = self._index
        if i < len(self._positions):
            self.position = self._positions[i]
            self.orientation = self._quats[i]
            self.velocity = self._velocities[i]
            self.angular_velocity = self._angular[i]
            self.gripper = float(self._grippers[i])
            self._index = i + 1
        else:
            self.velocity = np.zeros(3)
            self.angular_velocity = np.zeros(3)

    def to_list(self) -> List[float]:
        return [float(v) for v in self.position] + [float(v) for v in self.orientation]


class EpisodeRunner:
    """Runs one episode of a scenario in baseline or adaptor mode."""

    def __init__(
        self,
        spec: ScenarioSpec,
        policy: Policy,
        advisor_backend: Optional[AdvisorBackend],
        mode: Mode,
        cfg: RateConfig,
        seed: int,
        safety_config: Optional[SafetyConfig] = None,
        phase_config: Optional[PhaseConfig] = None,
        impedance_range: Optional[ImpedanceRange] = None,
        trial: int = 0,
    ):
        self.spec = spec
        self.policy = policy
        self.backend = advisor_backend or HeuristicBackend()
        self.mode = Mode(mode)
        self.cfg = cfg
        self.seed = seed
        self.trial = trial
        self.safety_config = (safety_config or SafetyConfig()).for_task(spec.task.force_threshold)
        self.phase_config = phase_config or PhaseConfig()
        self.impedance_range = impedance_range or spec.impedance_range
        self.constants = GainConstants(m_eff=np.asarray(spec.m_eff))

    def _record(
        self,
        t: float,
        phase: ContactPhase,
        wrench: Wrench,
        params: ImpedanceParams,
        alpha: float,
        position: np.ndarray,
        orientation: np.ndarray,
        setpoint: List[float],
        source: str,
        safety_state: SafetyState,
    ) -> EpisodeRecord:
        return EpisodeRecord(
            t=t,
            task_id=self.spec.task.id,
            mode=self.mode,
            phase=phase,
            wrench=wrench.to_list(),
            k=[float(v) for v in params.k],
            d=[float(v) for v in params.d],
            alpha=alpha,
            pose=[float(v) for v in position] + [float(v) for v in orientation],
            setpoint=setpoint,
            advisor_source=source,
            safety_state=safety_state.value,
        )

    def run(self) -> EpisodeResult:
        spec, cfg = self.spec, self.cfg
        adaptor = self.mode is Mode.ADAPTOR
        dt = cfg.dt
        per_chunk = cfg.ticks_per_chunk
        substeps = cfg.substeps
        clip = np.asarray(cfg.action_clip)
        max_ticks = cfg.ticks_for(spec.task.time_limit)

        state = initial_state(spec)
        sensor = ForceTorqueSensor(spec.sensor, seed=self.seed)
        safety = SafetyMonitor(self.safety_config)
        detector = PhaseDetector(self.phase_config)
        mailbox = LatestMailbox()
        worker = AdvisorWorker(self.backend, mailbox) if adaptor and cfg.advisor_async else None
        self.policy.reset(self.seed)

        rng = self.impedance_range
        fixed = baseline_gains(rng.k_max_array, self.constants)
        slew = GainSlew(rng.k_max_array, cfg.gain_slew_time)
        source = "none"
        semantic: Optional[ContactPhase] = None
        sensed_phase = ContactPhase.FREE_MOTION
        setpoints = SetpointStream(state.ee_position, state.ee_orientation, state.gripper)

        records: List[EpisodeRecord] = []
        last_row: Optional[tuple] = None
        ticks = chunks = queries = 0
        outcome: Optional[EpisodeOutcome] = None
        diagnostic: Optional[str] = None
        wall_start = time.monotonic()

        logger.info(
            f"Episode start: {spec.id} mode={self.mode.value} seed={self.seed} trial={self.trial}"
        )
        if check_success(state, spec):
            outcome = EpisodeOutcome.SUCCESS

        try:
            while outcome is None and ticks < max_ticks:
                tick = ticks
                t = tick * dt

                advice = mailbox.take()
                if advice is not None:
                    slew.retarget(advice.k, t)
                    semantic = advice.phase_claim
                    source = advice.source.value + ("_fallback" if advice.fallback else "")

                wrench = sense(state, spec, sensor)
                status = safety.update(wrench)
                obs = ObservationFrame(t, state.ee_pose, state.ee_twist, wrench, state.gripper)
                sensed_phase = detector.detect(obs, spec.task, sensed_phase)
                phase = fuse(semantic, sensed_phase)

                if adaptor:
                    alpha = safety.alpha(wrench)
                    params = adaptor_gains(
                        slew.value(t), alpha, self.constants, self.safety_config.alpha_min
                    )
                else:
                    alpha = 1.0
                    params = fixed

                if status.state is SafetyState.TERMINATED:
                    outcome = EpisodeOutcome.FAILED_FORCE
                    records.append(
                        self._record(
                            t, phase, wrench, params, alpha, state.ee_position,
                            state.ee_orientation, setpoints.to_list(), source, status.state,
                        )
                    )
                    last_row = None
                    break

                if tick % per_chunk == 0:
                    chunk = self.policy.next_chunk(obs)
                    chunks += 1
                    chunk = truncate_chunk(chunk, cfg.chunk_keep)
                    chunk = ActionChunk(
                        seq=chunk.seq, actions=tuple(clip_action(a, clip) for a in chunk.actions)
                    )
                    setpoints.load(chunk, substeps, dt)
                    logger.debug(f"Chunk {chunk.seq} at t={t:.3f}s ({chunk.horizon} actions)")
                    if cfg.realtime:
                        lag = t - (time.monotonic() - wall_start)
                        if lag > 0.0:
                            time.sleep(lag)

                    if adaptor and (chunks - 1) % cfg.advisor_every_n_chunks == 0:
                        ctx = AdvisorContext(spec.task, phase, obs.twist, wrench, rng)
                        queries += 1
                        if worker is not None:
                            worker.submit(ctx)
                        else:
                            mailbox.put(advise(ctx, self.backend))

                setpoints.advance()
                control = control_wrench(
                    params,
                    (
                        setpoints.position - state.ee_position,
                        orientation_error(setpoints.orientation, state.ee_orientation),
                    ),
                    (
                        setpoints.velocity - state.ee_velocity,
                        setpoints.angular_velocity - state.ee_angular_velocity,
                    ),
                )

                row = (
                    t, phase, wrench, params, alpha, state.ee_position,
                    state.ee_orientation, setpoints.to_list(), source, status.state,
                )
                if tick % cfg.record_decimation == 0 or status.consecutive_violations > 0:
                    records.append(self._record(*row))
                    last_row = None
                else:
                    last_row = row

                state = step(state, control, spec, dt, gripper=setpoints.gripper)
                ticks += 1
                if check_success(state, spec):
                    outcome = EpisodeOutcome.SUCCESS
        except Exception as e:
            outcome = EpisodeOutcome.FAILED_DIVERGED
            diagnostic = f"{type(e).__name__}: {e}"
            logger.warning(f"Episode {spec.id} diverged at tick {ticks}: {diagnostic}")
        finally:
            if worker is not None:
                worker.close()

        if last_row is not None:
            records.append(self._record(*last_row))
        if outcome is None:
            outcome = EpisodeOutcome.FAILED_TIMEOUT

        status = safety.status
        result = EpisodeResult(
            scenario_id=spec.id,
            mode=self.mode,
            seed=self.seed,
            trial=self.trial,
            outcome=outcome,
            duration=ticks * dt,
            peak_force=status.peak_force,
            violation_total=status.violation_total,
            control_ticks=ticks,
            chunks=chunks,
            advisor_queries=queries,
            diagnostic=diagnostic,
            records=records,
        )
        logger.info(
            f"Episode end: {spec.id} mode={self.mode.value} outcome={outcome.value} "
            f"t={result.duration:.3f}s peak={result.peak_force:.2f}N"
        )
        return result


def run_episode(
    spec: ScenarioSpec,
    policy: Policy,
    advisor_backend: Optional[AdvisorBackend],
    mode: Mode,
    cfg: RateConfig,
    seed: int,
    **options,
) -> EpisodeResult:
    return EpisodeRunner(spec, policy, advisor_backend, mode, cfg, seed, **options).run()


def trial_seed(seed: int, trial: int) -> int:
    """Per-trial seed; baseline and adaptor share it so trials are paired."""
    return int(np.random.SeedSequence([seed, trial]).generate_state(1)[0])


@dataclass(frozen=True)
class TrialJob:
    spec: ScenarioSpec
    mode: Mode
    trial: int
    seed: int
    policy: PolicyHandle
    advisor: str
    rates: RateConfig
    safety: SafetyConfig
    phase: PhaseConfig
    impedance_range: Optional[ImpedanceRange] = None


def make_backend(kind: str) -> AdvisorBackend:
    if kind == "remote":
        from app.services.llm_service import RemoteAdvisorBackend

        return RemoteAdvisorBackend()
    return HeuristicBackend()


def run_trial(job: TrialJob) -> EpisodeResult:
    policy = make_policy(job.policy)
    backend = make_backend(job.advisor) if job.mode is Mode.ADAPTOR else None
    try:
        return run_episode(
            job.spec,
            policy,
            backend,
            job.mode,
            job.rates,
            trial_seed(job.seed, job.trial),
            safety_config=job.safety,
            phase_config=job.phase,
            impedance_range=job.impedance_range,
            trial=job.trial,
        )
    finally:
        policy.close()
        if backend is not None:
            backend.close()


def run_benchmark(jobs: List[TrialJob], workers: int = 1) -> List[EpisodeResult]:
    """Run independent trials, merging results in (scenario, mode, trial) order."""
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_trial, jobs))
    else:
        results = [run_trial(job) for job in jobs]
    order: Dict[str, int] = {}
    for job in jobs:
        order.setdefault(job.spec.id, len(order))
    return sorted(results, key=lambda r: (order[r.scenario_id], r.mode.value, r.trial))
