import math

import numpy as np
import pytest

from app.core.errors import ContractViolation
from app.models.core_types import ActionChunk, ActionCommand, ContactPhase, Pose
from app.models.records import EpisodeOutcome, Mode
from app.services.advisor_service import AdvisorBackend
from app.services.orchestrator import (
    GainSlew,
    RateConfig,
    clip_action,
    interpolate_chunk,
    run_episode,
    trial_seed,
    truncate_chunk,
)
from app.services.policy_service import Policy, PolicyHandle, PolicyKind, ScriptedPolicy


def _chunk(*deltas, seq=1):
    return ActionChunk(seq=seq, actions=tuple(ActionCommand(np.asarray(d, dtype=float)) for d in deltas))


def test_rate_defaults():
    cfg = RateConfig()
    assert cfg.ticks_per_chunk == 300
    assert cfg.substeps == 150
    assert cfg.dt == pytest.approx(0.001)
    with pytest.raises(ValueError):
        RateConfig(policy_hz=2000.0)


def test_clip_action():
    clipped = clip_action(ActionCommand(np.array([0.05, -0.03, 0.01])), [0.02, 0.02, 0.02])
    assert clipped.delta_position.tolist() == pytest.approx([0.02, -0.02, 0.01])
    with pytest.raises(ContractViolation):
        clip_action(ActionCommand(np.zeros(3)), [0.0, 0.02, 0.02])


def test_truncate_chunk():
    chunk = _chunk([0.01, 0, 0], [0.02, 0, 0], [0.03, 0, 0], seq=4)
    kept = truncate_chunk(chunk, 2)
    assert kept.seq == 4
    assert kept.horizon == 2
    assert truncate_chunk(chunk, 10).horizon == 3
    with pytest.raises(ContractViolation):
        truncate_chunk(chunk, 0)


def test_interpolation_endpoints_and_spacing():
    start = Pose(np.array([0.1, 0.0, 0.0]))
    poses = interpolate_chunk(start, _chunk([0.01, 0, 0], [0.0, 0.02, 0]), 4)
    assert len(poses) == 8
    assert poses[3].position.tolist() == pytest.approx([0.11, 0.0, 0.0])
    assert poses[7].position.tolist() == pytest.approx([0.11, 0.02, 0.0])
    assert poses[0].position[0] == pytest.approx(0.1025)
    previous = start.position
    for pose in poses:
        assert np.all(np.abs(pose.position - previous) <= 0.02 / 4 + 1e-12)
        previous = pose.position


def test_interpolation_slerps_orientation():
    start = Pose(np.zeros(3))
    chunk = ActionChunk(seq=1, actions=(ActionCommand(np.zeros(3), np.array([0.0, 0.0, 0.4])),))
    poses = interpolate_chunk(start, chunk, 4)
    half = poses[1].orientation
    assert half.tolist() == pytest.approx([math.cos(0.1), 0.0, 0.0, math.sin(0.1)])
    assert poses[-1].orientation.tolist() == pytest.approx([math.cos(0.2), 0.0, 0.0, math.sin(0.2)])


def test_gain_slew():
    slew = GainSlew(np.full(3, 1000.0), 0.05)
    slew.retarget(np.full(3, 200.0), 1.0)
    assert slew.value(1.0).tolist() == [1000.0] * 3
    assert slew.value(1.025).tolist() == pytest.approx([600.0] * 3)
    assert slew.value(2.0).tolist() == [200.0] * 3


def test_trial_seeds_are_stable_and_distinct():
    assert trial_seed(7, 0) == trial_seed(7, 0)
    assert len({trial_seed(7, t) for t in range(10)}) == 10


def _noisy(spec, noise=0.0005):
    return ScriptedPolicy(PolicyHandle.for_scenario(spec, kind=PolicyKind.SCRIPTED_NOISY, noise_std=noise))


def test_rate_bookkeeping_over_six_seconds(free_space_spec):
    result = run_episode(free_space_spec, _noisy(free_space_spec), None, Mode.ADAPTOR, RateConfig(), 1)
    assert result.outcome is EpisodeOutcome.FAILED_TIMEOUT
    assert result.control_ticks == 6000
    assert abs(result.chunks - 20) <= 1
    assert result.advisor_queries == math.ceil(result.chunks / 2)
    times = [r.t for r in result.records]
    assert times == sorted(times)
    assert times[0] == 0.0
    assert times[-1] == pytest.approx(5.999)


def test_full_rate_log_records_every_tick(free_space_spec):
    spec = free_space_spec.model_copy(
        update={"task": free_space_spec.task.model_copy(update={"time_limit": 0.5})}
    )
    result = run_episode(spec, _noisy(spec), None, Mode.BASELINE, RateConfig(record_decimation=1), 1)
    assert len(result.records) == 500
    assert result.advisor_queries == 0
    assert all(r.advisor_source == "none" and r.alpha == 1.0 for r in result.records)
    assert all(r.k == [1000.0] * 3 for r in result.records)


def test_same_seed_is_deterministic(push_box):
    spec = push_box.model_copy(update={"task": push_box.task.model_copy(update={"time_limit": 2.0})})
    runs = [
        run_episode(spec, _noisy(spec), None, Mode.ADAPTOR, RateConfig(), 9).model_dump_json()
        for _ in range(2)
    ]
    assert runs[0] == runs[1]


class _StillPolicy(Policy):
    def __init__(self):
        super().__init__(PolicyHandle())

    def reset(self, seed=None):
        pass

    def next_chunk(self, obs):
        return _chunk([0.0, 0.0, 0.0], [0.0, 0.0, 0.0])


def test_zero_motion_holds_pose_without_violations(free_space_spec):
    spec = free_space_spec.model_copy(
        update={"task": free_space_spec.task.model_copy(update={"time_limit": 1.0})}
    )
    result = run_episode(spec, _StillPolicy(), None, Mode.ADAPTOR, RateConfig(), 0)
    assert result.outcome is EpisodeOutcome.FAILED_TIMEOUT
    assert result.violation_total == 0
    assert result.records[-1].pose[:3] == pytest.approx([0.0, 0.0, 0.0], abs=1e-12)


def test_episode_starting_at_goal_succeeds_immediately(catalog):
    spec = catalog["fragile_place"]
    at_goal = spec.model_copy(update={"ee_start": [0.03, 0.0, 0.0]})
    result = run_episode(at_goal, _StillPolicy(), None, Mode.BASELINE, RateConfig(), 0)
    assert result.outcome is EpisodeOutcome.SUCCESS
    assert result.duration == 0.0
    assert result.control_ticks == 0


class _FailingPolicy(_StillPolicy):
    def next_chunk(self, obs):
        raise RuntimeError("policy crashed")


def test_policy_failure_is_diverged(free_space_spec):
    result = run_episode(free_space_spec, _FailingPolicy(), None, Mode.BASELINE, RateConfig(), 0)
    assert result.outcome is EpisodeOutcome.FAILED_DIVERGED
    assert "policy crashed" in result.diagnostic


class _ContactAdvisor(AdvisorBackend):
    name = "stub"

    def __init__(self):
        self.calls = 0

    def advise(self, ctx):
        from app.services.advisor_service import heuristic_advise

        self.calls += 1
        return heuristic_advise(ctx)


def test_advisor_every_second_chunk(free_space_spec):
    backend = _ContactAdvisor()
    spec = free_space_spec.model_copy(
        update={"task": free_space_spec.task.model_copy(update={"time_limit": 3.0})}
    )
    result = run_episode(spec, _noisy(spec), backend, Mode.ADAPTOR, RateConfig(), 2)
    assert result.chunks == 10
    assert backend.calls == 5 == result.advisor_queries
    assert {r.advisor_source for r in result.records} <= {"none", "heuristic"}
    assert result.records[-1].advisor_source == "heuristic"


def test_adaptor_stiffness_bounded_by_range(catalog):
    spec = catalog["push_box"]
    result = run_episode(spec, _noisy(spec), None, Mode.ADAPTOR, RateConfig(), 5)
    for record in result.records:
        assert all(50.0 * 0.2 - 1e-9 <= k <= 1000.0 + 1e-9 for k in record.k)
        assert 0.2 <= record.alpha <= 1.0
        assert record.phase in set(ContactPhase)


def test_force_failure_log_ends_with_violation_run(catalog):
    spec = catalog["push_box"]
    result = run_episode(spec, _noisy(spec), None, Mode.BASELINE, RateConfig(), 3)
    assert result.outcome is EpisodeOutcome.FAILED_FORCE
    tail = result.records[-3:]
    assert all(max(abs(f) for f in r.wrench[:3]) > 30.0 for r in tail)
    assert result.records[-1].safety_state == "terminated"
    assert [round(r.t, 6) for r in tail] == [
        round(tail[-1].t - 0.002, 6),
        round(tail[-1].t - 0.001, 6),
        round(tail[-1].t, 6),
    ]


def test_lower_task_threshold_terminates_earlier(catalog):
    spec = catalog["push_box"]
    strict = spec.model_copy(update={"task": spec.task.model_copy(update={"force_threshold": 15.0})})
    default = run_episode(spec, _noisy(spec), None, Mode.BASELINE, RateConfig(), 3)
    lowered = run_episode(strict, _noisy(strict), None, Mode.BASELINE, RateConfig(), 3)
    assert default.outcome is EpisodeOutcome.FAILED_FORCE
    assert lowered.outcome is EpisodeOutcome.FAILED_FORCE
    assert lowered.control_ticks < default.control_ticks
    assert max(abs(f) for f in lowered.records[-1].wrench[:3]) > 15.0


class _TwistingPolicy(_StillPolicy):
    def next_chunk(self, obs):
        action = ActionCommand(np.zeros(3), np.array([0.0, 0.0, 0.01]))
        return ActionChunk(seq=1, actions=(action, action))


def test_orientation_deltas_run_to_completion(free_space_spec):
    spec = free_space_spec.model_copy(
        update={"task": free_space_spec.task.model_copy(update={"time_limit": 1.05})}
    )
    result = run_episode(spec, _TwistingPolicy(), None, Mode.ADAPTOR, RateConfig(), 0)
    assert result.diagnostic is None
    assert result.outcome is EpisodeOutcome.FAILED_TIMEOUT
    assert result.control_ticks == 1050
    # last tick ends the first action of the fourth chunk: seven 0.01 rad steps about z
    last = result.records[-1]
    target = 2.0 * math.atan2(last.setpoint[6], last.setpoint[3])
    actual = 2.0 * math.atan2(last.pose[6], last.pose[3])
    assert target == pytest.approx(0.07, abs=1e-9)
    assert abs(actual - target) < 0.01
