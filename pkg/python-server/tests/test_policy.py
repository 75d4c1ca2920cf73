import numpy as np
import pytest

from app.models.scenario import Waypoint
from app.services.policy_service import (
    PolicyHandle,
    PolicyKind,
    ScriptedPolicy,
    cap_norm,
    make_policy,
)

from tests.helpers import make_obs


def _handle(**overrides):
    values = dict(
        kind=PolicyKind.SCRIPTED_WAYPOINT,
        waypoints=[Waypoint(position=[0.04, 0.0, 0.0]), Waypoint(position=[0.04, 0.08, 0.0], gripper=1.0)],
        chunk_len=4,
    )
    values.update(overrides)
    return PolicyHandle(**values)


def test_chunk_heads_to_first_waypoint():
    policy = ScriptedPolicy(_handle())
    chunk = policy.next_chunk(make_obs())
    assert chunk.seq == 1
    assert chunk.horizon == 4
    for action in chunk.actions:
        assert action.delta_position.tolist() == pytest.approx([0.01, 0.0, 0.0])
        assert action.gripper == 0.0


def test_step_cap_limits_each_delta():
    policy = ScriptedPolicy(_handle(step_cap=0.005))
    for action in policy.next_chunk(make_obs()).actions:
        assert np.linalg.norm(action.delta_position) <= 0.005 + 1e-12


def test_noisy_deltas_respect_cap():
    policy = ScriptedPolicy(_handle(kind=PolicyKind.SCRIPTED_NOISY, noise_std=0.05, step_cap=0.01))
    for _ in range(5):
        for action in policy.next_chunk(make_obs()).actions:
            assert np.linalg.norm(action.delta_position) <= 0.01 + 1e-12


def test_advances_past_reached_waypoint():
    policy = ScriptedPolicy(_handle())
    chunk = policy.next_chunk(make_obs(position=(0.038, 0.0, 0.0)))
    assert chunk.actions[0].gripper == 1.0
    assert chunk.actions[0].delta_position[1] > 0.0


def test_zero_motion_at_final_waypoint():
    policy = ScriptedPolicy(_handle())
    policy.next_chunk(make_obs(position=(0.04, 0.0, 0.0)))
    chunk = policy.next_chunk(make_obs(position=(0.04, 0.078, 0.0)))
    assert all(a.delta_position.tolist() == [0.0, 0.0, 0.0] for a in chunk.actions)


def test_no_waypoints_holds_still():
    policy = ScriptedPolicy(_handle(waypoints=[]))
    chunk = policy.next_chunk(make_obs())
    assert chunk.actions[0].delta_position.tolist() == [0.0, 0.0, 0.0]


def test_same_seed_same_stream_and_reset_restarts():
    handle = _handle(kind=PolicyKind.SCRIPTED_NOISY, noise_std=0.001)
    a, b = ScriptedPolicy(handle), ScriptedPolicy(handle)
    a.reset(7)
    b.reset(7)
    first = [a.next_chunk(make_obs()).actions[0].to_list() for _ in range(3)]
    assert first == [b.next_chunk(make_obs()).actions[0].to_list() for _ in range(3)]
    a.reset(7)
    assert a.next_chunk(make_obs()).actions[0].to_list() == first[0]
    b.reset(8)
    assert b.next_chunk(make_obs()).actions[0].to_list() != first[0]


def test_cap_norm():
    assert cap_norm(np.array([3.0, 4.0, 0.0]), 1.0).tolist() == pytest.approx([0.6, 0.8, 0.0])
    assert cap_norm(np.array([0.1, 0.0, 0.0]), 1.0).tolist() == [0.1, 0.0, 0.0]


def test_make_policy_scripted():
    assert isinstance(make_policy(_handle()), ScriptedPolicy)


def test_for_scenario_uses_waypoints(push_box):
    handle = PolicyHandle.for_scenario(push_box, noise_std=0.0)
    assert handle.waypoints == list(push_box.waypoints)
    assert handle.kind is PolicyKind.SCRIPTED_NOISY
