import numpy as np
import pytest

from app.models.core_types import (
    ActionChunk,
    ActionCommand,
    Axis,
    ContactPhase,
    ImpedanceParams,
    ImpedanceRange,
    Pose,
    Wrench,
    as_vec3,
    max_axis_force,
    normalize_quaternion,
    quat_to_rotation,
    rotation_to_quat,
    validate_impedance,
    wrench_force_magnitude,
)


def test_force_magnitude_and_axis_max():
    w = Wrench(np.array([3.0, 4.0, 0.0]))
    assert wrench_force_magnitude(w) == pytest.approx(5.0)
    assert max_axis_force(w) == pytest.approx(4.0)


def test_zero_wrench_magnitude():
    assert wrench_force_magnitude(Wrench()) == 0.0


def test_vectors_are_read_only_copies():
    source = np.array([1.0, 2.0, 3.0])
    pose = Pose(source)
    source[0] = 99.0
    assert pose.position[0] == 1.0
    with pytest.raises(ValueError):
        pose.position[0] = 5.0


@pytest.mark.parametrize("bad", [[1.0, 2.0], [1.0, float("nan"), 0.0], [float("inf"), 0.0, 0.0]])
def test_as_vec3_rejects_bad_vectors(bad):
    with pytest.raises(ValueError):
        as_vec3(bad)


def test_quaternion_is_renormalized():
    q = normalize_quaternion([2.0, 0.0, 0.0, 0.0])
    assert q.tolist() == [1.0, 0.0, 0.0, 0.0]
    with pytest.raises(ValueError):
        normalize_quaternion([0.0, 0.0, 0.0, 0.0])


def test_quaternion_scipy_conversion_keeps_scalar_first():
    q = np.array([np.cos(0.25), 0.0, 0.0, np.sin(0.25)])
    r = quat_to_rotation(q)
    assert r.as_rotvec() == pytest.approx([0.0, 0.0, 0.5])
    assert rotation_to_quat(r) == pytest.approx(q)


def test_pose_list_round_trip():
    values = [0.1, -0.2, 0.3, 1.0, 0.0, 0.0, 0.0]
    assert Pose.from_list(values).to_list() == values


def test_action_chunk_needs_actions():
    with pytest.raises(ValueError):
        ActionChunk(seq=1, actions=())
    chunk = ActionChunk(seq=1, actions=[ActionCommand(np.zeros(3))])
    assert chunk.horizon == 1


def test_axis_and_phase_labels():
    assert Axis.Y.index == 1
    assert Axis.Z.unit.tolist() == [0.0, 0.0, 1.0]
    assert [p.label for p in ContactPhase] == ["Free_motion", "Approaching", "Contact", "Retreat"]


def test_impedance_range_broadcasts_and_orders():
    rng = ImpedanceRange(k_min=100.0, k_max=800.0)
    assert rng.k_min == [100.0] * 3
    assert rng.damping_fraction_mid == pytest.approx(0.15)
    with pytest.raises(ValueError):
        ImpedanceRange(k_min=900.0, k_max=800.0)


def _params(k, fraction):
    k = np.asarray(k, dtype=float)
    return ImpedanceParams(k=k, d=fraction * k, k_o=0.15 * k, d_o=np.ones(3))


@pytest.mark.parametrize(
    "k,fraction,expected",
    [
        ([300.0, 300.0, 300.0], 0.15, True),
        ([1000.0, 1000.0, 1000.0], 0.15, True),
        ([50.0, 50.0, 50.0], 0.15, True),
        ([50.0, 500.0, 1000.0], 0.15, True),
        ([1000.001, 1000.0, 1000.0], 0.15, False),
        ([50.0, 49.999, 50.0], 0.15, False),
        ([0.0, 0.0, 0.0], 0.15, False),
        ([500.0, 500.0, 500.0], 0.10, True),
        ([500.0, 500.0, 500.0], 0.20, True),
        ([500.0, 500.0, 500.0], 0.0999, False),
        ([500.0, 500.0, 500.0], 0.2001, False),
        ([500.0, 500.0, 500.0], 0.05, False),
    ],
)
def test_validate_impedance_bounds_are_inclusive(k, fraction, expected):
    assert validate_impedance(_params(k, fraction), ImpedanceRange()) is expected


def test_validate_impedance_checks_damping_per_axis():
    k = np.array([500.0, 500.0, 500.0])
    d = np.array([0.15, 0.15, 0.25]) * k
    p = ImpedanceParams(k=k, d=d, k_o=0.15 * k, d_o=np.ones(3))
    assert not validate_impedance(p, ImpedanceRange())


def test_impedance_params_reject_negative():
    with pytest.raises(ValueError):
        ImpedanceParams(k=[-1.0, 0.0, 0.0], d=np.zeros(3), k_o=np.zeros(3), d_o=np.zeros(3))
