import numpy as np
import pytest

from app.models.core_types import ContactPhase
from app.services.phase_detector import PhaseConfig, PhaseDetector, detect, fuse

from tests.helpers import make_obs


def test_far_from_target_is_free_motion(task):
    detector = PhaseDetector()
    obs = make_obs(position=(-0.2, 0.0, 0.0))
    assert detector.detect(obs, task, ContactPhase.FREE_MOTION) is ContactPhase.FREE_MOTION


def test_near_target_is_approaching(task):
    obs = make_obs(position=(0.07, 0.0, 0.0))
    assert detect(obs, task, ContactPhase.FREE_MOTION, PhaseConfig()) is ContactPhase.APPROACHING


def test_no_target_stays_free(task):
    bare = task.model_copy(update={"target_position": None})
    assert PhaseDetector().detect(make_obs(), bare, ContactPhase.FREE_MOTION) is ContactPhase.FREE_MOTION


def test_contact_needs_debounced_force(task):
    detector = PhaseDetector()
    phase = ContactPhase.APPROACHING
    obs = make_obs(position=(0.09, 0.0, 0.0), force=(-3.0, 0.0, 0.0))
    for _ in range(4):
        phase = detector.detect(obs, task, phase)
        assert phase is ContactPhase.APPROACHING
    assert detector.detect(obs, task, phase) is ContactPhase.CONTACT


def test_spike_interrupted_resets_debounce(task):
    detector = PhaseDetector(PhaseConfig(debounce=3))
    phase = ContactPhase.APPROACHING
    near = (0.09, 0.0, 0.0)
    for force in [-3.0, -3.0, 0.0, -3.0, -3.0]:
        phase = detector.detect(make_obs(position=near, force=(force, 0.0, 0.0)), task, phase)
    assert phase is ContactPhase.APPROACHING


def _in_contact(task):
    detector = PhaseDetector(PhaseConfig(debounce=1))
    phase = detector.detect(
        make_obs(position=(0.1, 0.0, 0.0), force=(-5.0, 0.0, 0.0)), task, ContactPhase.APPROACHING
    )
    assert phase is ContactPhase.CONTACT
    return detector


def test_hysteresis_keeps_contact(task):
    detector = _in_contact(task)
    obs = make_obs(position=(0.1, 0.0, 0.0), force=(-1.0, 0.0, 0.0))
    assert detector.detect(obs, task, ContactPhase.CONTACT) is ContactPhase.CONTACT


def test_release_while_moving_away_is_retreat(task):
    detector = _in_contact(task)
    # the wall pushes back along -x, so moving away means negative x velocity
    obs = make_obs(position=(0.09, 0.0, 0.0), velocity=(-0.01, 0.0, 0.0))
    assert detector.detect(obs, task, ContactPhase.CONTACT) is ContactPhase.RETREAT
    assert detector.detect(obs, task, ContactPhase.RETREAT) is ContactPhase.RETREAT
    still = make_obs(position=(0.09, 0.0, 0.0))
    assert detector.detect(still, task, ContactPhase.RETREAT) is ContactPhase.APPROACHING


def test_release_without_motion_uses_distance(task):
    detector = _in_contact(task)
    obs = make_obs(position=(0.09, 0.0, 0.0), velocity=(0.01, 0.0, 0.0))
    assert detector.detect(obs, task, ContactPhase.CONTACT) is ContactPhase.APPROACHING


@pytest.mark.parametrize(
    "semantic,sensed,expected",
    [
        (None, ContactPhase.APPROACHING, ContactPhase.APPROACHING),
        (ContactPhase.RETREAT, ContactPhase.APPROACHING, ContactPhase.RETREAT),
        (ContactPhase.FREE_MOTION, ContactPhase.CONTACT, ContactPhase.CONTACT),
        (ContactPhase.CONTACT, ContactPhase.FREE_MOTION, ContactPhase.CONTACT),
    ],
)
def test_fuse(semantic, sensed, expected):
    assert fuse(semantic, sensed) is expected


def test_hysteresis_thresholds_validated():
    with pytest.raises(ValueError):
        PhaseConfig(contact_on=1.0, contact_off=1.0)


def _inside_band(cfg, n=200):
    """Force magnitudes oscillating strictly between contact_off and contact_on."""
    mid = 0.5 * (cfg.contact_off + cfg.contact_on)
    half = 0.49 * (cfg.contact_on - cfg.contact_off)
    return mid + half * np.sin(np.linspace(0.0, 12.0 * np.pi, n))


@pytest.mark.parametrize(
    "start,position",
    [
        (ContactPhase.FREE_MOTION, (-0.2, 0.0, 0.0)),
        (ContactPhase.APPROACHING, (0.09, 0.0, 0.0)),
        (ContactPhase.CONTACT, (0.1, 0.0, 0.0)),
    ],
)
def test_force_between_thresholds_never_changes_phase(task, start, position):
    cfg = PhaseConfig(debounce=1)
    if start is ContactPhase.CONTACT:
        detector = _in_contact(task)
    else:
        detector = PhaseDetector(cfg)
    magnitudes = _inside_band(cfg)
    assert magnitudes.min() > cfg.contact_off and magnitudes.max() < cfg.contact_on
    phase = start
    for i, magnitude in enumerate(magnitudes):
        obs = make_obs(position=position, force=(-magnitude, 0.0, 0.0), t=i * 0.001)
        phase = detector.detect(obs, task, phase)
        assert phase is start, f"phase changed to {phase} at sample {i}"
