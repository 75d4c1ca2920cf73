import time

import numpy as np
import pytest

from app.core.errors import ParseError
from app.models.core_types import ContactPhase, ImpedanceRange, Twist, Wrench
from app.services.advisor_service import (
    Advice,
    AdvisorBackend,
    AdvisorContext,
    AdvisorWorker,
    AdviceSource,
    HeuristicBackend,
    LatestMailbox,
    advise,
    build_impedance_prompt,
    build_phase_prompt,
    clamp_to_range,
    format_impedance_response,
    format_range,
    heuristic_advise,
    parse_impedance_response,
    parse_phase_response,
)

RANGE = ImpedanceRange()

ACCEPTED = [
    ("K = [300, 400, 500], D = [45, 60, 75]", [300, 400, 500], [45, 60, 75]),
    ("```\nK = [300, 400, 500]\nD = [45, 60, 75]\n```", [300, 400, 500], [45, 60, 75]),
    (
        "Sure! In contact we go soft: K = [200.5, 800, 800], D = [30, 120, 120]. Hope that helps.",
        [200.5, 800, 800],
        [30, 120, 120],
    ),
    ("**K** = [300, 400, 500], **D** = [45, 60, 75]", [300, 400, 500], [45, 60, 75]),
    ("k=[300,400,500] d=[45,60,75]", [300, 400, 500], [45, 60, 75]),
    ("K: [300, 400, 500]; D: [45, 60, 75]", [300, 400, 500], [45, 60, 75]),
    ("K = [1e3, 5e2, 2.5e2], D = [150, 75, 37.5]", [1000, 500, 250], [150, 75, 37.5]),
    ("K = [5000, 400, 500], D = [750, 60, 75]", [1000, 400, 500], [150, 60, 75]),
    ("K = [10, 400, 500], D = [1, 60, 75]", [50, 400, 500], [5, 60, 75]),
    ("K = [300, 400, 500]", [300, 400, 500], [45, 60, 75]),
    ("K = [300, 300, 300], D = [3, 300, 45]", [300, 300, 300], [30, 60, 45]),
    ("K = [-100, 400, 500], D = [10, 60, 75]", [50, 400, 500], [10, 60, 75]),
    (
        "First guess K = [a, b, c]; corrected: K = [300, 400, 500], D = [45, 60, 75]",
        [300, 400, 500],
        [45, 60, 75],
    ),
    ("K=[300 N/m, 400 N/m, 500 N/m], D=[45, 60, 75]", [300, 400, 500], [45, 60, 75]),
    (
        "Stiffness K = [300, 400, 500] with D = [45, 60, 75] (damping 15%)",
        [300, 400, 500],
        [45, 60, 75],
    ),
    ("Think: K = [300, 400, 500], D = [45, 60, 75]", [300, 400, 500], [45, 60, 75]),
]

REJECTED = [
    "I cannot decide.",
    "",
    "K = [300, 400]",
    "K = [300, abc, 500]",
    "K = [inf, 400, 500]",
    "K = [nan, 400, 500], D = [1, 2, 3]",
    "D = [45, 60, 75]",
    "K = [300, 400, 500, 600]",
]


@pytest.mark.parametrize("text,k,d", ACCEPTED)
def test_parser_accepts(text, k, d):
    advice = parse_impedance_response(text, RANGE)
    assert advice.k.tolist() == pytest.approx(k)
    assert advice.d.tolist() == pytest.approx(d)
    assert advice.source is AdviceSource.REMOTE
    assert np.all(advice.k >= RANGE.k_min_array) and np.all(advice.k <= RANGE.k_max_array)
    assert np.all(advice.d >= 0.1 * advice.k - 1e-9)
    assert np.all(advice.d <= 0.2 * advice.k + 1e-9)


@pytest.mark.parametrize("text", REJECTED)
def test_parser_rejects(text):
    with pytest.raises(ParseError):
        parse_impedance_response(text, RANGE)


def test_corpus_size():
    assert len(ACCEPTED) + len(REJECTED) >= 20


def test_formatted_advice_parses_back_exactly():
    k = np.array([123.456, 789.0, 50.0])
    d = np.array([18.5184, 118.35, 7.5])
    advice = parse_impedance_response(format_impedance_response(k, d), RANGE)
    assert advice.k.tolist() == k.tolist()
    assert advice.d.tolist() == d.tolist()


@pytest.mark.parametrize(
    "text,expected",
    [
        ("phase = [Contact]", ContactPhase.CONTACT),
        ("phase = Free_motion", ContactPhase.FREE_MOTION),
        ("The arm is approaching. phase = [Retreat]", ContactPhase.RETREAT),
        ("Free motion", ContactPhase.FREE_MOTION),
        ("FREE-MOTION", ContactPhase.FREE_MOTION),
        ("contact", ContactPhase.CONTACT),
        ("`phase: approaching`", ContactPhase.APPROACHING),
    ],
)
def test_phase_parser(text, expected):
    assert parse_phase_response(text) is expected


def test_phase_parser_rejects_unknown():
    with pytest.raises(ParseError):
        parse_phase_response("I don't know")


def test_clamp_keeps_damping_ratio_of_clamped_stiffness():
    k, d = clamp_to_range([2000.0, 500.0, 500.0], [300.0, 75.0, 75.0], RANGE)
    assert k.tolist() == [1000.0, 500.0, 500.0]
    assert d.tolist() == pytest.approx([150.0, 75.0, 75.0])


def _ctx(task, phase):
    return AdvisorContext(task, phase, Twist([0.01, 0.0, 0.0]), Wrench([-3.0, 0.0, 0.0]), RANGE)


def test_heuristic_phase_hierarchy(task):
    means = {p: float(np.mean(heuristic_advise(_ctx(task, p)).k)) for p in ContactPhase}
    assert means[ContactPhase.FREE_MOTION] > means[ContactPhase.APPROACHING]
    assert means[ContactPhase.APPROACHING] == means[ContactPhase.RETREAT]
    assert means[ContactPhase.RETREAT] > means[ContactPhase.CONTACT]


@pytest.mark.parametrize("phase", [ContactPhase.CONTACT, ContactPhase.APPROACHING])
def test_heuristic_softens_primary_axis(task, phase):
    k = heuristic_advise(_ctx(task, phase)).k
    axis = task.primary_motion_axis.index
    others = [i for i in range(3) if i != axis]
    assert all(k[axis] < k[i] for i in others)


def test_heuristic_advice_is_in_range(task):
    for phase in ContactPhase:
        advice = heuristic_advise(_ctx(task, phase))
        assert advice.phase_claim is None
        assert np.all(advice.k >= 50.0) and np.all(advice.k <= 1000.0)
        assert advice.d.tolist() == pytest.approx((0.15 * advice.k).tolist())


def test_prompts_carry_context(task):
    ctx = _ctx(task, ContactPhase.CONTACT)
    impedance = build_impedance_prompt(ctx)
    assert "Contact: Lowest impedance" in impedance
    assert "Free_motion: Highest impedance" in impedance
    assert "Primary motion axis: X" in impedance
    assert "[50, 1000] per axis" in impedance
    assert "Output: K = [K_x, K_y, K_z], D = [D_x, D_y, D_z]" in impedance
    phase = build_phase_prompt(ctx)
    assert "[-3.00, 0.00, 0.00]" in phase
    assert "Free_motion, Approaching, Contact, Retreat" in phase


def test_format_range_per_axis():
    text = format_range(ImpedanceRange(k_min=[50, 60, 70], k_max=1000.0))
    assert text == "x: [50, 1000], y: [60, 1000], z: [70, 1000]"


class _Broken(AdvisorBackend):
    name = "broken"

    def advise(self, ctx):
        raise RuntimeError("model offline")


def test_failing_backend_falls_back_to_heuristic(task):
    ctx = _ctx(task, ContactPhase.CONTACT)
    advice = advise(ctx, _Broken())
    assert advice.fallback
    assert advice.source is AdviceSource.HEURISTIC
    assert advice.k.tolist() == heuristic_advise(ctx).k.tolist()
    assert advice.latency >= 0.0


def test_mailbox_keeps_latest():
    box = LatestMailbox()
    assert box.take() is None
    box.put(1)
    box.put(2)
    assert box.take() == 2
    assert box.take() is None


def test_worker_posts_to_mailbox(task):
    box = LatestMailbox()
    worker = AdvisorWorker(HeuristicBackend(), box)
    future = worker.submit(_ctx(task, ContactPhase.FREE_MOTION))
    future.result(timeout=5.0)
    worker.close()
    deadline = time.monotonic() + 5.0
    advice = box.take()
    while advice is None and time.monotonic() < deadline:
        time.sleep(0.01)
        advice = box.take()
    assert isinstance(advice, Advice)
    assert advice.k.tolist() == [1000.0] * 3
