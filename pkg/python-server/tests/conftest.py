import os

import pytest

from app.models.core_types import Axis, ImpedanceRange, TaskSpec
from app.models.records import Mode
from app.models.scenario import BENCHMARK_SUITE, ScenarioSpec, load_catalog
from app.services.orchestrator import RateConfig, TrialJob, run_benchmark
from app.services.phase_detector import PhaseConfig
from app.services.policy_service import PolicyHandle
from app.services.safety_monitor import SafetyConfig

from tests.helpers import SUITE_SEED, SUITE_TRIALS


@pytest.fixture(scope="session")
def catalog():
    return load_catalog()


@pytest.fixture
def push_box(catalog):
    return catalog["push_box"]


@pytest.fixture
def free_space_spec():
    """A placing scenario whose table is far below the workspace, so nothing ever touches."""
    return ScenarioSpec.model_validate(
        {
            "id": "free_space",
            "kind": "fragile_place",
            "task": {
                "id": "free_space",
                "instruction": "move the held object around",
                "primary_motion_axis": "x",
                "time_limit": 6.0,
            },
            "geometry": {"table_height": -100.0, "target_center": [0.0, 0.0]},
            "ee_start": [0.0, 0.0, 0.0],
            "waypoints": [
                {"position": [0.2, 0.0, 0.0], "gripper": 1.0},
                {"position": [0.2, 0.2, 0.0], "gripper": 1.0},
                {"position": [0.0, 0.0, 0.0], "gripper": 1.0},
            ],
            "sensor": {"noise_std": 0.0},
        }
    )


@pytest.fixture
def task():
    return TaskSpec(
        id="push",
        instruction="push the box forward",
        primary_motion_axis=Axis.X,
        time_limit=10.0,
        target_position=[0.1, 0.0, 0.0],
    )


@pytest.fixture
def impedance_range():
    return ImpedanceRange()



@pytest.fixture(scope="session")
def suite_results(catalog):
    """One paired run of the benchmark suite, shared by every test that needs it."""
    jobs = [
        TrialJob(
            spec=catalog[sid],
            mode=mode,
            trial=trial,
            seed=SUITE_SEED,
            policy=PolicyHandle.for_scenario(catalog[sid]),
            advisor="heuristic",
            rates=RateConfig(),
            safety=SafetyConfig(),
            phase=PhaseConfig(),
        )
        for sid in BENCHMARK_SUITE
        for mode in (Mode.BASELINE, Mode.ADAPTOR)
        for trial in range(SUITE_TRIALS)
    ]
    results = run_benchmark(jobs, workers=min(4, os.cpu_count() or 1))
    return {
        mode: [r for r in results if r.mode is mode] for mode in (Mode.BASELINE, Mode.ADAPTOR)
    }
