import numpy as np

from app.models.core_types import ObservationFrame, Pose, Twist, Wrench


def make_obs(position=(0.0, 0.0, 0.0), velocity=(0.0, 0.0, 0.0), force=(0.0, 0.0, 0.0), t=0.0):
    return ObservationFrame(
        timestamp=t,
        pose=Pose(np.asarray(position, dtype=float)),
        twist=Twist(np.asarray(velocity, dtype=float)),
        wrench=Wrench(np.asarray(force, dtype=float)),
    )

SUITE_TRIALS = 10
SUITE_SEED = 7
