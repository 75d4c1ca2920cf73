"""
Variable impedance control law.

Maps advised stiffness to the final gains used in the loop:
orientation gains follow the translational stiffness, stiffness is scaled by
the force factor alpha, and damping keeps the axis at a fixed damping ratio.
"""

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from app.core.errors import ContractViolation, DomainError
from app.models.core_types import ImpedanceParams, VecLike, Wrench, as_vec3

ALPHA_MIN = 0.2
_ALPHA_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class GainConstants:
    epsilon: float = 0.15
    zeta_orientation: float = 0.707
    zeta_damping: float = 0.7
    m_eff: np.ndarray = field(default_factory=lambda: np.ones(3))
    rotational_inertia: np.ndarray = field(default_factory=lambda: np.full(3, 0.1))

    def __post_init__(self) -> None:
        for name in ("epsilon", "zeta_orientation", "zeta_damping"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        for name in ("m_eff", "rotational_inertia"):
            value = as_vec3(getattr(self, name), name)
            if np.any(value <= 0.0):
                raise ValueError(f"{name} must be positive, got {value.tolist()}")
            object.__setattr__(self, name, value)


def orientation_gains(k: VecLike, c: GainConstants) -> Tuple[np.ndarray, np.ndarray]:
    """K_o = eps * K and D_o = 2 * zeta_o * sqrt(K_o)."""
    k = np.asarray(k, dtype=float)
    if k.shape != (3,) or np.any(~np.isfinite(k)):
        raise DomainError(f"stiffness must be 3 finite numbers, got {k.tolist()}")
    if np.any(k < 0.0):
        raise DomainError(f"stiffness must be non-negative, got {k.tolist()}")
    k_o = c.epsilon * k
    d_o = 2.0 * c.zeta_orientation * np.sqrt(k_o)
    return k_o, d_o


def apply_force_scaling(k_vlm: VecLike, alpha: float, alpha_min: float = ALPHA_MIN) -> np.ndarray:
    if not (alpha_min - _ALPHA_TOL <= alpha <= 1.0 + _ALPHA_TOL):
        raise ContractViolation(f"alpha {alpha} outside [{alpha_min}, 1]")
    return alpha * np.asarray(k_vlm, dtype=float)


def critical_damping(k_final: VecLike, c: GainConstants) -> np.ndarray:
    k_final = np.asarray(k_final, dtype=float)
    if np.any(k_final < 0.0):
        raise DomainError(f"stiffness must be non-negative, got {k_final.tolist()}")
    return 2.0 * c.zeta_damping * np.sqrt(k_final * c.m_eff)


def impedance_params(k: VecLike, d: VecLike, c: GainConstants) -> ImpedanceParams:
    """Bundle translational gains with the orientation gains they imply."""
    k_o, d_o = orientation_gains(k, c)
    return ImpedanceParams(k=k, d=d, k_o=k_o, d_o=d_o)


def adaptor_gains(
    k_advised: VecLike, alpha: float, c: GainConstants, alpha_min: float = ALPHA_MIN
) -> ImpedanceParams:
    k_final = apply_force_scaling(k_advised, alpha, alpha_min)
    return impedance_params(k_final, critical_damping(k_final, c), c)


def baseline_gains(k_max: VecLike, c: GainConstants) -> ImpedanceParams:
    k = np.asarray(k_max, dtype=float)
    return impedance_params(k, critical_damping(k, c), c)


def control_wrench(
    p: ImpedanceParams,
    pose_err: Tuple[np.ndarray, np.ndarray],
    twist_err: Tuple[np.ndarray, np.ndarray],
) -> Wrench:
    """Spring-damper wrench: position/orientation error and velocity error per axis."""
    pos_err, ori_err = pose_err
    lin_err, ang_err = twist_err
    force = p.k * pos_err + p.d * lin_err
    torque = p.k_o * ori_err + p.d_o * ang_err
    return Wrench(force, torque)
