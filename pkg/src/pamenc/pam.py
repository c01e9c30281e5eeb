"""PAM geometry, contraction-force and stiffness maps, and the surrogate plant.

The force map is affine in pressure with length-dependent coefficients; the
estimator is the same shape with angle-dependent coefficients. The surrogate
plant is a rigid joint with viscous damping plus a first-order valve/pressure
lag, integrated by semi-implicit Euler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .params import (
    PRESSURE_MAX,
    PRESSURE_MIN,
    THETA_LIMIT,
    PamParams,
    SurrogatePlantParams,
)


@dataclass(frozen=True)
class PlantState:
    """Joint angle/velocity and absolute inner pressures."""

    theta: float = 0.0
    theta_dot: float = 0.0
    P1: float = PRESSURE_MIN
    P2: float = PRESSURE_MIN


def pam_lengths(theta: float, params: PamParams) -> tuple[float, float]:
    """Muscle lengths l1 = L0 - r*sin(theta), l2 = L0 + r*sin(theta)."""
    d = params.r * math.sin(theta)
    l1, l2 = params.L0 - d, params.L0 + d
    if l1 <= 0.0 or l2 <= 0.0:
        raise ValueError(f"nonpositive muscle length at theta={theta!r}")
    return l1, l2


def contraction_force(length: float, pressure: float, muscle: int, params: PamParams) -> float:
    """Contraction force (a1*l + a2)*P + (b1*l + b2) for one muscle."""
    c = params.force_coeffs[muscle]
    return (c.a1 * length + c.a2) * pressure + (c.b1 * length + c.b2)


def alpha(pressure: float, muscle: int, params: PamParams) -> float:
    """Length-independent force component a2*P + b2."""
    c = params.force_coeffs[muscle]
    return c.a2 * pressure + c.b2


def joint_torque(theta: float, F1: float, F2: float, params: PamParams) -> float:
    """Joint torque r*cos(theta)*(F1 - F2)."""
    return params.r * math.cos(theta) * (F1 - F2)


def joint_stiffness(theta: float, F1: float, F2: float, P1: float, P2: float,
                    params: PamParams) -> float:
    """Joint stiffness: r*sin(th)*(F1-F2) + r^2*cos^2(th)*((F1-a1)/l1 + (F2-a2)/l2)."""
    l1, l2 = pam_lengths(theta, params)
    c = math.cos(theta)
    return params.r * math.sin(theta) * (F1 - F2) + params.r**2 * c * c * (
        (F1 - alpha(P1, 0, params)) / l1 + (F2 - alpha(P2, 1, params)) / l2
    )


def estimate_force(theta: float, pressure: float, muscle: int, params: PamParams) -> float:
    """Angle-based force estimate (a1h*th + a2h)*P + (b1h*th + b2h)."""
    c = params.est_coeffs[muscle]
    return (c.a1 * theta + c.a2) * pressure + (c.b1 * theta + c.b2)


def measured_stiffness(state: PlantState, params: PamParams) -> float:
    """Stiffness at the current plant state using the model force map."""
    l1, l2 = pam_lengths(state.theta, params)
    F1 = contraction_force(l1, state.P1, 0, params)
    F2 = contraction_force(l2, state.P2, 1, params)
    return joint_stiffness(state.theta, F1, F2, state.P1, state.P2, params)


def plant_step(state: PlantState, u1: float, u2: float, sp: SurrogatePlantParams,
               pp: PamParams, dt: float) -> PlantState:
    """One semi-implicit Euler step of the surrogate plant.

    Pressures relax toward the valve-commanded values and are clamped to the
    allowable set; the joint integrates muscle torque minus damping and load,
    with a hard stop at +-25 deg that zeroes the velocity.
    """
    a = dt / sp.valve_tau
    P1 = state.P1 + a * (sp.valve_map(u1) - state.P1)
    P2 = state.P2 + a * (sp.valve_map(u2) - state.P2)
    P1 = min(max(P1, PRESSURE_MIN), PRESSURE_MAX)
    P2 = min(max(P2, PRESSURE_MIN), PRESSURE_MAX)

    l1, l2 = pam_lengths(state.theta, pp)
    F1 = contraction_force(l1, P1, 0, pp)
    F2 = contraction_force(l2, P2, 1, pp)
    tau = joint_torque(state.theta, F1, F2, pp)

    theta_ddot = (tau - sp.c_damp * state.theta_dot - sp.load_torque) / sp.J
    theta_dot = state.theta_dot + dt * theta_ddot
    theta = state.theta + dt * theta_dot
    if theta >= THETA_LIMIT:
        theta, theta_dot = THETA_LIMIT, 0.0
    elif theta <= -THETA_LIMIT:
        theta, theta_dot = -THETA_LIMIT, 0.0

    return PlantState(theta=theta, theta_dot=theta_dot, P1=P1, P2=P2)


def plant_saturated(state: PlantState) -> bool:
    """True when the returned state sits on a pressure or angle clamp."""
    return (
        abs(state.theta) >= THETA_LIMIT
        or state.P1 in (PRESSURE_MIN, PRESSURE_MAX)
        or state.P2 in (PRESSURE_MIN, PRESSURE_MAX)
    )
