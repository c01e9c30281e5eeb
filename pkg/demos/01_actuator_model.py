#!/usr/bin/env python3
"""Tour of the actuator model: lengths, forces, torque, and stiffness maps.

Shows how co-contraction pressure sets joint stiffness independently of the
torque balance, which is the property the whole controller is built around.
"""

import math

import numpy as np

from pamenc import (
    DEFAULT_PAM,
    alpha,
    contraction_force,
    estimate_force,
    joint_stiffness,
    joint_torque,
    pam_lengths,
)

p = DEFAULT_PAM
print(f"joint radius r = {p.r} m, slack length L0 = {p.L0} m")

print("\nMuscle lengths over the +-25 deg range (l1 + l2 is conserved):")
for deg in (-25, -10, 0, 10, 25):
    l1, l2 = pam_lengths(math.radians(deg), p)
    print(f"  theta = {deg:+3d} deg: l1 = {l1:.5f} m, l2 = {l2:.5f} m, sum = {l1 + l2:.5f}")

print("\nForce map at theta = 0 (affine in pressure; the default coefficients are")
print("calibrated around the 440-520 kPa band the closed loop actually visits):")
l0 = p.L0
for press in (440, 475, 520):
    f = contraction_force(l0, press, 0, p)
    print(f"  P = {press} kPa -> F = {f:8.1f} N   (alpha = {alpha(press, 0, p):7.2f} N)")

print("\nAngle-based estimator vs the length-based model (muscle 1):")
for deg in (-20, -5, 5, 20):
    th = math.radians(deg)
    l1, _ = pam_lengths(th, p)
    f = contraction_force(l1, 475.0, 0, p)
    fh = estimate_force(th, 475.0, 0, p)
    print(f"  theta = {deg:+3d} deg: model {f:8.2f} N, estimate {fh:8.2f} N, "
          f"gap {fh - f:+6.3f} N")

print("\nCo-contraction sets stiffness while symmetric pressures keep torque ~ 0:")
for press in (300, 475, 650):
    th = 0.0
    l1, l2 = pam_lengths(th, p)
    F1 = contraction_force(l1, press, 0, p)
    F2 = contraction_force(l2, press, 1, p)
    tau = joint_torque(th, F1, F2, p)
    kp = joint_stiffness(th, F1, F2, press, press, p)
    print(f"  P1 = P2 = {press} kPa: torque = {tau:+7.4f} N*m, stiffness = {kp:6.2f} N*m/rad")

print("\nDifferential pressure adds torque at nearly constant stiffness:")
base = 475.0
for dp in (0, 5, 10):
    th = 0.0
    l1, l2 = pam_lengths(th, p)
    F1 = contraction_force(l1, base + dp, 0, p)
    F2 = contraction_force(l2, base - dp, 1, p)
    tau = joint_torque(th, F1, F2, p)
    kp = joint_stiffness(th, F1, F2, base + dp, base - dp, p)
    print(f"  dP = +-{dp:2d} kPa: torque = {tau:+7.3f} N*m, stiffness = {kp:6.2f} N*m/rad")
