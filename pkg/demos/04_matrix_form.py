#!/usr/bin/env python3
"""The polynomial controller as a single 5x18 matrix-vector product.

Demonstrates the exact algebraic equivalence between the structured
controller evaluation and psi = Phi * xi, which is what makes the scheme
encryptable: one multiplicative-homomorphic product per matrix entry.
"""

import numpy as np

from pamenc import (
    DEFAULT_GAINS,
    DEFAULT_PAM,
    ControllerInput,
    ControllerState,
    approx_step,
    build_phi,
    build_xi,
    fit_controller_coeffs,
    poly_step,
    save_phi,
)
from pamenc.polyctrl import XI_NAMES

coeffs, _ = fit_controller_coeffs(DEFAULT_PAM)
phi = build_phi(coeffs, DEFAULT_PAM, DEFAULT_GAINS)

print("Phi structure (5 rows: x_th+, x_F1+, x_F2+, u1, u2):")
print(f"  row 1 nonzeros: {np.count_nonzero(phi[0])} "
      f"(Ts at th_ref, -Ts at th, 1 at x_th)")
print(f"  largest entry magnitude: {np.max(np.abs(phi)):.2f} "
      f"(the bias-augmented constant column)")

zin = ControllerInput(P1=478.0, P2=474.0, theta=0.09, theta_ref=0.0873, kp_ref=9.0)
state = ControllerState(x_theta=0.4, x_f1=3.2, x_f2=-1.1)

xi = build_xi(zin, state)
print("\nxi for one operating point:")
for name, val in zip(XI_NAMES, xi):
    print(f"  {name:>11} = {val:+.6g}")

psi = poly_step(phi, xi)
s, u1, u2 = approx_step(state, zin, coeffs, DEFAULT_PAM, DEFAULT_GAINS)
structured = np.array([*s.as_tuple(), u1, u2])

print("\npsi = Phi @ xi       :", np.array2string(psi, precision=10))
print("structured evaluation:", np.array2string(structured, precision=10))
print(f"max |difference|     : {np.max(np.abs(psi - structured)):.3e} "
      "(floating reassociation only)")

rng = np.random.default_rng(0)
worst = 0.0
for _ in range(5000):
    state = ControllerState(*rng.uniform(-20, 20, 3))
    zin = ControllerInput(P1=rng.uniform(200, 750), P2=rng.uniform(200, 750),
                          theta=rng.uniform(-0.43, 0.43),
                          theta_ref=rng.uniform(-0.43, 0.43),
                          kp_ref=rng.uniform(4, 9))
    s, u1, u2 = approx_step(state, zin, coeffs, DEFAULT_PAM, DEFAULT_GAINS)
    psi = poly_step(phi, build_xi(zin, state))
    dev = np.max(np.abs(np.array([*s.as_tuple(), u1, u2]) - psi)
                 / np.maximum(np.abs(psi), 1.0))
    worst = max(worst, float(dev))
print(f"\nworst relative deviation over 5000 random points: {worst:.3e}")

save_phi("phi.csv", phi)
print("wrote phi.csv (5x18, full precision)")
