#!/usr/bin/env python3
"""Scoring the three controller variants the way the evaluation defines it.

Computes the windowed l2 tracking scores for original, approximated, and
encrypted runs under the sensor-noise comparison protocol (a shared noise
sequence gives all variants a common excitation floor, so the score ratios
isolate the effect of approximation and encryption).
"""

import math

from pamenc import (
    DEFAULT_GAINS,
    DEFAULT_PAM,
    DEFAULT_PLANT,
    REF2,
    build_phi,
    compare_report,
    fit_controller_coeffs,
    run_closed_loop,
    with_load_mass,
)
from pamenc.crypto import find_session_key

coeffs, _ = fit_controller_coeffs(DEFAULT_PAM)
phi = build_phi(coeffs, DEFAULT_PAM, DEFAULT_GAINS)
keys = find_session_key(phi, seed=0)

noise = dict(noise_theta=math.radians(0.02), noise_pressure=0.2)
plant = with_load_mass(DEFAULT_PLANT, 1.5, DEFAULT_PAM)

traces = {
    "original": [run_closed_loop("original", REF2, plant=plant, noise_seed=s, **noise)
                 for s in (7, 8)],
    "approx": [run_closed_loop("approx", REF2, plant=plant, phi=phi, noise_seed=s, **noise)
               for s in (7, 8)],
    "encrypted": [run_closed_loop("encrypted", REF2, plant=plant, phi=phi, keys=keys,
                                  noise_seed=s, **noise) for s in (7, 8)],
}

report = compare_report(traces)
print("Reference 2 with a 1.5 kg load, two noise seeds per variant:\n")
print(report.to_text())
report.to_csv("comparison_ref2_load.csv")
print("\nwrote comparison_ref2_load.csv")

print("\nscore ratios per window (the quantity the evaluation bounds):")
by = {(r.label, r.window.k0, r.signal): r.gamma_mean for r in report.rows}
for k0 in (500, 1250, 2000):
    for signal in ("theta", "k_p"):
        ao = by["approx", k0, signal] / by["original", k0, signal] - 1.0
        ea = by["encrypted", k0, signal] / by["approx", k0, signal] - 1.0
        print(f"  window [{k0:4d}] {signal:>5}: approx/original {ao:+7.3%}, "
              f"encrypted/approx {ea:+8.5%}")
