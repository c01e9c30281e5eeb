#!/usr/bin/env python3
"""End-to-end encrypted control: keygen, Enc(Phi), the full closed loop.

Runs the approximated and encrypted controllers on Reference 2 side by side
and quantifies what the fixed-point encryption layer costs: per-step output
quantization around 1e-6 V and a few milliseconds of compute per period.
"""

import numpy as np

from pamenc import (
    CANONICAL_WINDOWS,
    DEFAULT_GAINS,
    DEFAULT_PAM,
    EncodingParams,
    REF2,
    build_phi,
    check_overflow_guard,
    fit_controller_coeffs,
    run_closed_loop,
    window_tracking_stats,
)
from pamenc.crypto import find_session_key

coeffs, _ = fit_controller_coeffs(DEFAULT_PAM)
phi = build_phi(coeffs, DEFAULT_PAM, DEFAULT_GAINS)

encoding = EncodingParams()  # delta_xi = delta_phi = 1e8
keys = find_session_key(phi, encoding, bits=64, seed=0)
print(f"64-bit safe-prime key: p = {keys.p:#x} ({keys.bits} bits)")

bounds = check_overflow_guard(encoding, phi, keys.p)
print(f"overflow guard: largest decoded-product bound {bounds.max():.1f} "
      f"fits the centered range of p")

quant = []
approx = run_closed_loop("approx", REF2, phi=phi)
encrypted = run_closed_loop(
    "encrypted", REF2, phi=phi, keys=keys, measure_time=True,
    on_step=lambda k, c: quant.append(float(np.max(np.abs(c.last_psi - c.last_plain_psi)))))

print(f"\nper-step quantization (encrypted psi vs plaintext Phi xi on the same xi):")
print(f"  mean {np.mean(quant):.2e}, worst {np.max(quant):.2e}")

print(f"\npaired closed-loop runs, max differences over 45 s:")
for col, unit in (("u1", "V"), ("theta_deg", "deg"), ("k_p", "N*m/rad")):
    d = np.max(np.abs(approx[col] - encrypted[col]))
    print(f"  {col:>9}: {d:.2e} {unit}")

ct = encrypted["compute_time"] * 1e3
print(f"\ncontroller-side compute per 20 ms period: mean {ct.mean():.2f} ms, "
      f"p99 {np.percentile(ct, 99):.2f} ms, worst {ct.max():.2f} ms")

print("\nsteady-state tracking of the encrypted loop:")
for i, w in enumerate(CANONICAL_WINDOWS, 1):
    stats = window_tracking_stats(encrypted, w)
    print(f"  window #{i}: theta err {stats['theta']['mean_abs_err_pct']:.3f} %, "
          f"K_P err {stats['k_p']['mean_abs_err_pct']:.3f} %")

encrypted.to_csv("encrypted_ref2.csv")
print("\nwrote encrypted_ref2.csv")
