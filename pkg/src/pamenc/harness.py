"""Closed-loop orchestration, reference profiles, traces, and scoring.

A run is: warm-up at the bias voltage, then one controller step per sampling
period against the surrogate plant (several inner integration substeps per
period). Three controller paths exist: the rational controller, the
matrix-vector polynomial controller, and the encrypted pipeline (in-process
or through the TCP service). The trace records degree-valued angles for
plotting; everything inside the loop is radians.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np

from .controller import ControllerInput, ControllerState, original_step
from .crypto import (
    Drbg,
    ElGamalKeys,
    EncodingParams,
    check_overflow_guard,
    dec_plus,
    enc_eval,
    enc_matrix,
    enc_vector,
)
from .pam import PlantState, measured_stiffness, plant_step
from .params import (
    DEFAULT_GAINS,
    DEFAULT_PAM,
    DEFAULT_PLANT,
    PRESSURE_MAX,
    PRESSURE_MIN,
    THETA_LIMIT,
    Gains,
    PamParams,
    SurrogatePlantParams,
)
from .polyctrl import build_xi, poly_step, split_psi
from .service import DeviceSession

WARMUP_VOLTAGE = 5.5

# Flag bits for the trace's clamp_flags column.
FLAG_U1_CLAMPED = 1
FLAG_U2_CLAMPED = 2
FLAG_THETA_STOP = 4
FLAG_PRESSURE_LIMIT = 8
FLAG_DEADLINE_OVERRUN = 16  # controller step took longer than Ts (recorded, not fatal)


@dataclass(frozen=True)
class ReferenceProfile:
    """Piecewise-constant (angle deg, stiffness) references on [0, duration)."""

    segments: tuple[tuple[float, float, float, float], ...]  # (t0, t1, theta_deg, kp)

    def __post_init__(self):
        t_prev = 0.0
        for t0, t1, _, _ in self.segments:
            if not math.isclose(t0, t_prev, abs_tol=1e-12) or t1 <= t0:
                raise ValueError("segments must be contiguous and non-overlapping from t=0")
            t_prev = t1

    @property
    def duration(self) -> float:
        return self.segments[-1][1] if self.segments else 0.0

    def lookup(self, t: float) -> tuple[float, float]:
        """(theta_ref_deg, kp_ref) at time t; right-open segments."""
        for t0, t1, th, kp in self.segments:
            if t0 <= t < t1:
                return th, kp
        if self.segments and math.isclose(t, self.duration):
            return self.segments[-1][2], self.segments[-1][3]
        raise ValueError(f"t={t} outside profile horizon")


def _three_segments(specs: Sequence[tuple[float, float]], seg_len: float = 15.0) -> ReferenceProfile:
    return ReferenceProfile(tuple(
        (i * seg_len, (i + 1) * seg_len, th, kp) for i, (th, kp) in enumerate(specs)
    ))


REF1 = _three_segments([(10.0, 8.0), (10.0, 6.0), (10.0, 4.0)])
REF2 = _three_segments([(5.0, 9.0), (15.0, 6.0), (10.0, 7.0)])

PROFILES = {"ref1": REF1, "ref2": REF2}


def load_profile(path: str | Path) -> ReferenceProfile:
    """Profile CSV: header start,end,theta_ref_deg,kp_ref."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["start", "end", "theta_ref_deg", "kp_ref"]:
            raise ValueError("expected header start,end,theta_ref_deg,kp_ref")
        segs = tuple((float(a), float(b), float(c), float(d)) for a, b, c, d in reader)
    return ReferenceProfile(segs)


def resolve_profile(name_or_path: str | Path) -> ReferenceProfile:
    if isinstance(name_or_path, str) and name_or_path in PROFILES:
        return PROFILES[name_or_path]
    return load_profile(name_or_path)


class MetricWindow(NamedTuple):
    k0: int
    k1: int


# Final 5 s of each 15 s segment at Ts = 20 ms.
CANONICAL_WINDOWS = (MetricWindow(500, 749), MetricWindow(1250, 1499), MetricWindow(2000, 2249))

TRACE_COLUMNS = (
    "time", "theta_ref_deg", "kp_ref", "theta_deg", "k_p", "u1", "u2",
    "p1", "p2", "e_theta_deg", "e_kp", "compute_time", "clamp_flags",
)


@dataclass
class SimTrace:
    """Column-oriented per-step record of one closed-loop run."""

    columns: dict[str, np.ndarray]
    xi: np.ndarray | None = None  # (n, 18) when recorded

    def __len__(self) -> int:
        return len(self.columns["time"])

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def to_csv(self, path: str | Path) -> None:
        names = list(TRACE_COLUMNS)
        cols = [self.columns[c] for c in names]
        if self.xi is not None:
            names += [f"xi_{j}" for j in range(1, 19)]
            cols += [self.xi[:, j] for j in range(18)]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(names)
            for k in range(len(self)):
                writer.writerow([_fmt(col[k]) for col in cols])

    @classmethod
    def from_csv(cls, path: str | Path) -> "SimTrace":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            names = next(reader)
            rows = [[float(x) for x in row] for row in reader]
        data = np.array(rows) if rows else np.zeros((0, len(names)))
        columns = {}
        for i, name in enumerate(names):
            if not name.startswith("xi_"):
                columns[name] = data[:, i]
        missing = set(TRACE_COLUMNS) - set(columns)
        if missing:
            raise ValueError(f"trace file missing columns {sorted(missing)}")
        xi_cols = [i for i, n in enumerate(names) if n.startswith("xi_")]
        xi = data[:, xi_cols] if xi_cols else None
        return cls(columns=columns, xi=xi)


def _fmt(x: float) -> str:
    x = float(x)
    if x == int(x) and abs(x) < 1e15:
        return repr(x)
    return format(x, ".12g")


class OriginalController:
    """Stateful wrapper around the rational controller step."""

    def __init__(self, pam: PamParams, gains: Gains):
        self.pam = pam
        self.gains = gains
        self.state = ControllerState()

    def step(self, zin: ControllerInput) -> tuple[float, float, tuple[bool, bool]]:
        self.state, u1, u2, flags = original_step(self.state, zin, self.gains, self.pam)
        return u1, u2, flags


class MatrixController:
    """Plaintext psi = Phi xi controller (the approximated path)."""

    def __init__(self, phi: np.ndarray):
        self.phi = np.asarray(phi, dtype=float)
        self.state = ControllerState()
        self.last_xi: np.ndarray | None = None
        self.last_psi: np.ndarray | None = None

    def step(self, zin: ControllerInput) -> tuple[float, float, tuple[bool, bool]]:
        xi = build_xi(zin, self.state)
        psi = poly_step(self.phi, xi)
        self.last_xi, self.last_psi = xi, psi
        self.state, u1, u2 = split_psi(psi)
        u1c, f1 = _clamp(u1)
        u2c, f2 = _clamp(u2)
        return u1c, u2c, (f1, f2)


class EncryptedController:
    """Full Enc -> (homomorphic products) -> Dec+ pipeline per step.

    The device side holds the keys and encodes/encrypts xi each step; the
    products come either from an in-process evaluation or a DeviceSession
    connected to a ControllerService. `last_plain_psi` carries the
    plaintext Phi xi value evaluated on the same xi for paired comparisons.
    """

    def __init__(self, phi: np.ndarray, keys: ElGamalKeys,
                 encoding: EncodingParams | None = None,
                 nonce_seed: int | None = 0,
                 session: DeviceSession | None = None):
        if keys.s is None:
            raise ValueError("the device side needs the secret key for Dec+")
        self.phi = np.asarray(phi, dtype=float)
        self.keys = keys
        self.encoding = encoding or EncodingParams()
        self.bounds = check_overflow_guard(self.encoding, self.phi, keys.p)
        self.zero_mask = self.phi == 0.0
        self.rng = Drbg(nonce_seed)
        self.session = session
        self.enc_phi = enc_matrix(self.phi, self.encoding, keys, self.rng)
        self.state = ControllerState()
        self.last_xi: np.ndarray | None = None
        self.last_psi: np.ndarray | None = None
        self.last_plain_psi: np.ndarray | None = None

    def step(self, zin: ControllerInput) -> tuple[float, float, tuple[bool, bool]]:
        xi = build_xi(zin, self.state)
        for j, (v, bound) in enumerate(zip(xi, self.encoding.xi_bounds)):
            if abs(v) > bound:
                raise OverflowError(
                    f"xi_{j+1} = {v!r} exceeds its declared bound {bound!r}")
        enc_xi = enc_vector(xi, self.encoding.delta_xi, self.keys, self.rng)
        if self.session is not None:
            products = self.session.eval(enc_xi)
        else:
            products = enc_eval(self.enc_phi, enc_xi, self.keys.p)
        psi = np.array(dec_plus(products, self.encoding, self.keys, self.bounds,
                                self.zero_mask))
        self.last_xi = xi
        self.last_psi = psi
        self.last_plain_psi = poly_step(self.phi, xi)
        self.state, u1, u2 = split_psi(psi)
        u1c, f1 = _clamp(u1)
        u2c, f2 = _clamp(u2)
        return u1c, u2c, (f1, f2)


def _clamp(u: float) -> tuple[float, bool]:
    if u < 0.0:
        return 0.0, True
    if u > 10.0:
        return 10.0, True
    return u, False


def make_controller(mode: str, *, pam: PamParams, gains: Gains, phi: np.ndarray | None,
                    keys: ElGamalKeys | None, encoding: EncodingParams | None,
                    nonce_seed: int | None, session: DeviceSession | None):
    if mode == "original":
        return OriginalController(pam, gains)
    if mode == "approx":
        if phi is None:
            raise ValueError("approx mode needs a Phi matrix")
        return MatrixController(phi)
    if mode == "encrypted":
        if phi is None or keys is None:
            raise ValueError("encrypted mode needs a Phi matrix and keys")
        return EncryptedController(phi, keys, encoding, nonce_seed, session)
    raise ValueError(f"unknown mode {mode!r}")


def run_closed_loop(
    mode: str,
    profile: ReferenceProfile,
    *,
    pam: PamParams = DEFAULT_PAM,
    plant: SurrogatePlantParams = DEFAULT_PLANT,
    gains: Gains = DEFAULT_GAINS,
    phi: np.ndarray | None = None,
    keys: ElGamalKeys | None = None,
    encoding: EncodingParams | None = None,
    nonce_seed: int | None = 0,
    session: DeviceSession | None = None,
    warmup: float = 10.0,
    noise_theta: float = 0.0,
    noise_pressure: float = 0.0,
    noise_seed: int = 0,
    measure_time: bool = False,
    record_xi: bool = False,
    anti_windup: bool = False,
    on_step: Callable[[int, object], None] | None = None,
) -> SimTrace:
    """Run one closed-loop session and return its trace.

    Warm-up holds 5.5 V with the controller off; the trace covers only the
    control phase (step k=0 is the first controller invocation). Per-step
    compute time covers the controller call only and is written as 0.0
    unless `measure_time` is set, keeping default traces byte-reproducible.
    """
    ts = gains.ts
    n_steps = int(round(profile.duration / ts))
    controller = make_controller(mode, pam=pam, gains=gains, phi=phi, keys=keys,
                                 encoding=encoding, nonce_seed=nonce_seed, session=session)

    state = PlantState()
    sub_dt = ts / plant.substeps
    for _ in range(int(round(warmup / ts)) * plant.substeps):
        state = plant_step(state, WARMUP_VOLTAGE, WARMUP_VOLTAGE, plant, pam, sub_dt)

    noise = np.random.default_rng(noise_seed) if (noise_theta or noise_pressure) else None

    cols = {name: np.zeros(n_steps) for name in TRACE_COLUMNS}
    xi_log = np.zeros((n_steps, 18)) if record_xi else None

    for k in range(n_steps):
        t = k * ts
        th_ref_deg, kp_ref = profile.lookup(t)

        theta_meas, p1_meas, p2_meas = state.theta, state.P1, state.P2
        if noise is not None:
            theta_meas += noise.normal(0.0, noise_theta) if noise_theta else 0.0
            if noise_pressure:
                p1_meas += noise.normal(0.0, noise_pressure)
                p2_meas += noise.normal(0.0, noise_pressure)
        kp_meas = measured_stiffness(
            PlantState(theta_meas, state.theta_dot, p1_meas, p2_meas), pam)

        zin = ControllerInput(P1=p1_meas, P2=p2_meas, theta=theta_meas,
                              theta_ref=math.radians(th_ref_deg), kp_ref=kp_ref)
        prev_state = controller.state
        t0 = time.perf_counter()
        u1, u2, (c1, c2) = controller.step(zin)
        elapsed = time.perf_counter() - t0

        if anti_windup:
            # conditional integration: hold a force integrator while its valve clamps
            if c1 or c2:
                controller.state = ControllerState(
                    controller.state.x_theta,
                    prev_state.x_f1 if c1 else controller.state.x_f1,
                    prev_state.x_f2 if c2 else controller.state.x_f2,
                )

        flags = (FLAG_U1_CLAMPED if c1 else 0) | (FLAG_U2_CLAMPED if c2 else 0)
        if measure_time and elapsed > ts:
            flags |= FLAG_DEADLINE_OVERRUN
        for _ in range(plant.substeps):
            state = plant_step(state, u1, u2, plant, pam, sub_dt)
        if abs(state.theta) >= THETA_LIMIT:
            flags |= FLAG_THETA_STOP
        if state.P1 in (PRESSURE_MIN, PRESSURE_MAX) or state.P2 in (PRESSURE_MIN, PRESSURE_MAX):
            flags |= FLAG_PRESSURE_LIMIT

        theta_deg = math.degrees(theta_meas)
        cols["time"][k] = t
        cols["theta_ref_deg"][k] = th_ref_deg
        cols["kp_ref"][k] = kp_ref
        cols["theta_deg"][k] = theta_deg
        cols["k_p"][k] = kp_meas
        cols["u1"][k] = u1
        cols["u2"][k] = u2
        cols["p1"][k] = p1_meas
        cols["p2"][k] = p2_meas
        cols["e_theta_deg"][k] = th_ref_deg - theta_deg
        cols["e_kp"][k] = kp_ref - kp_meas
        cols["compute_time"][k] = elapsed if measure_time else 0.0
        cols["clamp_flags"][k] = flags
        if xi_log is not None and getattr(controller, "last_xi", None) is not None:
            xi_log[k] = controller.last_xi
        if on_step is not None:
            on_step(k, controller)

    return SimTrace(columns=cols, xi=xi_log)


def l2_score(z: Sequence[float], z_ref: Sequence[float], window: MetricWindow) -> float:
    """Root of the summed squared tracking error over the closed window [k0, k1].

    The sum runs left to right in index order so the value is bit-identical
    to a naive reference loop.
    """
    z = np.asarray(z, dtype=float)
    z_ref = np.asarray(z_ref, dtype=float)
    if not (0 <= window.k0 <= window.k1 < min(len(z), len(z_ref))):
        raise ValueError(f"window {window} outside sequence bounds")
    total = 0.0
    for k in range(window.k0, window.k1 + 1):
        d = float(z[k]) - float(z_ref[k])
        total += d * d
    return math.sqrt(total)


@dataclass(frozen=True)
class ReportRow:
    label: str
    window: MetricWindow
    signal: str  # "theta" or "k_p"
    gamma_mean: float
    gamma_min: float
    gamma_max: float
    ref_value: float
    tracked_mean: float
    tracking_pct: float       # 100*(1 - |mean - ref|/|ref|), the headline ratio
    mean_abs_err_pct: float   # 100*mean|z - ref|/|ref|


@dataclass(frozen=True)
class CompareReport:
    rows: tuple[ReportRow, ...]

    def worst_tracking_pct(self) -> float:
        return min(r.tracking_pct for r in self.rows)

    def to_text(self) -> str:
        head = (f"{'label':<10} {'window':<12} {'signal':<6} {'gamma(mean)':>12} "
                f"{'gamma(min)':>11} {'gamma(max)':>11} {'track%':>8} {'mae%':>7}")
        lines = [head, "-" * len(head)]
        for r in self.rows:
            lines.append(
                f"{r.label:<10} [{r.window.k0},{r.window.k1}]".ljust(23)
                + f" {r.signal:<6} {r.gamma_mean:>12.6g} {r.gamma_min:>11.6g} "
                f"{r.gamma_max:>11.6g} {r.tracking_pct:>8.2f} {r.mean_abs_err_pct:>7.3f}")
        lines.append(f"worst tracked-to-reference ratio: {self.worst_tracking_pct():.2f} %")
        return "\n".join(lines)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["label", "k0", "k1", "signal", "gamma_mean", "gamma_min",
                             "gamma_max", "ref_value", "tracked_mean",
                             "tracking_pct", "mean_abs_err_pct"])
            for r in self.rows:
                writer.writerow([r.label, r.window.k0, r.window.k1, r.signal,
                                 *(format(x, ".12g") for x in (
                                     r.gamma_mean, r.gamma_min, r.gamma_max, r.ref_value,
                                     r.tracked_mean, r.tracking_pct, r.mean_abs_err_pct))])


_SIGNALS = {"theta": ("theta_deg", "theta_ref_deg"), "k_p": ("k_p", "kp_ref")}


def window_tracking_stats(trace: SimTrace, window: MetricWindow) -> dict[str, dict[str, float]]:
    """Per-signal gamma, reference, tracked mean, and error percentages for one window."""
    out = {}
    for signal, (col, ref_col) in _SIGNALS.items():
        z = trace[col][window.k0:window.k1 + 1]
        ref = trace[ref_col][window.k0:window.k1 + 1]
        ref_val = float(ref[0])
        if not np.all(ref == ref_val):
            raise ValueError("metric window spans a reference step")
        gamma = l2_score(trace[col], trace[ref_col], window)
        tracked = float(np.mean(z))
        out[signal] = {
            "gamma": gamma,
            "ref": ref_val,
            "tracked_mean": tracked,
            "tracking_pct": 100.0 * (1.0 - abs(tracked - ref_val) / abs(ref_val)),
            "mean_abs_err_pct": 100.0 * float(np.mean(np.abs(z - ref))) / abs(ref_val),
        }
    return out


def compare_report(traces: Mapping[str, Sequence[SimTrace]],
                   windows: Sequence[MetricWindow] = CANONICAL_WINDOWS) -> CompareReport:
    """Score a labeled set of runs; run-to-run spread shows up as gamma min/max."""
    ref_cols = None
    for label, runs in traces.items():
        for tr in runs:
            cols = (tuple(tr["theta_ref_deg"]), tuple(tr["kp_ref"]))
            if ref_cols is None:
                ref_cols = cols
            elif cols != ref_cols:
                raise ValueError(f"trace under label {label!r} has a different profile")
    rows = []
    for label, runs in traces.items():
        for window in windows:
            for signal in _SIGNALS:
                stats = [window_tracking_stats(tr, window)[signal] for tr in runs]
                gammas = [s["gamma"] for s in stats]
                rows.append(ReportRow(
                    label=label,
                    window=window,
                    signal=signal,
                    gamma_mean=float(np.mean(gammas)),
                    gamma_min=float(np.min(gammas)),
                    gamma_max=float(np.max(gammas)),
                    ref_value=stats[0]["ref"],
                    tracked_mean=float(np.mean([s["tracked_mean"] for s in stats])),
                    tracking_pct=float(np.mean([s["tracking_pct"] for s in stats])),
                    mean_abs_err_pct=float(np.mean([s["mean_abs_err_pct"] for s in stats])),
                ))
    return CompareReport(rows=tuple(rows))
