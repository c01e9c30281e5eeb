"""Encrypted simultaneous angle-stiffness control of an antagonistic PAM actuator.

Subsystems: `pam` (actuator model and surrogate plant), `controller` (the
rational controller), `polyfit` (LASSO polynomial approximation),
`polyctrl` (matrix-vector controller), `crypto` (multiplicative ElGamal and
fixed-point encoding), `protocol`/`service` (wire format and networked
evaluation), `harness` (closed-loop runs, scoring, traces), `cli`.
"""

from .controller import (
    ControllerInput,
    ControllerState,
    closed_form_step_raw,
    original_step,
    original_step_raw,
    pi_angle_step,
    pi_force_step,
    rational_terms,
    reference_forces,
)
from .crypto import (
    Ciphertext,
    Drbg,
    ElGamalKeys,
    EncodingParams,
    check_overflow_guard,
    dec_plus,
    decode,
    decrypt,
    enc_eval,
    enc_matrix,
    enc_vector,
    encode,
    encrypt,
    hom_mul,
    keygen,
    load_keys,
    save_keys,
)
from .harness import (
    CANONICAL_WINDOWS,
    REF1,
    REF2,
    CompareReport,
    EncryptedController,
    MatrixController,
    MetricWindow,
    OriginalController,
    ReferenceProfile,
    SimTrace,
    compare_report,
    l2_score,
    resolve_profile,
    run_closed_loop,
    window_tracking_stats,
)
from .pam import (
    PlantState,
    alpha,
    contraction_force,
    estimate_force,
    joint_stiffness,
    joint_torque,
    measured_stiffness,
    pam_lengths,
    plant_step,
)
from .params import (
    DEFAULT_GAINS,
    DEFAULT_PAM,
    DEFAULT_PLANT,
    GAIN_PRESETS,
    Gains,
    MuscleCoeffs,
    PamParams,
    SurrogatePlantParams,
    load_gains,
    load_pam_params,
    load_plant_params,
    load_table2_muscle,
    with_load_mass,
)
from .polyctrl import approx_step, build_phi, build_xi, load_phi, poly_step, save_phi, split_psi
from .polyfit import (
    FeatureSpec,
    PolyCoeffs,
    eval_fhat,
    fit_controller_coeffs,
    lasso_fit,
    load_coeffs,
    load_table2_coeffs,
    prune,
    sample_grid,
    save_coeffs,
)
from .service import ControllerService, DeviceSession

__version__ = "0.1.0"
