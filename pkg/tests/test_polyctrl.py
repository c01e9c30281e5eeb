"""xi assembly, Phi generation, and the two polynomial-controller paths."""

import numpy as np
import pytest

from pamenc import (
    DEFAULT_GAINS,
    DEFAULT_PAM,
    ControllerInput,
    ControllerState,
    Gains,
    approx_step,
    build_phi,
    build_xi,
    fit_controller_coeffs,
    load_phi,
    load_table2_coeffs,
    load_table2_muscle,
    original_step_raw,
    poly_step,
    save_phi,
    split_psi,
)

GAINS_TABLE2 = Gains(gp_theta=1.3, gi_theta=0.243, gp_force=0.088, gi_force=0.025)


@pytest.fixture(scope="module")
def coeffs():
    c, _ = fit_controller_coeffs(DEFAULT_PAM)
    return c


@pytest.fixture(scope="module")
def phi(coeffs):
    return build_phi(coeffs, DEFAULT_PAM, DEFAULT_GAINS)


def random_case(rng, x_theta_range=25.0):
    # wide state box stresses the algebraic identity; the closed loop itself
    # keeps x_theta within ~ load/Gi_theta (about +-1.5)
    state = ControllerState(rng.uniform(-x_theta_range, x_theta_range),
                            *rng.uniform(-25.0, 25.0, 2))
    zin = ControllerInput(
        P1=rng.uniform(200.0, 750.0),
        P2=rng.uniform(200.0, 750.0),
        theta=rng.uniform(-0.43, 0.43),
        theta_ref=rng.uniform(-0.43, 0.43),
        kp_ref=rng.uniform(4.0, 9.0),
    )
    return state, zin


class TestBuildXi:
    def test_all_zero_inputs(self):
        xi = build_xi(ControllerInput(0, 0, 0, 0, 0), ControllerState())
        want = np.zeros(18)
        want[15] = 1.0
        assert np.array_equal(xi, want)

    def test_hand_multiplied_example(self):
        zin = ControllerInput(P1=0.0, P2=0.0, theta=2.0, theta_ref=3.0, kp_ref=0.0)
        xi = build_xi(zin, ControllerState(x_theta=5.0))
        assert xi[5] == 6.0    # th_ref*th
        assert xi[7] == 10.0   # x_th*th
        assert xi[8] == 12.0   # th_ref*th^2
        assert xi[9] == 8.0    # th^3
        assert xi[10] == 20.0  # x_th*th^2

    def test_monomial_consistency(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            state, zin = random_case(rng)
            xi = build_xi(zin, state)
            assert xi[15] == 1.0
            assert xi[6] == pytest.approx(xi[3] ** 2, rel=1e-15)
            assert xi[9] == pytest.approx(xi[3] ** 3, rel=1e-15)
            assert xi[5] == pytest.approx(xi[2] * xi[3], rel=1e-15)
            assert xi[7] == pytest.approx(xi[4] * xi[3], rel=1e-15)
            assert xi[12] == pytest.approx(xi[3] * xi[11], rel=1e-15)
            assert xi[14] == pytest.approx(xi[3] * xi[13], rel=1e-15)


class TestBuildPhi:
    def test_row1_structure(self, phi):
        row = phi[0]
        assert row[2] == DEFAULT_GAINS.ts
        assert row[3] == -DEFAULT_GAINS.ts
        assert row[4] == 1.0
        assert np.count_nonzero(row) == 3

    def test_published_spot_checks(self):
        # Ts at (1,3); Ts*w1 at (2,1); Gi_F at (4,17) -- with the published
        # coefficient table and its companion gain set
        phi = build_phi(load_table2_coeffs(), load_table2_muscle(), GAINS_TABLE2)
        assert phi[0][2] == 0.02
        assert phi[1][0] == pytest.approx(0.02 * -61.7, rel=1e-12)
        assert phi[1][0] == pytest.approx(-1.234, rel=1e-12)
        assert phi[3][16] == GAINS_TABLE2.gi_force
        assert phi[4][17] == GAINS_TABLE2.gi_force
        # bias-added constant column entries
        assert phi[3][15] == pytest.approx(
            0.088 * (-1.58 + 36.5 + -9.35 - (-19.01)) + 5.0, rel=1e-12)

    def test_integral_columns(self, phi):
        assert phi[1][16] == 1.0 and phi[2][17] == 1.0
        assert phi[3][16] == DEFAULT_GAINS.gi_force
        assert phi[4][17] == DEFAULT_GAINS.gi_force
        assert phi[3][17] == 0.0 and phi[4][16] == 0.0

    def test_csv_roundtrip(self, phi, tmp_path):
        path = tmp_path / "phi.csv"
        save_phi(path, phi)
        assert np.array_equal(load_phi(path), phi)

    def test_csv_shape_validated(self, tmp_path):
        path = tmp_path / "bad.csv"
        np.savetxt(path, np.zeros((4, 18)), delimiter=",")
        with pytest.raises(ValueError):
            load_phi(path)


class TestPolyStep:
    def test_unit_vector_selects_column(self, phi):
        xi = np.zeros(18)
        xi[15] = 1.0
        assert np.array_equal(poly_step(phi, xi), phi[:, 15])

    def test_zero_vector(self, phi):
        assert np.array_equal(poly_step(phi, np.zeros(18)), np.zeros(5))

    def test_matches_double_loop(self, phi):
        rng = np.random.default_rng(1)
        xi = rng.normal(size=18)
        got = poly_step(phi, xi)
        want = [sum(phi[i][j] * xi[j] for j in range(18)) for i in range(5)]
        assert got == pytest.approx(want, rel=1e-15)

    def test_dimension_checks(self, phi):
        with pytest.raises(ValueError):
            poly_step(phi[:, :17], np.zeros(17))
        with pytest.raises(ValueError):
            poly_step(phi, np.zeros(17))


class TestApproxStep:
    def test_matches_phi_path(self, coeffs, phi):
        rng = np.random.default_rng(2)
        worst = 0.0
        for _ in range(2000):
            state, zin = random_case(rng)
            s, u1, u2 = approx_step(state, zin, coeffs, DEFAULT_PAM, DEFAULT_GAINS)
            psi = poly_step(phi, build_xi(zin, state))
            va = np.array([*s.as_tuple(), u1, u2])
            worst = max(worst, float(np.max(np.abs(va - psi) / np.maximum(np.abs(psi), 1.0))))
        assert worst <= 1e-12

    def test_row1_is_angle_error_integrator(self, phi):
        rng = np.random.default_rng(3)
        for _ in range(50):
            state, zin = random_case(rng)
            psi = poly_step(phi, build_xi(zin, state))
            assert psi[0] == pytest.approx(
                state.x_theta + DEFAULT_GAINS.ts * (zin.theta_ref - zin.theta), rel=1e-12)

    def test_constant_only_column_product(self, coeffs, phi):
        zin = ControllerInput(0.0, 0.0, 0.0, 0.0, 0.0)
        _, u1, u2 = approx_step(ControllerState(), zin, coeffs, DEFAULT_PAM, DEFAULT_GAINS)
        assert u1 == pytest.approx(phi[3][15], rel=1e-12)
        assert u2 == pytest.approx(phi[4][15], rel=1e-12)

    def test_split_psi_ordering(self, phi):
        psi = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
        state, u1, u2 = split_psi(psi)
        assert state.as_tuple() == (1.0, 2.0, 3.0) and (u1, u2) == (4.0, 5.0)

    def test_tracks_original_on_operating_box(self, coeffs):
        # approximation-quality property: outputs deviate by <= 5% of each
        # component's scale over the reachable box (x_theta settles near
        # load_torque/Gi_theta, well under +-3)
        rng = np.random.default_rng(4)
        scale = np.array([1.0, 30.0, 30.0, 10.0, 10.0])
        worst = np.zeros(5)
        for _ in range(2000):
            state, zin = random_case(rng, x_theta_range=3.0)
            sa, ua1, ua2 = approx_step(state, zin, coeffs, DEFAULT_PAM, DEFAULT_GAINS)
            so, uo1, uo2 = original_step_raw(state, zin, DEFAULT_GAINS, DEFAULT_PAM)
            va = np.array([*sa.as_tuple(), ua1, ua2])
            vo = np.array([*so.as_tuple(), uo1, uo2])
            worst = np.maximum(worst, np.abs(va - vo) / scale)
        assert np.all(worst <= 0.05), worst
