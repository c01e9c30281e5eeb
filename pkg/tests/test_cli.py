"""CLI subcommands, exit codes, and file-level workflows."""

import threading

import numpy as np
import pytest

from pamenc import SimTrace, load_keys, load_phi
from pamenc.cli import EXIT_BAD_COMBINATION, EXIT_MISSING_FILE, main


@pytest.fixture()
def short_profile(tmp_path):
    path = tmp_path / "profile.csv"
    path.write_text("start,end,theta_ref_deg,kp_ref\n0,2,5,6\n")
    return path


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """keygen + fit + build-phi artifacts shared across CLI tests."""
    ws = tmp_path_factory.mktemp("cli")
    assert main(["keygen", "--bits", "64", "--seed", "2024",
                 "--out", str(ws / "key")]) == 0
    assert main(["fit", "--grid", "13", "--out", str(ws / "coeffs.csv")]) == 0
    assert main(["build-phi", "--coeffs", str(ws / "coeffs.csv"),
                 "--gains", "surrogate", "--out", str(ws / "phi.csv")]) == 0
    return ws


class TestArtifacts:
    def test_keygen_wrote_pair(self, workspace):
        pub = load_keys(workspace / "key.pub")
        sec = load_keys(workspace / "key.sec")
        assert pub.s is None and sec.s is not None
        assert pub.p == sec.p and pub.p.bit_length() == 64

    def test_phi_file_shape(self, workspace):
        phi = load_phi(workspace / "phi.csv")
        assert phi.shape == (5, 18)
        assert phi[0][4] == 1.0


class TestSimulate:
    def test_original_smoke(self, workspace, short_profile, tmp_path):
        out = tmp_path / "trace.csv"
        rc = main(["simulate", "--mode", "original", "--profile", str(short_profile),
                   "--warmup", "2", "--out", str(out)])
        assert rc == 0
        trace = SimTrace.from_csv(out)
        assert len(trace) == 100

    def test_encrypted_without_keys_is_usage_error(self, workspace, short_profile, tmp_path):
        rc = main(["simulate", "--mode", "encrypted", "--profile", str(short_profile),
                   "--phi", str(workspace / "phi.csv"), "--out", str(tmp_path / "t.csv")])
        assert rc == EXIT_BAD_COMBINATION

    def test_encrypted_needs_secret_part(self, workspace, short_profile, tmp_path):
        rc = main(["simulate", "--mode", "encrypted", "--profile", str(short_profile),
                   "--phi", str(workspace / "phi.csv"),
                   "--keys", str(workspace / "key.pub"), "--out", str(tmp_path / "t.csv")])
        assert rc == EXIT_BAD_COMBINATION

    def test_missing_file_exit_code(self, tmp_path):
        rc = main(["simulate", "--mode", "approx", "--profile", "ref2",
                   "--phi", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "t.csv")])
        assert rc == EXIT_MISSING_FILE

    def test_unknown_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--mode", "original", "--frobnicate"])
        assert exc.value.code == 2

    def test_byte_identical_reruns(self, workspace, short_profile, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["simulate", "--mode", "encrypted", "--profile", str(short_profile),
                "--phi", str(workspace / "phi.csv"), "--keys", str(workspace / "key.sec"),
                "--seed", "3", "--warmup", "2"]
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_env_out_dir_override(self, workspace, short_profile, tmp_path, monkeypatch):
        monkeypatch.setenv("PAMENC_OUT_DIR", str(tmp_path / "outputs"))
        rc = main(["simulate", "--mode", "original", "--profile", str(short_profile),
                   "--warmup", "2", "--out", "trace.csv"])
        assert rc == 0
        assert (tmp_path / "outputs" / "trace.csv").exists()


class TestEvaluateCompare:
    @pytest.fixture()
    def trace_file(self, workspace, short_profile, tmp_path):
        out = tmp_path / "trace.csv"
        main(["simulate", "--mode", "original", "--profile", str(short_profile),
              "--warmup", "2", "--out", str(out)])
        return out

    def test_evaluate_matches_l2_oracle(self, trace_file, capsys, tmp_path):
        report_csv = tmp_path / "report.csv"
        rc = main(["evaluate", "--trace", str(trace_file), "--windows", "50:99",
                   "--out", str(report_csv)])
        assert rc == 0
        trace = SimTrace.from_csv(trace_file)
        want = np.sqrt(np.sum((trace["theta_deg"][50:100] - trace["theta_ref_deg"][50:100]) ** 2))
        rows = report_csv.read_text().splitlines()
        theta_row = next(r for r in rows if ",theta," in r)
        got = float(theta_row.split(",")[4])
        assert got == pytest.approx(want, rel=1e-10)

    def test_compare_two_traces(self, trace_file, tmp_path, capsys):
        rc = main(["compare", "--traces", str(trace_file), str(trace_file),
                   "--labels", "a", "b", "--windows", "50:99"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "worst tracked-to-reference ratio" in out

    def test_compare_label_mismatch(self, trace_file):
        rc = main(["compare", "--traces", str(trace_file), "--labels", "a", "b"])
        assert rc == EXIT_BAD_COMBINATION


class TestServeIntegration:
    def test_simulate_through_service(self, workspace, short_profile, tmp_path):
        from pamenc import ControllerService, Drbg, EncodingParams, enc_matrix

        phi = load_phi(workspace / "phi.csv")
        keys = load_keys(workspace / "key.sec")
        enc_phi = enc_matrix(phi, EncodingParams(), keys, Drbg(None))
        direct = tmp_path / "direct.csv"
        netted = tmp_path / "netted.csv"
        args = ["simulate", "--mode", "encrypted", "--profile", str(short_profile),
                "--phi", str(workspace / "phi.csv"), "--keys", str(workspace / "key.sec"),
                "--seed", "5", "--warmup", "2", "--net-timeout", "2.0"]
        assert main(args + ["--out", str(direct)]) == 0
        with ControllerService(enc_phi, keys.p) as svc:
            host, port = svc.address
            assert main(args + ["--connect", f"{host}:{port}", "--out", str(netted)]) == 0
        assert direct.read_bytes() == netted.read_bytes()
