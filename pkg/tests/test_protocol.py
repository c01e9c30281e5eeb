"""Wire framing, the networked service, and loopback equivalence."""

import socket
import struct
import threading

import numpy as np
import pytest

from pamenc import (
    DEFAULT_GAINS,
    DEFAULT_PAM,
    Ciphertext,
    ControllerService,
    DeviceSession,
    Drbg,
    EncodingParams,
    build_phi,
    enc_eval,
    enc_matrix,
    enc_vector,
    fit_controller_coeffs,
    keygen,
)
from pamenc import protocol
from pamenc.protocol import (
    ERR_COUNT,
    ERR_MALFORMED,
    ERR_VERSION,
    MSG_ERROR,
    MSG_EVAL_REQUEST,
    PROTOCOL_VERSION,
    ProtocolError,
)


@pytest.fixture(scope="module")
def keys():
    return keygen(bits=64, seed=2024)


@pytest.fixture(scope="module")
def phi():
    coeffs, _ = fit_controller_coeffs(DEFAULT_PAM)
    return build_phi(coeffs, DEFAULT_PAM, DEFAULT_GAINS)


@pytest.fixture(scope="module")
def enc_phi(phi, keys):
    return enc_matrix(phi, EncodingParams(), keys, Drbg(123))


@pytest.fixture()
def service(enc_phi, keys):
    with ControllerService(enc_phi, keys.p) as svc:
        yield svc


class TestFraming:
    def test_ciphertext_roundtrip(self):
        cts = [Ciphertext(1, 2), Ciphertext(2**63 - 1, 12345678901234567)]
        packed = protocol.pack_ciphertexts(cts)
        got, offset = protocol.unpack_ciphertexts(packed, 0, 2)
        assert got == cts and offset == len(packed)

    def test_frame_roundtrip_over_socketpair(self):
        a, b = socket.socketpair()
        try:
            a.sendall(protocol.pack_eval_request([Ciphertext(5, 9)] * 18))
            msg_type, version, payload = protocol.read_frame(b)
            assert msg_type == MSG_EVAL_REQUEST and version == PROTOCOL_VERSION
            cts = protocol.parse_counted_ciphertexts(payload, 18)
            assert cts == [Ciphertext(5, 9)] * 18
        finally:
            a.close()
            b.close()

    def test_magnitudes_must_be_positive(self):
        with pytest.raises(ValueError):
            protocol.encode_magnitude(0)

    def test_truncated_payload_rejected(self):
        payload = struct.pack(">H", 2) + protocol.pack_ciphertexts([Ciphertext(5, 9)])
        with pytest.raises(ProtocolError) as err:
            protocol.parse_counted_ciphertexts(payload, 2)
        assert err.value.code == ERR_MALFORMED

    def test_count_mismatch_rejected(self):
        payload = struct.pack(">H", 3) + protocol.pack_ciphertexts([Ciphertext(5, 9)] * 3)
        with pytest.raises(ProtocolError) as err:
            protocol.parse_counted_ciphertexts(payload, 18)
        assert err.value.code == ERR_COUNT

    def test_oversized_frame_rejected(self):
        a, b = socket.socketpair()
        try:
            a.sendall(struct.pack(">I", protocol.MAX_FRAME + 1))
            with pytest.raises(ProtocolError) as err:
                protocol.read_frame(b)
            assert err.value.code == ERR_MALFORMED
        finally:
            a.close()
            b.close()

    def test_error_frame_roundtrip(self):
        frame = protocol.pack_error(ERR_VERSION, "nope")
        msg_type = frame[4]
        assert msg_type == MSG_ERROR
        err = protocol.parse_error(frame[7:])
        assert err.code == ERR_VERSION and err.reason == "nope"


class TestService:
    def test_loopback_matches_in_process(self, service, enc_phi, keys):
        rng = Drbg(55)
        xi = np.linspace(-1.0, 1.0, 18)
        enc_xi = enc_vector(xi, 1e8, keys, rng)
        want = enc_eval(enc_phi, enc_xi, keys.p)
        with DeviceSession(service.address, timeout=2.0) as dev:
            got = dev.eval(enc_xi)
        assert got == want  # ciphertext-level (byte-for-byte) equality

    def test_loopback_bytes_equal(self, service, enc_phi, keys):
        rng = Drbg(56)
        enc_xi = enc_vector(np.ones(18), 1e8, keys, rng)
        flat = [ct for row in enc_eval(enc_phi, enc_xi, keys.p) for ct in row]
        want_bytes = protocol.pack_eval_response(flat)
        sock = socket.create_connection(service.address, timeout=2.0)
        try:
            sock.sendall(protocol.pack_eval_request(enc_xi))
            got = protocol.recv_exact(sock, len(want_bytes))
        finally:
            sock.close()
        assert got == want_bytes

    def test_multiple_steps_one_session(self, service, enc_phi, keys):
        rng = Drbg(57)
        with DeviceSession(service.address, timeout=2.0) as dev:
            for _ in range(5):
                enc_xi = enc_vector(np.ones(18), 1e8, keys, rng)
                got = dev.eval(enc_xi)
                assert got == enc_eval(enc_phi, enc_xi, keys.p)

    def test_malformed_length_prefix(self, service):
        sock = socket.create_connection(service.address, timeout=2.0)
        try:
            sock.sendall(struct.pack(">I", 2) + b"xx")  # below minimum body size
            msg_type, _, payload = protocol.read_frame(sock)
            assert msg_type == MSG_ERROR
            assert protocol.parse_error(payload).code == ERR_MALFORMED
            assert sock.recv(1) == b""  # session closed
        finally:
            sock.close()

    def test_version_mismatch_rejected(self, service, keys):
        rng = Drbg(58)
        enc_xi = enc_vector(np.ones(18), 1e8, keys, rng)
        payload = struct.pack(">H", 18) + protocol.pack_ciphertexts(enc_xi)
        frame = protocol.pack_frame(MSG_EVAL_REQUEST, payload, version=99)
        sock = socket.create_connection(service.address, timeout=2.0)
        try:
            sock.sendall(frame)
            msg_type, _, body = protocol.read_frame(sock)
            assert msg_type == MSG_ERROR
            assert protocol.parse_error(body).code == ERR_VERSION
            assert sock.recv(1) == b""
        finally:
            sock.close()

    def test_wrong_count_rejected(self, service, keys):
        rng = Drbg(59)
        enc_xi = enc_vector(np.ones(7), 1e8, keys, rng)
        sock = socket.create_connection(service.address, timeout=2.0)
        try:
            sock.sendall(protocol.pack_eval_request(enc_xi))
            msg_type, _, body = protocol.read_frame(sock)
            assert msg_type == MSG_ERROR
            assert protocol.parse_error(body).code == ERR_COUNT
        finally:
            sock.close()

    def test_device_session_surfaces_errors(self, service, keys):
        rng = Drbg(60)
        enc_xi = enc_vector(np.ones(5), 1e8, keys, rng)
        with DeviceSession(service.address, timeout=2.0) as dev:
            with pytest.raises(ProtocolError) as err:
                dev.eval(enc_xi)
            assert err.value.code == ERR_COUNT

    def test_service_survives_bad_clients(self, service, enc_phi, keys):
        # a crashing client must not leak the listener or wedge later sessions
        for _ in range(3):
            sock = socket.create_connection(service.address, timeout=2.0)
            sock.sendall(b"\x00\x00")  # partial length prefix, then vanish
            sock.close()
        rng = Drbg(61)
        enc_xi = enc_vector(np.ones(18), 1e8, keys, rng)
        with DeviceSession(service.address, timeout=2.0) as dev:
            assert dev.eval(enc_xi) == enc_eval(enc_phi, enc_xi, keys.p)

    def test_concurrent_sessions(self, service, enc_phi, keys):
        results = []

        def worker(seed):
            rng = Drbg(seed)
            enc_xi = enc_vector(np.full(18, 0.5), 1e8, keys, rng)
            with DeviceSession(service.address, timeout=2.0) as dev:
                results.append(dev.eval(enc_xi) == enc_eval(enc_phi, enc_xi, keys.p))

        threads = [threading.Thread(target=worker, args=(100 + i,)) for i in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert results == [True] * 4
