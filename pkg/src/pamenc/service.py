"""Networked encrypted-controller service and the device-side session.

The service holds only the encrypted controller matrix and the public
modulus: it multiplies ciphertexts and never sees the secret key or any
plaintext. The device encrypts xi, sends an EVAL_REQUEST per control step,
and runs Dec+ on the 90 product ciphertexts in the response.
"""

from __future__ import annotations

import socket
import threading

from . import protocol
from .crypto import Ciphertext, enc_eval
from .protocol import (
    ERR_INTERNAL,
    ERR_MALFORMED,
    ERR_VERSION,
    MSG_ERROR,
    MSG_EVAL_REQUEST,
    MSG_EVAL_RESPONSE,
    PROTOCOL_VERSION,
    ProtocolError,
)

DEFAULT_TIMEOUT = 0.015  # matches the control-period deadline budget


class ControllerService:
    """TCP server evaluating Enc(Phi) * Enc(xi) products, one session per connection."""

    def __init__(self, enc_phi: list[list[Ciphertext]], p: int,
                 host: str = "127.0.0.1", port: int = 0):
        self._enc_phi = enc_phi
        self._p = p
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(8)
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._accept_thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._sock.getsockname()

    def start(self) -> "ControllerService":
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()
        return self

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = self._sock.accept()
            except OSError:
                break
            t = threading.Thread(target=self._serve_session, args=(conn,), daemon=True)
            t.start()
            self._threads.append(t)

    def _serve_session(self, conn: socket.socket) -> None:
        with conn:
            while not self._stop.is_set():
                try:
                    msg_type, version, payload = protocol.read_frame(conn)
                except (EOFError, ConnectionError, OSError):
                    return
                except ProtocolError as exc:
                    self._send_error(conn, exc.code, exc.reason)
                    return
                try:
                    if version != PROTOCOL_VERSION:
                        raise ProtocolError(ERR_VERSION,
                                            f"server speaks version {PROTOCOL_VERSION}, got {version}")
                    if msg_type != MSG_EVAL_REQUEST:
                        raise ProtocolError(ERR_MALFORMED, f"unexpected message type {msg_type:#x}")
                    enc_xi = protocol.parse_counted_ciphertexts(payload, protocol.REQUEST_COUNT)
                    products = enc_eval(self._enc_phi, enc_xi, self._p)
                    flat = [ct for row in products for ct in row]
                    conn.sendall(protocol.pack_eval_response(flat))
                except ProtocolError as exc:
                    self._send_error(conn, exc.code, exc.reason)
                    return
                except Exception as exc:  # pragma: no cover - defensive
                    self._send_error(conn, ERR_INTERNAL, repr(exc))
                    return

    @staticmethod
    def _send_error(conn: socket.socket, code: int, reason: str) -> None:
        # Drain unread input before closing: closing with pending receive data
        # resets the connection and can destroy the error frame in flight.
        try:
            conn.sendall(protocol.pack_error(code, reason))
            conn.shutdown(socket.SHUT_WR)
            conn.settimeout(0.2)
            while conn.recv(4096):
                pass
        except OSError:
            pass

    def stop(self) -> None:
        self._stop.set()
        try:
            self._sock.close()
        except OSError:
            pass
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=1.0)
        for t in self._threads:
            t.join(timeout=1.0)

    def __enter__(self) -> "ControllerService":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


class DeviceSession:
    """Client session: sends encrypted xi vectors, receives product matrices."""

    def __init__(self, address: tuple[str, int], timeout: float = DEFAULT_TIMEOUT):
        self._sock = socket.create_connection(address, timeout=max(timeout, 0.05))
        self._sock.settimeout(timeout)

    def eval(self, enc_xi: list[Ciphertext]) -> list[list[Ciphertext]]:
        """One round trip; returns the 5x18 product ciphertext matrix."""
        self._sock.sendall(protocol.pack_eval_request(enc_xi))
        try:
            msg_type, version, payload = protocol.read_frame(self._sock)
        except socket.timeout:
            raise TimeoutError("controller service response deadline exceeded") from None
        if msg_type == MSG_ERROR:
            raise protocol.parse_error(payload)
        if version != PROTOCOL_VERSION:
            raise ProtocolError(ERR_VERSION, f"device speaks {PROTOCOL_VERSION}, got {version}")
        if msg_type != MSG_EVAL_RESPONSE:
            raise ProtocolError(ERR_MALFORMED, f"unexpected message type {msg_type:#x}")
        flat = protocol.parse_counted_ciphertexts(payload, protocol.RESPONSE_COUNT)
        return [flat[i * 18:(i + 1) * 18] for i in range(5)]

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass

    def __enter__(self) -> "DeviceSession":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
