"""Multiplicative-homomorphic ElGamal with signed fixed-point encoding.

The group is the full multiplicative group mod a safe prime, with signed
values embedded as centered representatives in (-p/2, p/2). Zero cannot be
represented multiplicatively, so it encodes as 1 (value 1/delta after
decoding). One controller step encrypts the 18 xi entries, multiplies them
elementwise against Enc(Phi), and decrypts/decodes the 90 products before
summing rows in plaintext (Dec+).

This is a demonstration-scale construction: 64-bit keys and a full-group
embedding (which leaks quadratic residuosity) are NOT production
cryptography. Key sizes and scaling follow the evaluated real-time setup.
"""

from __future__ import annotations

import hashlib
import math
import secrets
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

# Deterministic Miller-Rabin base set: exact for n < 3.317e24 (~81 bits).
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)
_MR_DETERMINISTIC_LIMIT = 3_317_044_064_679_887_385_961_981

_SMALL_PRIMES: list[int] = []


def _small_primes() -> list[int]:
    if not _SMALL_PRIMES:
        sieve = bytearray([1]) * 2000
        sieve[0] = sieve[1] = 0
        for i in range(2, 45):
            if sieve[i]:
                sieve[i * i:: i] = bytearray(len(sieve[i * i:: i]))
        _SMALL_PRIMES.extend(i for i, v in enumerate(sieve) if v)
    return _SMALL_PRIMES


class Drbg:
    """Seedable deterministic byte stream (SHA-256 counter mode).

    With seed=None it defers to the OS CSPRNG. The deterministic mode exists
    for reproducible keys, nonces, and test vectors.
    """

    def __init__(self, seed: int | bytes | None = None):
        if seed is None:
            self._state = None
        else:
            if isinstance(seed, int):
                seed = seed.to_bytes(32, "big", signed=False) if seed >= 0 else str(seed).encode()
            self._state = hashlib.sha256(b"pamenc-drbg:" + seed).digest()
            self._counter = 0

    def randbytes(self, n: int) -> bytes:
        if self._state is None:
            return secrets.token_bytes(n)
        out = bytearray()
        while len(out) < n:
            block = hashlib.sha256(self._state + self._counter.to_bytes(8, "big")).digest()
            self._counter += 1
            out.extend(block)
        return bytes(out[:n])

    def randbits(self, k: int) -> int:
        nbytes = (k + 7) // 8
        val = int.from_bytes(self.randbytes(nbytes), "big")
        return val >> (8 * nbytes - k)

    def randrange(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi) by rejection sampling."""
        if hi <= lo:
            raise ValueError("empty range")
        span = hi - lo
        k = span.bit_length()
        while True:
            v = self.randbits(k)
            if v < span:
                return lo + v


def is_probable_prime(n: int, rounds: int = 64, rng: Drbg | None = None) -> bool:
    """Miller-Rabin; exact below ~81 bits, error < 4^-rounds above."""
    if n < 2:
        return False
    for p in _small_primes():
        if n == p:
            return True
        if n % p == 0:
            return False
    d = n - 1
    s = 0
    while d % 2 == 0:
        d //= 2
        s += 1

    def witness(a: int) -> bool:
        x = pow(a, d, n)
        if x in (1, n - 1):
            return False
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                return False
        return True

    if n < _MR_DETERMINISTIC_LIMIT:
        bases = _MR_BASES
    else:
        rng = rng or Drbg(n)
        bases = tuple(rng.randrange(2, n - 1) for _ in range(rounds))
    return not any(witness(a) for a in bases)


class Ciphertext(NamedTuple):
    c1: int
    c2: int


@dataclass(frozen=True)
class ElGamalKeys:
    """Safe-prime group (p = 2q+1), generator g, public h = g^s; s optional."""

    p: int
    g: int
    h: int
    s: int | None = None

    @property
    def bits(self) -> int:
        return self.p.bit_length()

    def public(self) -> "ElGamalKeys":
        return ElGamalKeys(p=self.p, g=self.g, h=self.h)


class KeygenError(RuntimeError):
    pass


def keygen(bits: int = 64, seed: int | None = None, max_attempts: int = 500_000) -> ElGamalKeys:
    """Generate a safe prime p = 2q+1 of `bits` bits, a full-group generator, and a key pair."""
    if bits < 16:
        raise ValueError("key length below the 16-bit sanity floor")
    rng = Drbg(seed)
    small = _small_primes()
    for _ in range(max_attempts):
        q = rng.randbits(bits - 1) | (1 << (bits - 2)) | 1
        p = 2 * q + 1
        # q >= 2^14 for all allowed bit lengths, so q itself is never a sieve prime
        if any(q % sp == 0 or p % sp == 0 for sp in small):
            continue
        if not is_probable_prime(q):
            continue
        if not is_probable_prime(p):
            continue
        break
    else:
        raise KeygenError(f"no {bits}-bit safe prime found in {max_attempts} attempts")

    # Generator of the full group: order 2q, so g works iff g^2 != 1 and g^q != 1.
    for _ in range(10_000):
        g = rng.randrange(2, p - 1)
        if pow(g, 2, p) != 1 and pow(g, q, p) != 1:
            break
    else:
        raise KeygenError("generator search failed")

    s = rng.randrange(2, p - 1)  # uniform in [2, p-2]
    return ElGamalKeys(p=p, g=g, h=pow(g, s, p), s=s)


class EncodeOverflowError(OverflowError):
    pass


def encode(value: float, delta: float, p: int) -> int:
    """Signed fixed-point encode: round-half-away-from-zero, zero maps to 1."""
    scaled = value * delta
    m0 = int(math.floor(abs(scaled) + 0.5))
    if scaled < 0.0:
        m0 = -m0
    if m0 == 0:
        m0 = 1
    if 2 * abs(m0) >= p:
        raise EncodeOverflowError(f"|{value!r}*{delta!r}| exceeds the centered range of p")
    return m0 % p


def decode(m: int, delta: float, p: int) -> float:
    """Centered-representative decode: values above p/2 are negative."""
    if not 0 < m < p:
        raise ValueError("group element out of range")
    centered = m if 2 * m < p else m - p
    return centered / delta


def encrypt(m: int, keys: ElGamalKeys, rng: Drbg) -> Ciphertext:
    """ElGamal encryption with a fresh nonce from `rng`."""
    k = rng.randrange(1, keys.p - 1)
    return Ciphertext(pow(keys.g, k, keys.p), m * pow(keys.h, k, keys.p) % keys.p)


def decrypt(ct: Ciphertext, keys: ElGamalKeys) -> int:
    """m = c2 * (c1^s)^-1 mod p (inverse via Fermat)."""
    if keys.s is None:
        raise ValueError("secret exponent required for decryption")
    shared = pow(ct.c1, keys.s, keys.p)
    return ct.c2 * pow(shared, keys.p - 2, keys.p) % keys.p


def hom_mul(a: Ciphertext, b: Ciphertext, p: int) -> Ciphertext:
    """Ciphertext product; decrypts to the product of the plaintexts mod p."""
    return Ciphertext(a.c1 * b.c1 % p, a.c2 * b.c2 % p)


# ---------------------------------------------------------------------------
# Fixed-point session parameters and the overflow guard.

# Conservative per-component operating bounds for |xi| (see polyctrl.XI_NAMES):
# references, angle monomials with |theta| <= 0.5 rad margin, pressures in kPa
# (plant-clamped to 750, plus sensor-noise margin), integrator states with
# generous headroom.
DEFAULT_XI_BOUNDS = (
    16.0, 4.0, 0.5, 0.5, 10.0, 0.25, 0.25, 5.0, 0.125, 0.125, 2.5,
    760.0, 380.0, 760.0, 380.0, 1.0, 400.0, 400.0,
)


@dataclass(frozen=True)
class EncodingParams:
    """Scaling factors for xi and Phi plus declared per-component xi bounds."""

    delta_xi: float = 1.0e8
    delta_phi: float = 1.0e8
    xi_bounds: tuple[float, ...] = DEFAULT_XI_BOUNDS

    def __post_init__(self):
        if self.delta_xi <= 0.0 or self.delta_phi <= 0.0:
            raise ValueError("scaling factors must be positive")
        if len(self.xi_bounds) != 18 or any(b <= 0.0 for b in self.xi_bounds):
            raise ValueError("xi_bounds must be 18 positive values")


class OverflowGuardError(ValueError):
    pass


def check_overflow_guard(params: EncodingParams, phi, p: int):
    """Validate that every Phi[i][j]*xi[j] product stays inside (-p/2, p/2).

    Uses the declared xi bounds; the +1 terms cover rounding and the
    zero-to-1 substitution. Returns the (5,18) array of decoded product
    bounds that dec_plus enforces at runtime.
    """
    import numpy as np

    phi = np.asarray(phi, dtype=float)
    if phi.shape != (5, 18):
        raise ValueError("Phi must be 5x18")
    bounds = np.empty_like(phi)
    for i in range(5):
        for j in range(18):
            m_phi = abs(phi[i, j]) * params.delta_phi + 1.0
            m_xi = params.xi_bounds[j] * params.delta_xi + 1.0
            if 2.0 * m_phi * m_xi >= float(p):
                raise OverflowGuardError(
                    f"Phi[{i+1}][{j+1}] with |xi_{j+1}| <= {params.xi_bounds[j]} "
                    f"overflows the centered range: need delta_xi*delta_phi product "
                    f"{m_phi * m_xi:.3e} < p/2 = {p/2:.3e}")
            bounds[i, j] = m_phi * m_xi / (params.delta_xi * params.delta_phi)
    return bounds


def find_session_key(phi, params: EncodingParams | None = None, bits: int = 64,
                     seed: int | None = 0, tries: int = 64) -> ElGamalKeys:
    """First key (seed, seed+1, ...) whose modulus passes the overflow guard.

    With the default scaling the largest Phi*xi products need p in the upper
    part of the 64-bit range, so a fraction of freshly generated 64-bit keys
    is correctly rejected by the guard; this wraps the retry loop.
    """
    params = params or EncodingParams()
    if seed is None:
        seed_iter = (None for _ in range(tries))
    else:
        seed_iter = iter(range(seed, seed + tries))
    for s in seed_iter:
        keys = keygen(bits=bits, seed=s)
        try:
            check_overflow_guard(params, phi, keys.p)
        except OverflowGuardError:
            continue
        return keys
    raise KeygenError(f"no guard-passing {bits}-bit key in {tries} attempts")


def enc_vector(values, delta: float, keys: ElGamalKeys, rng: Drbg) -> list[Ciphertext]:
    """Encode-then-encrypt a sequence of reals."""
    return [encrypt(encode(float(v), delta, keys.p), keys, rng) for v in values]


def enc_matrix(phi, params: EncodingParams, keys: ElGamalKeys, rng: Drbg) -> list[list[Ciphertext]]:
    """Elementwise encode-then-encrypt of the 5x18 controller matrix."""
    import numpy as np

    phi = np.asarray(phi, dtype=float)
    out: list[list[Ciphertext]] = []
    for i in range(phi.shape[0]):
        row = []
        for j in range(phi.shape[1]):
            try:
                m = encode(float(phi[i, j]), params.delta_phi, keys.p)
            except EncodeOverflowError as exc:
                raise EncodeOverflowError(f"Phi[{i+1}][{j+1}]: {exc}") from exc
            row.append(encrypt(m, keys, rng))
        out.append(row)
    return out


def enc_eval(enc_phi: list[list[Ciphertext]], enc_xi: list[Ciphertext],
             p: int) -> list[list[Ciphertext]]:
    """The 90 homomorphic products Enc(Phi[i][j]) * Enc(xi[j]); no additions."""
    if any(len(row) != len(enc_xi) for row in enc_phi):
        raise ValueError("column count mismatch")
    return [[hom_mul(pij, xj, p) for pij, xj in zip(row, enc_xi)] for row in enc_phi]


class DecodeOverflowError(RuntimeError):
    pass


def dec_plus(products: list[list[Ciphertext]], params: EncodingParams,
             keys: ElGamalKeys, bounds=None, zero_mask=None) -> list[float]:
    """Decrypt and decode every product, then sum each row in plaintext.

    Summation is left-to-right by column index for determinism. When the
    per-entry `bounds` from the overflow guard are supplied, any decoded
    product outside its bound aborts: that can only happen through modular
    wraparound, i.e. a scale misconfiguration.

    `zero_mask[i][j]` marks matrix entries that are exactly zero but were
    encoded as the 1-substitute (the group cannot represent zero). Their
    true contribution is zero, so their placeholder products are discarded
    after decryption. Without this the substitution residue (xi_j/delta_phi
    per zero entry) accumulates through the integrator state rows into a
    standing tracking offset. The mask is device-side knowledge: the device
    holds the secret key and assembled Enc(Phi) in the first place.
    """
    combined = params.delta_xi * params.delta_phi
    psi = []
    for i, row in enumerate(products):
        total = 0.0
        for j, ct in enumerate(row):
            val = decode(decrypt(ct, keys), combined, keys.p)
            if bounds is not None and abs(val) > bounds[i][j] * (1.0 + 1e-12):
                raise DecodeOverflowError(
                    f"decoded product ({i+1},{j+1}) = {val!r} exceeds its bound "
                    f"{bounds[i][j]!r}; check delta/key-size configuration")
            if zero_mask is not None and zero_mask[i][j]:
                continue
            total += val
        psi.append(total)
    return psi


# ---------------------------------------------------------------------------
# Key files: hexadecimal `name = value` lines. The .pub file omits s.

def save_keys(prefix: str | Path, keys: ElGamalKeys) -> tuple[Path, Path]:
    if keys.s is None:
        raise ValueError("need the secret part to write a key pair")
    prefix = Path(prefix)
    pub = prefix.with_suffix(".pub")
    sec = prefix.with_suffix(".sec")
    base = f"p = {keys.p:x}\ng = {keys.g:x}\nh = {keys.h:x}\n"
    pub.write_text(base)
    sec.write_text(base + f"s = {keys.s:x}\n")
    return pub, sec


def load_keys(path: str | Path) -> ElGamalKeys:
    fields: dict[str, int] = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name, _, val = line.partition("=")
        fields[name.strip()] = int(val.strip(), 16)
    missing = {"p", "g", "h"} - set(fields)
    if missing:
        raise ValueError(f"key file missing fields {sorted(missing)}")
    keys = ElGamalKeys(p=fields["p"], g=fields["g"], h=fields["h"], s=fields.get("s"))
    if not 1 < keys.g < keys.p:
        raise ValueError("generator out of range")
    if keys.s is not None and pow(keys.g, keys.s, keys.p) != keys.h:
        raise ValueError("inconsistent key file: h != g^s mod p")
    return keys
