"""Cryptographic substrate: individual signatures, aggregatable multi-signatures
and a 32-byte hash.

Two bindings share one contract:

* :class:`RealScheme` -- Ed25519 (``cryptography``) for individual signatures
  and BLS12-381 proof-of-possession multi-signatures (``blspy``).
* :class:`MockScheme` -- a linear scheme over a prime field with identical wire
  widths.  It has no security whatsoever and exists so the simulator can run
  thousands of scenarios quickly.

Keys and signatures are kept as opaque *handles* (library objects for the real
binding, integers for the mock).  Handles are converted to wire bytes through
the ``encode_*`` / ``decode_*`` methods; decoding raises :class:`CryptoError`.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

DIGEST_SIZE = 32
SIGNATURE_SIZE = 64
PUBLIC_KEY_SIZE = 32
MULTI_PUBLIC_KEY_SIZE = 96
MULTI_SIGNATURE_SIZE = 192


class CryptoError(ValueError):
    """Malformed key or signature bytes."""


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


@dataclass(frozen=True)
class KeyPair:
    secret: Any
    public: Any


class Scheme:
    """Contract implemented by every binding.

    Aggregation is associative and commutative; the aggregate of a single
    signature (or key) is that signature (or key).  ``verify_aggregate`` assumes
    the keys behind ``apk`` are distinct and possession-proven.
    """

    name = "abstract"

    # individual signatures
    def keygen(self, seed: bytes) -> KeyPair:
        raise NotImplementedError

    def sign(self, secret, message: bytes) -> bytes:
        raise NotImplementedError

    def verify(self, public, message: bytes, signature: bytes) -> bool:
        raise NotImplementedError

    def batch_verify(self, items: Sequence[tuple[Any, bytes, bytes]]) -> bool:
        if not items:
            raise ValueError("batch verification needs at least one item")
        return all(self.verify(pk, m, sig) for pk, m, sig in items)

    def encode_public(self, public) -> bytes:
        raise NotImplementedError

    def decode_public(self, data: bytes):
        raise NotImplementedError

    # multi-signatures
    def multi_keygen(self, seed: bytes) -> KeyPair:
        raise NotImplementedError

    def multi_sign(self, secret, message: bytes):
        raise NotImplementedError

    def aggregate_signatures(self, sigs: Iterable):
        raise NotImplementedError

    def aggregate_public_keys(self, pks: Iterable):
        raise NotImplementedError

    def aggregate_secrets(self, secrets: Iterable):
        """Secret whose multi-signature equals the aggregate of the inputs'.

        Only useful for building large test fixtures quickly.
        """
        raise NotImplementedError

    def verify_aggregate(self, apk, message: bytes, asig) -> bool:
        raise NotImplementedError

    def multi_verify(self, public, message: bytes, sig) -> bool:
        return self.verify_aggregate(public, message, sig)

    def prove_possession(self, pair: KeyPair):
        raise NotImplementedError

    def verify_possession(self, public, proof) -> bool:
        raise NotImplementedError

    def encode_multi_public(self, public) -> bytes:
        raise NotImplementedError

    def decode_multi_public(self, data: bytes):
        raise NotImplementedError

    def encode_multi_signature(self, sig) -> bytes:
        raise NotImplementedError

    def decode_multi_signature(self, data: bytes):
        raise NotImplementedError


class RealScheme(Scheme):
    name = "real"

    def __init__(self):
        from blspy import G1Element, G2Element, PopSchemeMPL
        from cryptography.exceptions import InvalidSignature
        from cryptography.hazmat.primitives.asymmetric import ed25519
        from cryptography.hazmat.primitives import serialization

        self._G1 = G1Element
        self._G2 = G2Element
        self._bls = PopSchemeMPL
        self._ed = ed25519
        self._invalid = InvalidSignature
        self._raw = (serialization.Encoding.Raw, serialization.PublicFormat.Raw)

    def keygen(self, seed: bytes) -> KeyPair:
        sk = self._ed.Ed25519PrivateKey.from_private_bytes(digest(b"ed25519" + seed))
        return KeyPair(sk, sk.public_key())

    def sign(self, secret, message: bytes) -> bytes:
        return secret.sign(message)

    def verify(self, public, message: bytes, signature: bytes) -> bool:
        try:
            public.verify(signature, message)
        except (self._invalid, ValueError, TypeError):
            return False
        return True

    def encode_public(self, public) -> bytes:
        return public.public_bytes(*self._raw)

    def decode_public(self, data: bytes):
        try:
            return self._ed.Ed25519PublicKey.from_public_bytes(bytes(data))
        except ValueError as exc:
            raise CryptoError(str(exc)) from exc

    def multi_keygen(self, seed: bytes) -> KeyPair:
        sk = self._bls.key_gen(digest(b"bls" + seed))
        return KeyPair(sk, sk.get_g1())

    def multi_sign(self, secret, message: bytes):
        return self._bls.sign(secret, message)

    def aggregate_signatures(self, sigs: Iterable):
        total = self._G2()
        for s in sigs:
            total += s
        return total

    def aggregate_public_keys(self, pks: Iterable):
        total = self._G1()
        for p in pks:
            total += p
        return total

    def aggregate_secrets(self, secrets: Iterable):
        from blspy import PrivateKey
        return PrivateKey.aggregate(list(secrets))

    def verify_aggregate(self, apk, message: bytes, asig) -> bool:
        try:
            if apk == self._G1():
                return False
            return bool(self._bls.verify(apk, message, asig))
        except (ValueError, RuntimeError, TypeError):
            return False

    def prove_possession(self, pair: KeyPair):
        return self._bls.pop_prove(pair.secret)

    def verify_possession(self, public, proof) -> bool:
        try:
            return bool(self._bls.pop_verify(public, proof))
        except (ValueError, RuntimeError, TypeError):
            return False

    def encode_multi_public(self, public) -> bytes:
        from ._bls_wire import g1_uncompress
        return g1_uncompress(bytes(public))

    def decode_multi_public(self, data: bytes):
        from ._bls_wire import g1_compress
        try:
            return self._G1.from_bytes(g1_compress(bytes(data)))
        except (ValueError, RuntimeError) as exc:
            raise CryptoError(str(exc)) from exc

    def encode_multi_signature(self, sig) -> bytes:
        from ._bls_wire import g2_uncompress
        return g2_uncompress(bytes(sig))

    def decode_multi_signature(self, data: bytes):
        from ._bls_wire import g2_compress
        try:
            return self._G2.from_bytes(g2_compress(bytes(data)))
        except (ValueError, RuntimeError) as exc:
            raise CryptoError(str(exc)) from exc


# 2**255 - 19
_Q = (1 << 255) - 19
_G = 9


def _h(tag: bytes, message: bytes) -> int:
    return int.from_bytes(hashlib.sha512(tag + message).digest(), "big") % (_Q - 1) + 1


def _fixed(value: int, width: int) -> bytes:
    return value.to_bytes(32, "big") + bytes(width - 32)


def _unfixed(data: bytes, width: int) -> int:
    if len(data) != width or any(data[32:]):
        raise CryptoError(f"expected {width} bytes with zero padding")
    value = int.from_bytes(data[:32], "big")
    if value >= _Q:
        raise CryptoError("field element out of range")
    return value


class MockScheme(Scheme):
    """Linear toy scheme: pk = a*g, sig(m) = a*h(m), verify sig*g == pk*h(m) mod q.

    Public keys reveal secrets to anyone who divides by g.  Simulation only.
    """

    name = "mock"

    def keygen(self, seed: bytes) -> KeyPair:
        a = _h(b"mock-ind-sk", seed)
        return KeyPair(a, a * _G % _Q)

    def sign(self, secret, message: bytes) -> bytes:
        return _fixed(secret * _h(b"mock-ind", message) % _Q, SIGNATURE_SIZE)

    def verify(self, public, message: bytes, signature: bytes) -> bool:
        try:
            s = _unfixed(bytes(signature), SIGNATURE_SIZE)
        except CryptoError:
            return False
        return public != 0 and s * _G % _Q == public * _h(b"mock-ind", message) % _Q

    def encode_public(self, public) -> bytes:
        return public.to_bytes(32, "big")

    def decode_public(self, data: bytes):
        if len(data) != PUBLIC_KEY_SIZE:
            raise CryptoError("public key must be 32 bytes")
        value = int.from_bytes(data, "big")
        if not 0 < value < _Q:
            raise CryptoError("public key out of range")
        return value

    def multi_keygen(self, seed: bytes) -> KeyPair:
        a = _h(b"mock-multi-sk", seed)
        return KeyPair(a, a * _G % _Q)

    def multi_sign(self, secret, message: bytes):
        return secret * _h(b"mock-multi", message) % _Q

    def aggregate_signatures(self, sigs: Iterable):
        return sum(sigs) % _Q

    def aggregate_public_keys(self, pks: Iterable):
        return sum(pks) % _Q

    def aggregate_secrets(self, secrets: Iterable):
        return sum(secrets) % _Q

    def verify_aggregate(self, apk, message: bytes, asig) -> bool:
        if not isinstance(apk, int) or not isinstance(asig, int) or apk == 0:
            return False
        return asig * _G % _Q == apk * _h(b"mock-multi", message) % _Q

    def prove_possession(self, pair: KeyPair):
        return self.multi_sign(pair.secret, b"mock-pop" + self.encode_multi_public(pair.public))

    def verify_possession(self, public, proof) -> bool:
        return self.verify_aggregate(public, b"mock-pop" + self.encode_multi_public(public), proof)

    def encode_multi_public(self, public) -> bytes:
        return _fixed(public, MULTI_PUBLIC_KEY_SIZE)

    def decode_multi_public(self, data: bytes):
        return _unfixed(bytes(data), MULTI_PUBLIC_KEY_SIZE)

    def encode_multi_signature(self, sig) -> bytes:
        return _fixed(sig, MULTI_SIGNATURE_SIZE)

    def decode_multi_signature(self, data: bytes):
        return _unfixed(bytes(data), MULTI_SIGNATURE_SIZE)


class CountingScheme:
    """Wraps a scheme and counts verification calls by kind."""

    def __init__(self, inner: Scheme):
        self.inner = inner
        self.name = inner.name
        self.counts = {"verify": 0, "verify_aggregate": 0}

    def __getattr__(self, item):
        return getattr(self.inner, item)

    def verify(self, public, message, signature):
        self.counts["verify"] += 1
        return self.inner.verify(public, message, signature)

    def batch_verify(self, items):
        self.counts["verify"] += len(items)
        return self.inner.batch_verify(items)

    def verify_aggregate(self, apk, message, asig):
        self.counts["verify_aggregate"] += 1
        return self.inner.verify_aggregate(apk, message, asig)

    def multi_verify(self, public, message, sig):
        return self.verify_aggregate(public, message, sig)


_REAL = None
_MOCK = MockScheme()


def get_scheme(name: str = "real") -> Scheme:
    """Return the shared binding called ``name`` ("real" or "mock")."""
    global _REAL
    if name == "mock":
        return _MOCK
    if name == "real":
        if _REAL is None:
            _REAL = RealScheme()
        return _REAL
    raise ValueError(f"unknown crypto binding {name!r}")
