"""Append-only client directory: numeric identifier -> public keys."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Any, Optional

from .crypto import (
    MULTI_PUBLIC_KEY_SIZE,
    MULTI_SIGNATURE_SIZE,
    PUBLIC_KEY_SIZE,
    SIGNATURE_SIZE,
    KeyPair,
    Scheme,
)

SIGNUP_TAG = b"chopchop/signup"
RECORD_SIZE = PUBLIC_KEY_SIZE + MULTI_PUBLIC_KEY_SIZE + SIGNATURE_SIZE + MULTI_SIGNATURE_SIZE


class UnknownClient(LookupError):
    pass


class InvalidSignup(ValueError):
    pass


def id_width(count: int) -> int:
    """Bits per packed identifier for a directory of ``count`` clients.

    ``max(8, ceil(log2 count))`` rounded up to a multiple of 4.
    """
    bits = max(8, (max(count, 1) - 1).bit_length())
    return (bits + 3) // 4 * 4


@dataclass(frozen=True)
class SignupRecord:
    """Wire form of a sign-up: both public keys plus two possession proofs.

    ``proof`` is an individual signature over both keys; ``multi_proof`` is the
    multi-signature proof of possession that blocks rogue-key aggregation.
    """

    public: bytes
    multi_public: bytes
    proof: bytes
    multi_proof: bytes

    def encode(self) -> bytes:
        return self.public + self.multi_public + self.proof + self.multi_proof

    @classmethod
    def decode(cls, data: bytes) -> "SignupRecord":
        if len(data) != RECORD_SIZE:
            raise ValueError(f"sign-up record must be {RECORD_SIZE} bytes")
        a = PUBLIC_KEY_SIZE
        b = a + MULTI_PUBLIC_KEY_SIZE
        c = b + SIGNATURE_SIZE
        return cls(data[:a], data[a:b], data[b:c], data[c:])

    @classmethod
    def create(cls, scheme: Scheme, keys: KeyPair, multi_keys: KeyPair) -> "SignupRecord":
        public = scheme.encode_public(keys.public)
        multi_public = scheme.encode_multi_public(multi_keys.public)
        proof = scheme.sign(keys.secret, SIGNUP_TAG + public + multi_public)
        multi_proof = scheme.encode_multi_signature(scheme.prove_possession(multi_keys))
        return cls(public, multi_public, proof, multi_proof)


@dataclass(frozen=True)
class Entry:
    public: Any
    multi_public: Any
    record: SignupRecord


class Directory:
    """Identifiers are positions; entries are decoded once and cached."""

    def __init__(self, scheme: Scheme):
        self.scheme = scheme
        self._entries: list[Entry] = []

    def __len__(self) -> int:
        return len(self._entries)

    def signup(self, record: SignupRecord, check: bool = True) -> int:
        scheme = self.scheme
        try:
            public = scheme.decode_public(record.public)
            multi_public = scheme.decode_multi_public(record.multi_public)
            multi_proof = scheme.decode_multi_signature(record.multi_proof)
        except ValueError as exc:
            raise InvalidSignup(f"undecodable sign-up: {exc}") from exc
        if check:
            if not scheme.verify(public, SIGNUP_TAG + record.public + record.multi_public, record.proof):
                raise InvalidSignup("individual possession proof does not verify")
            if not scheme.verify_possession(multi_public, multi_proof):
                raise InvalidSignup("multi-signature possession proof does not verify")
        self._entries.append(Entry(public, multi_public, record))
        return len(self._entries) - 1

    def add_trusted(self, public, multi_public, record: Optional[SignupRecord] = None) -> int:
        """Append already-decoded keys (genesis fast path; proofs checked by caller)."""
        self._entries.append(Entry(public, multi_public, record))
        return len(self._entries) - 1

    def lookup(self, x: int) -> tuple[Any, Any]:
        if not 0 <= x < len(self._entries):
            raise UnknownClient(f"unknown client {x}")
        e = self._entries[x]
        return e.public, e.multi_public

    def public(self, x: int):
        return self.lookup(x)[0]

    def multi_public(self, x: int):
        return self.lookup(x)[1]

    @property
    def id_width(self) -> int:
        return id_width(len(self))

    def encode_genesis(self) -> bytes:
        return struct.pack("<I", len(self)) + b"".join(e.record.encode() for e in self._entries)

    @classmethod
    def decode_genesis(cls, scheme: Scheme, data: bytes, check: bool = True) -> "Directory":
        if len(data) < 4:
            raise ValueError("truncated genesis file")
        (count,) = struct.unpack_from("<I", data)
        if len(data) != 4 + count * RECORD_SIZE:
            raise ValueError("genesis length does not match record count")
        d = cls(scheme)
        for i in range(count):
            off = 4 + i * RECORD_SIZE
            d.signup(SignupRecord.decode(data[off: off + RECORD_SIZE]), check=check)
        return d

    def write_genesis(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.encode_genesis())

    @classmethod
    def read_genesis(cls, scheme: Scheme, path, check: bool = True) -> "Directory":
        with open(path, "rb") as fh:
            return cls.decode_genesis(scheme, fh.read(), check=check)
