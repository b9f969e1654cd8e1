"""Server-signed statements and the f+1 quorum certificates built from them.

Three statements exist, each under its own domain tag:

* witness shard   -- "this batch is well-formed and I store it"
* legitimacy      -- "I have delivered n batches"
* delivery        -- "from this batch I delivered exactly these entries"

A certificate is a set of signatures over one statement by distinct servers.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

from .crypto import SIGNATURE_SIZE, Scheme

WITNESS_TAG = b"chopchop/witness"
LEGITIMACY_TAG = b"chopchop/legitimacy"
DELIVERY_TAG = b"chopchop/delivery"

_SIG = struct.Struct("<H64s")


def witness_statement(batch_digest: bytes) -> bytes:
    return WITNESS_TAG + batch_digest


def legitimacy_statement(n: int) -> bytes:
    return LEGITIMACY_TAG + struct.pack("<Q", n)


def count_valid(scheme: Scheme, server_keys: Sequence, statement: bytes, signatures) -> int:
    """Distinct servers whose signature over ``statement`` verifies."""
    seen = set()
    for server, sig in signatures:
        if server in seen or not 0 <= server < len(server_keys):
            continue
        if scheme.verify(server_keys[server], statement, sig):
            seen.add(server)
    return len(seen)


def _encode_sigs(signatures) -> bytes:
    return struct.pack("<H", len(signatures)) + b"".join(_SIG.pack(s, sig) for s, sig in signatures)


def _decode_sigs(data: bytes, offset: int):
    if len(data) < offset + 2:
        raise ValueError("truncated signature list")
    (count,) = struct.unpack_from("<H", data, offset)
    offset += 2
    end = offset + count * _SIG.size
    if len(data) < end:
        raise ValueError("truncated signature list")
    sigs = tuple(_SIG.unpack_from(data, offset + i * _SIG.size) for i in range(count))
    return sigs, end


@dataclass(frozen=True)
class WitnessShard:
    server: int
    signature: bytes

    @classmethod
    def create(cls, scheme: Scheme, server: int, secret, batch_digest: bytes) -> "WitnessShard":
        return cls(server, scheme.sign(secret, witness_statement(batch_digest)))


@dataclass(frozen=True)
class Witness:
    batch_digest: bytes
    shards: tuple[WitnessShard, ...]

    def verify(self, scheme: Scheme, server_keys, f: int) -> bool:
        sigs = [(s.server, s.signature) for s in self.shards]
        return count_valid(scheme, server_keys, witness_statement(self.batch_digest), sigs) >= f + 1

    @property
    def signers(self) -> list[int]:
        return [s.server for s in self.shards]

    def encode(self) -> bytes:
        return self.batch_digest + _encode_sigs([(s.server, s.signature) for s in self.shards])

    @classmethod
    def decode_from(cls, data: bytes, offset: int = 0):
        if len(data) < offset + 32:
            raise ValueError("truncated witness")
        d = data[offset: offset + 32]
        sigs, end = _decode_sigs(data, offset + 32)
        return cls(d, tuple(WitnessShard(s, sig) for s, sig in sigs)), end


@dataclass(frozen=True)
class LegitimacyCertificate:
    """f+1 signatures that the n-th batch was delivered: proves every k < n legitimate."""

    n: int
    signatures: tuple[tuple[int, bytes], ...]

    def verify(self, scheme: Scheme, server_keys, f: int) -> bool:
        return count_valid(scheme, server_keys, legitimacy_statement(self.n), self.signatures) >= f + 1

    def covers(self, k: int) -> bool:
        return k < self.n

    def encode(self) -> bytes:
        return struct.pack("<Q", self.n) + _encode_sigs(self.signatures)

    @classmethod
    def decode_from(cls, data: bytes, offset: int = 0):
        if len(data) < offset + 8:
            raise ValueError("truncated legitimacy certificate")
        (n,) = struct.unpack_from("<Q", data, offset)
        sigs, end = _decode_sigs(data, offset + 8)
        return cls(n, sigs), end


def encode_bitmap(bits: Sequence[bool]) -> bytes:
    out = bytearray((len(bits) + 7) // 8)
    for i, b in enumerate(bits):
        if b:
            out[i >> 3] |= 0x80 >> (i & 7)
    return bytes(out)


_RAW, _ALL, _NONE = 0, 1, 2


def full_bitmap(count: int) -> bytes:
    whole, rem = divmod(count, 8)
    return b"\xff" * whole + (bytes([(0xFF << (8 - rem)) & 0xFF]) if rem else b"")


def pack_bitmap(bitmap: bytes, count: int) -> bytes:
    """Mode byte, then the raw bitmap only when it is neither all set nor all clear."""
    width = (count + 7) // 8
    if len(bitmap) != width:
        raise ValueError("bitmap width does not match the entry count")
    if not any(bitmap):
        return bytes([_NONE])
    if bitmap == full_bitmap(count):
        return bytes([_ALL])
    return bytes([_RAW]) + bitmap


def unpack_bitmap(data: bytes, offset: int, count: int):
    if offset >= len(data):
        raise ValueError("truncated bitmap")
    mode = data[offset]
    width = (count + 7) // 8
    if mode == _NONE:
        return bytes(width), offset + 1
    if mode == _ALL:
        return full_bitmap(count), offset + 1
    if mode != _RAW:
        raise ValueError("unknown bitmap mode")
    raw = data[offset + 1: offset + 1 + width]
    if len(raw) != width:
        raise ValueError("truncated bitmap")
    return bytes(raw), offset + 1 + width


def bit(bitmap: bytes, index: int) -> bool:
    byte = index >> 3
    return byte < len(bitmap) and bool(bitmap[byte] & (0x80 >> (index & 7)))


@dataclass(frozen=True)
class DeliveryStatement:
    """What a server signs after processing an ordered batch.

    ``delivered`` marks entries delivered now.  ``repeated`` marks entries not
    delivered because their message equals the client's last delivered one,
    which is proof enough for a client whose earlier certificate went missing.
    """

    batch_digest: bytes
    root: bytes
    k: int
    count: int
    delivered: bytes
    repeated: bytes

    def encode(self) -> bytes:
        return (
            self.batch_digest
            + self.root
            + struct.pack("<QI", self.k, self.count)
            + pack_bitmap(self.delivered, self.count)
            + pack_bitmap(self.repeated, self.count)
        )

    def signed_bytes(self) -> bytes:
        return DELIVERY_TAG + self.encode()

    @classmethod
    def decode_from(cls, data: bytes, offset: int = 0):
        head = offset + 32 + 32 + 12
        if len(data) < head:
            raise ValueError("truncated delivery statement")
        d = data[offset: offset + 32]
        root = data[offset + 32: offset + 64]
        k, count = struct.unpack_from("<QI", data, offset + 64)
        delivered, off = unpack_bitmap(data, head, count)
        repeated, off = unpack_bitmap(data, off, count)
        return cls(d, root, k, count, delivered, repeated), off

    def accepted(self, index: int) -> bool:
        return bit(self.delivered, index) or bit(self.repeated, index)


@dataclass(frozen=True)
class DeliveryCertificate:
    statement: DeliveryStatement
    signatures: tuple[tuple[int, bytes], ...]

    def verify(self, scheme: Scheme, server_keys, f: int) -> bool:
        return count_valid(scheme, server_keys, self.statement.signed_bytes(), self.signatures) >= f + 1

    def encode(self) -> bytes:
        return self.statement.encode() + _encode_sigs(self.signatures)

    @classmethod
    def decode_from(cls, data: bytes, offset: int = 0):
        statement, off = DeliveryStatement.decode_from(data, offset)
        sigs, end = _decode_sigs(data, off)
        return cls(statement, sigs), end


def check_signature_width(sig: bytes) -> bool:
    return len(sig) == SIGNATURE_SIZE
