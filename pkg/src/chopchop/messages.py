"""Protocol message kinds and their binary encodings.

Every encoding starts with a one-byte kind tag followed by little-endian
fields.  Variable-length parts are either length-prefixed or run to the end of
the message (batch bytes).

====  ==================  =====================================================
tag   kind                fields
====  ==================  =====================================================
1     Submission          x u32, k u64, len u16, message, t 64B, cert?
2     ReductionRequest    batch u64, root 32B, k u64, len u16, message, proof,
                          cert?
3     MultiSigResponse    batch u64, x u32, multi-signature 192B
4     SubmissionReject    x u32, reason u8
5     BatchPublish        distilled batch bytes
6     ShardRequest        batch digest 32B
7     ShardResponse       digest 32B, server u16, refusal u8 (0 = signed),
                          signature 64B
8     OrderingSubmit      submitter u32, kind u8, then digest + witness
                          (kind 0) or a sign-up record (kind 1)
9     DeliverySig         server u16, delivery statement, signature 64B,
                          n u64, legitimacy signature 64B
10    DeliveryNotice      batch u64, delivery certificate, proof, cert?
11    RetrievalRequest    batch digest 32B
12    RetrievalResponse   distilled batch bytes
13    DeliveryAck         batch digest 32B, server u16
14    LegitimacyStatement server u16, n u64, signature 64B
====  ==================  =====================================================

``cert?`` is a presence byte followed by a legitimacy certificate when set.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Optional

from .batch import Submission
from .certificates import DeliveryCertificate, DeliveryStatement, LegitimacyCertificate, Witness
from .directory import RECORD_SIZE, SignupRecord
from .merkle import InclusionProof


class Refusal(enum.IntEnum):
    SIGNED = 0
    NOT_STORED = 1
    DUPLICATE_OR_UNSORTED_IDS = 2
    UNKNOWN_CLIENT = 3
    BAD_STRAGGLER_SIGNATURE = 4
    BAD_AGGREGATE = 5
    STRAGGLER_SEQUENCE_ABOVE_AGGREGATE = 6


def _cert(cert: Optional[LegitimacyCertificate]) -> bytes:
    return b"\x00" if cert is None else b"\x01" + cert.encode()


def _read_cert(data: bytes, off: int):
    if off >= len(data):
        raise ValueError("missing certificate presence byte")
    if data[off] == 0:
        return None, off + 1
    if data[off] != 1:
        raise ValueError("bad certificate presence byte")
    return LegitimacyCertificate.decode_from(data, off + 1)


def _done(data: bytes, off: int) -> None:
    if off != len(data):
        raise ValueError("trailing bytes")


@dataclass(frozen=True)
class SubmissionMsg:
    KIND = 1
    submission: Submission

    def encode(self) -> bytes:
        s = self.submission
        return (struct.pack("<BIQH", self.KIND, s.x, s.k, len(s.message)) + s.message
                + s.signature + _cert(s.legitimacy))

    @classmethod
    def decode(cls, data: bytes):
        _, x, k, n = struct.unpack_from("<BIQH", data)
        off = 15
        message = data[off: off + n]
        signature = data[off + n: off + n + 64]
        if len(message) != n or len(signature) != 64:
            raise ValueError("truncated submission")
        cert, off = _read_cert(data, off + n + 64)
        _done(data, off)
        return cls(Submission(x, k, message, signature, cert))


@dataclass(frozen=True)
class ReductionRequest:
    KIND = 2
    batch: int
    root: bytes
    k: int
    message: bytes
    proof: InclusionProof
    legitimacy: Optional[LegitimacyCertificate]

    def encode(self) -> bytes:
        return (struct.pack("<BQ", self.KIND, self.batch) + self.root
                + struct.pack("<QH", self.k, len(self.message)) + self.message
                + self.proof.encode() + _cert(self.legitimacy))

    @classmethod
    def decode(cls, data: bytes):
        _, batch = struct.unpack_from("<BQ", data)
        root = data[9:41]
        k, n = struct.unpack_from("<QH", data, 41)
        message = data[51: 51 + n]
        if len(root) != 32 or len(message) != n:
            raise ValueError("truncated reduction request")
        proof, rest = InclusionProof.decode_from(data[51 + n:])
        off = len(data) - len(rest)
        cert, off = _read_cert(data, off)
        _done(data, off)
        return cls(batch, root, k, message, proof, cert)


@dataclass(frozen=True)
class MultiSigResponse:
    KIND = 3
    batch: int
    x: int
    signature: bytes

    def encode(self) -> bytes:
        return struct.pack("<BQI", self.KIND, self.batch, self.x) + self.signature

    @classmethod
    def decode(cls, data: bytes):
        _, batch, x = struct.unpack_from("<BQI", data)
        sig = data[13:]
        if len(sig) != 192:
            raise ValueError("multi-signature must be 192 bytes")
        return cls(batch, x, sig)


@dataclass(frozen=True)
class SubmissionReject:
    KIND = 4
    x: int
    reason: int

    def encode(self) -> bytes:
        return struct.pack("<BIB", self.KIND, self.x, self.reason)

    @classmethod
    def decode(cls, data: bytes):
        _, x, reason = struct.unpack("<BIB", data)
        return cls(x, reason)


@dataclass(frozen=True)
class BatchPublish:
    KIND = 5
    batch: bytes

    def encode(self) -> bytes:
        return bytes([self.KIND]) + self.batch

    @classmethod
    def decode(cls, data: bytes):
        return cls(bytes(data[1:]))


@dataclass(frozen=True)
class ShardRequest:
    KIND = 6
    batch_digest: bytes

    def encode(self) -> bytes:
        return bytes([self.KIND]) + self.batch_digest

    @classmethod
    def decode(cls, data: bytes):
        if len(data) != 33:
            raise ValueError("bad shard request")
        return cls(bytes(data[1:]))


@dataclass(frozen=True)
class ShardResponse:
    KIND = 7
    batch_digest: bytes
    server: int
    refusal: Refusal
    signature: bytes = bytes(64)

    def encode(self) -> bytes:
        return (bytes([self.KIND]) + self.batch_digest
                + struct.pack("<HB", self.server, self.refusal) + self.signature)

    @classmethod
    def decode(cls, data: bytes):
        if len(data) != 1 + 32 + 3 + 64:
            raise ValueError("bad shard response")
        server, refusal = struct.unpack_from("<HB", data, 33)
        return cls(bytes(data[1:33]), server, Refusal(refusal), bytes(data[36:]))


@dataclass(frozen=True)
class OrderingSubmit:
    KIND = 8
    submitter: int
    witness: Optional[Witness] = None
    signup: Optional[SignupRecord] = None

    def encode(self) -> bytes:
        if self.witness is not None:
            return struct.pack("<BIB", self.KIND, self.submitter, 0) + self.witness.encode()
        return struct.pack("<BIB", self.KIND, self.submitter, 1) + self.signup.encode()

    @classmethod
    def decode(cls, data: bytes):
        _, submitter, kind = struct.unpack_from("<BIB", data)
        if kind == 0:
            witness, off = Witness.decode_from(data, 6)
            _done(data, off)
            return cls(submitter, witness=witness)
        if kind == 1:
            if len(data) != 6 + RECORD_SIZE:
                raise ValueError("bad sign-up record length")
            return cls(submitter, signup=SignupRecord.decode(data[6:]))
        raise ValueError("unknown ordering submission kind")

    @property
    def batch_digest(self) -> Optional[bytes]:
        return None if self.witness is None else self.witness.batch_digest


@dataclass(frozen=True)
class DeliverySig:
    KIND = 9
    server: int
    statement: DeliveryStatement
    signature: bytes
    n: int
    legitimacy_signature: bytes

    def encode(self) -> bytes:
        return (struct.pack("<BH", self.KIND, self.server) + self.statement.encode()
                + self.signature + struct.pack("<Q", self.n) + self.legitimacy_signature)

    @classmethod
    def decode(cls, data: bytes):
        _, server = struct.unpack_from("<BH", data)
        statement, off = DeliveryStatement.decode_from(data, 3)
        sig = data[off: off + 64]
        (n,) = struct.unpack_from("<Q", data, off + 64)
        legit = data[off + 72: off + 136]
        if len(legit) != 64:
            raise ValueError("truncated delivery signature")
        _done(data, off + 136)
        return cls(server, statement, bytes(sig), n, bytes(legit))


@dataclass(frozen=True)
class DeliveryNotice:
    """Delivery certificate as forwarded to one client, with that client's proof."""

    KIND = 10
    batch: int
    certificate: DeliveryCertificate
    proof: InclusionProof
    legitimacy: Optional[LegitimacyCertificate]

    def encode(self) -> bytes:
        return (struct.pack("<BQ", self.KIND, self.batch) + self.certificate.encode()
                + self.proof.encode() + _cert(self.legitimacy))

    @classmethod
    def decode(cls, data: bytes):
        _, batch = struct.unpack_from("<BQ", data)
        cert, off = DeliveryCertificate.decode_from(data, 9)
        proof, rest = InclusionProof.decode_from(data[off:])
        off = len(data) - len(rest)
        legit, off = _read_cert(data, off)
        _done(data, off)
        return cls(batch, cert, proof, legit)


@dataclass(frozen=True)
class RetrievalRequest:
    KIND = 11
    batch_digest: bytes

    def encode(self) -> bytes:
        return bytes([self.KIND]) + self.batch_digest

    @classmethod
    def decode(cls, data: bytes):
        if len(data) != 33:
            raise ValueError("bad retrieval request")
        return cls(bytes(data[1:]))


@dataclass(frozen=True)
class RetrievalResponse:
    KIND = 12
    batch: bytes

    def encode(self) -> bytes:
        return bytes([self.KIND]) + self.batch

    @classmethod
    def decode(cls, data: bytes):
        return cls(bytes(data[1:]))


@dataclass(frozen=True)
class DeliveryAck:
    KIND = 13
    batch_digest: bytes
    server: int

    def encode(self) -> bytes:
        return bytes([self.KIND]) + self.batch_digest + struct.pack("<H", self.server)

    @classmethod
    def decode(cls, data: bytes):
        if len(data) != 35:
            raise ValueError("bad delivery ack")
        (server,) = struct.unpack_from("<H", data, 33)
        return cls(bytes(data[1:33]), server)


@dataclass(frozen=True)
class LegitimacyStatement:
    KIND = 14
    server: int
    n: int
    signature: bytes

    def encode(self) -> bytes:
        return struct.pack("<BHQ", self.KIND, self.server, self.n) + self.signature

    @classmethod
    def decode(cls, data: bytes):
        if len(data) != 11 + 64:
            raise ValueError("bad legitimacy statement")
        _, server, n = struct.unpack_from("<BHQ", data)
        return cls(server, n, bytes(data[11:]))


KINDS = {
    cls.KIND: cls
    for cls in (
        SubmissionMsg, ReductionRequest, MultiSigResponse, SubmissionReject, BatchPublish,
        ShardRequest, ShardResponse, OrderingSubmit, DeliverySig, DeliveryNotice,
        RetrievalRequest, RetrievalResponse, DeliveryAck, LegitimacyStatement,
    )
}


def decode_message(data: bytes):
    """Decode any message; raises ValueError (or struct.error) on malformed input."""
    if not data:
        raise ValueError("empty message")
    cls = KINDS.get(data[0])
    if cls is None:
        raise ValueError(f"unknown message kind {data[0]}")
    try:
        return cls.decode(data)
    except struct.error as exc:
        raise ValueError(f"truncated {cls.__name__}") from exc
