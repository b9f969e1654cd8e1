"""Submissions, batch proposals and the distilled-batch wire format.

Distilled batch layout (little-endian integers)::

    offset  size  field
    0       4     magic "CHB1"
    4       1     version (low 7 bits) | 0x80 if no aggregate signature
    5       4     entry count
    9       2     message size
    11      1     identifier width w (bits, multiple of 4, 8..32)
    12      8     aggregate sequence number k
    20      192   aggregate multi-signature (all zero when flagged)
    212     4     straggler count
    216     .     identifiers, w bits each, most significant bit first
    .       .     messages, count * message size
    .       .     stragglers: (index u32, k_i u64, signature 64 B) each
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Optional

from . import merkle
from .certificates import LegitimacyCertificate
from .crypto import MULTI_SIGNATURE_SIZE, SIGNATURE_SIZE, Scheme, digest
from .directory import Directory, id_width

MAGIC = b"CHB1"
VERSION = 1
NO_AGGREGATE = 0x80
HEADER = struct.Struct("<4sBIHBQ192sI")
HEADER_SIZE = HEADER.size
STRAGGLER = struct.Struct("<IQ64s")
STRAGGLER_SIZE = STRAGGLER.size
ENTRY = struct.Struct("<IQ")
MAX_SEQUENCE = (1 << 64) - 1
ZERO_SIGNATURE = bytes(MULTI_SIGNATURE_SIZE)

assert HEADER_SIZE == 216 and STRAGGLER_SIZE == 76


def entry_bytes(x: int, k: int, message: bytes) -> bytes:
    """Canonical encoding of (identifier, sequence number, message).

    It is both the Merkle leaf and what an individual signature covers.
    """
    return ENTRY.pack(x, k) + message


def encoded_size(count: int, width: int, msg_size: int, stragglers: int = 0) -> int:
    return HEADER_SIZE + (count * width + 7) // 8 + count * msg_size + STRAGGLER_SIZE * stragglers


@dataclass(frozen=True)
class Submission:
    x: int
    k: int
    message: bytes
    signature: bytes
    legitimacy: Optional[LegitimacyCertificate] = None

    @classmethod
    def create(cls, scheme: Scheme, x: int, secret, k: int, message: bytes,
               legitimacy: Optional[LegitimacyCertificate] = None) -> "Submission":
        return cls(x, k, message, scheme.sign(secret, entry_bytes(x, k, message)), legitimacy)

    def signature_valid(self, scheme: Scheme, public) -> bool:
        return scheme.verify(public, entry_bytes(self.x, self.k, self.message), self.signature)


@dataclass
class BatchProposal:
    entries: tuple[Submission, ...]
    k: int
    tree: merkle.MerkleTree
    dropped: tuple[Submission, ...] = ()

    @property
    def root(self) -> bytes:
        return self.tree.root

    @property
    def ids(self) -> list[int]:
        return [e.x for e in self.entries]

    @property
    def msg_size(self) -> int:
        return len(self.entries[0].message)

    @cached_property
    def positions(self) -> dict[int, int]:
        return {e.x: i for i, e in enumerate(self.entries)}

    def leaf(self, index: int) -> bytes:
        e = self.entries[index]
        return entry_bytes(e.x, self.k, e.message)


def build_proposal(subs: Iterable[Submission]) -> BatchProposal:
    """Sort by identifier, keep the first submission per client, k = max k_i."""
    kept: dict[int, Submission] = {}
    dropped = []
    for s in subs:
        if s.x in kept:
            dropped.append(s)
        else:
            kept[s.x] = s
    if not kept:
        raise ValueError("cannot build a proposal from no submissions")
    entries = tuple(kept[x] for x in sorted(kept))
    sizes = {len(e.message) for e in entries}
    if len(sizes) != 1:
        raise ValueError(f"messages in one batch must share a size, got {sorted(sizes)}")
    k = max(e.k for e in entries)
    tree = merkle.MerkleTree([entry_bytes(e.x, k, e.message) for e in entries])
    return BatchProposal(entries, k, tree, tuple(dropped))


@dataclass(frozen=True)
class Straggler:
    index: int
    k: int
    signature: bytes


@dataclass(frozen=True, eq=True)
class DistilledBatch:
    k: int
    msg_size: int
    id_width: int
    ids: tuple[int, ...]
    messages: tuple[bytes, ...]
    signature: bytes
    stragglers: tuple[Straggler, ...] = ()
    no_aggregate: bool = False

    @property
    def count(self) -> int:
        return len(self.ids)

    @cached_property
    def straggler_map(self) -> dict[int, Straggler]:
        return {s.index: s for s in self.stragglers}

    def signer_indices(self) -> list[int]:
        lagging = self.straggler_map
        return [i for i in range(self.count) if i not in lagging]

    def effective_sequence(self, index: int) -> int:
        s = self.straggler_map.get(index)
        return self.k if s is None else s.k

    @cached_property
    def wire(self) -> bytes:
        return encode(self)

    @cached_property
    def digest(self) -> bytes:
        return digest(self.wire)

    @property
    def size(self) -> int:
        return encoded_size(self.count, self.id_width, self.msg_size, len(self.stragglers))


def distill(scheme: Scheme, proposal: BatchProposal, multisigs: Mapping[int, object],
            stragglers: Iterable[int], width: Optional[int] = None) -> DistilledBatch:
    """Assemble the wire batch from a proposal, collected multi-signatures and stragglers.

    ``multisigs`` must cover exactly the entries that are not stragglers.
    """
    lagging = set(stragglers)
    ids = proposal.ids
    unknown = lagging.difference(ids)
    if unknown:
        raise ValueError(f"stragglers not in proposal: {sorted(unknown)}")
    signers = [x for x in ids if x not in lagging]
    if set(multisigs) != set(signers):
        missing = sorted(set(signers) - set(multisigs))
        extra = sorted(set(multisigs) - set(signers))
        raise ValueError(f"multi-signatures do not match signers (missing {missing}, extra {extra})")
    if width is None:
        width = id_width(max(ids) + 1)
    records = tuple(
        Straggler(i, e.k, e.signature) for i, e in enumerate(proposal.entries) if e.x in lagging
    )
    if signers:
        sig = scheme.encode_multi_signature(scheme.aggregate_signatures(multisigs[x] for x in signers))
    else:
        sig = ZERO_SIGNATURE
    return DistilledBatch(
        k=proposal.k,
        msg_size=proposal.msg_size,
        id_width=width,
        ids=tuple(ids),
        messages=tuple(e.message for e in proposal.entries),
        signature=sig,
        stragglers=records,
        no_aggregate=not signers,
    )


def _pack_ids(ids, width: int) -> bytes:
    nibbles = width // 4
    limit = 1 << width
    for x in ids:
        if not 0 <= x < limit:
            raise ValueError(f"identifier {x} does not fit in {width} bits")
    text = "".join(format(x, f"0{nibbles}x") for x in ids)
    if len(text) % 2:
        text += "0"
    return bytes.fromhex(text)


def encode(batch: DistilledBatch) -> bytes:
    w = batch.id_width
    if w % 4 or not 8 <= w <= 32:
        raise ValueError(f"identifier width {w} must be a multiple of 4 in [8, 32]")
    if any(len(m) != batch.msg_size for m in batch.messages):
        raise ValueError("message size mismatch")
    if len(batch.signature) != MULTI_SIGNATURE_SIZE:
        raise ValueError("aggregate signature must be 192 bytes")
    version = VERSION | (NO_AGGREGATE if batch.no_aggregate else 0)
    head = HEADER.pack(MAGIC, version, batch.count, batch.msg_size, w, batch.k,
                       batch.signature, len(batch.stragglers))
    tail = b"".join(STRAGGLER.pack(s.index, s.k, s.signature) for s in batch.stragglers)
    return head + _pack_ids(batch.ids, w) + b"".join(batch.messages) + tail


class DecodeError(ValueError):
    def __init__(self, reason: str, offset: int):
        super().__init__(f"{reason} at offset {offset}")
        self.reason = reason
        self.offset = offset


def decode(data: bytes, check_order: bool = True) -> DistilledBatch:
    """Parse a distilled batch.

    With ``check_order=False`` the identifier order is left to
    :func:`verify_batch`, so a server can store the batch and refuse it with a
    named reason instead of dropping it.
    """
    data = bytes(data)
    if len(data) < HEADER_SIZE:
        raise DecodeError("truncated header", len(data))
    magic, version, count, msg_size, w, k, sig, n_strag = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DecodeError("bad magic", 0)
    if version & 0x7F != VERSION:
        raise DecodeError("unsupported version", 4)
    no_aggregate = bool(version & NO_AGGREGATE)
    if count == 0:
        raise DecodeError("empty batch", 5)
    if w % 4 or not 8 <= w <= 32:
        raise DecodeError("bad identifier width", 11)
    if no_aggregate:
        if sig != ZERO_SIGNATURE:
            raise DecodeError("flagged batch carries a signature", 20)
        if n_strag != count:
            raise DecodeError("flagged batch must list every entry as straggler", 212)
    elif n_strag >= count:
        raise DecodeError("every entry straggles but aggregate flag is clear", 212)

    off = HEADER_SIZE
    id_bytes = (count * w + 7) // 8
    expected = off + id_bytes + count * msg_size + n_strag * STRAGGLER_SIZE
    if len(data) < expected:
        raise DecodeError("truncated body", len(data))
    if len(data) > expected:
        raise DecodeError("trailing bytes", expected)

    text = data[off: off + id_bytes].hex()
    nibbles = w // 4
    if len(text) > count * nibbles and text[-1] != "0":
        raise DecodeError("non-zero identifier padding", off + id_bytes - 1)
    ids = tuple(int(text[i * nibbles:(i + 1) * nibbles], 16) for i in range(count))
    if check_order:
        for i in range(1, count):
            if ids[i] <= ids[i - 1]:
                raise DecodeError("identifiers not strictly increasing", off + (i * w) // 8)
    off += id_bytes

    messages = tuple(data[off + i * msg_size: off + (i + 1) * msg_size] for i in range(count))
    off += count * msg_size

    stragglers = []
    last = -1
    for j in range(n_strag):
        index, kj, tsig = STRAGGLER.unpack_from(data, off)
        if index >= count:
            raise DecodeError("straggler index out of range", off)
        if index <= last:
            raise DecodeError("straggler indices not strictly increasing", off)
        last = index
        stragglers.append(Straggler(index, kj, tsig))
        off += STRAGGLER_SIZE

    return DistilledBatch(k, msg_size, w, ids, messages, sig, tuple(stragglers), no_aggregate)


def reconstruct_root(batch: DistilledBatch) -> bytes:
    """Merkle root of (x_i, k, m_i) over every entry, stragglers included."""
    k = batch.k
    pack = ENTRY.pack
    return merkle.root_of([pack(x, k) + m for x, m in zip(batch.ids, batch.messages)])


class Malformed(enum.Enum):
    DUPLICATE_OR_UNSORTED_IDS = "DuplicateOrUnsortedIds"
    UNKNOWN_CLIENT = "UnknownClient"
    BAD_STRAGGLER_SIGNATURE = "BadStragglerSignature"
    BAD_AGGREGATE = "BadAggregate"
    STRAGGLER_SEQUENCE_ABOVE_AGGREGATE = "StragglerSequenceAboveAggregate"


@dataclass(frozen=True)
class WellFormedReport:
    reason: Optional[Malformed] = None
    detail: str = ""
    root: Optional[bytes] = field(default=None, compare=False)

    @property
    def ok(self) -> bool:
        return self.reason is None

    def __bool__(self) -> bool:
        return self.ok


def verify_batch(scheme: Scheme, batch: DistilledBatch, directory: Directory) -> WellFormedReport:
    ids = batch.ids
    for i in range(1, len(ids)):
        if ids[i] <= ids[i - 1]:
            return WellFormedReport(Malformed.DUPLICATE_OR_UNSORTED_IDS, f"entry {i}")
    if ids[-1] >= len(directory):
        bad = next(x for x in ids if x >= len(directory))
        return WellFormedReport(Malformed.UNKNOWN_CLIENT, f"client {bad}")
    for s in batch.stragglers:
        if s.k > batch.k:
            return WellFormedReport(Malformed.STRAGGLER_SEQUENCE_ABOVE_AGGREGATE, f"entry {s.index}")
    if batch.stragglers:
        items = [
            (directory.public(ids[s.index]), entry_bytes(ids[s.index], s.k, batch.messages[s.index]), s.signature)
            for s in batch.stragglers
        ]
        if not scheme.batch_verify(items):
            return WellFormedReport(Malformed.BAD_STRAGGLER_SIGNATURE)
    if batch.no_aggregate:
        return WellFormedReport()
    root = reconstruct_root(batch)
    try:
        asig = scheme.decode_multi_signature(batch.signature)
    except ValueError as exc:
        return WellFormedReport(Malformed.BAD_AGGREGATE, f"undecodable: {exc}")
    lagging = batch.straggler_map
    multi = directory.multi_public
    apk = scheme.aggregate_public_keys(multi(x) for i, x in enumerate(ids) if i not in lagging)
    if not scheme.verify_aggregate(apk, root, asig):
        return WellFormedReport(Malformed.BAD_AGGREGATE)
    return WellFormedReport(root=root)
