import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chopchop.certificates import (
    DeliveryCertificate,
    DeliveryStatement,
    Witness,
    WitnessShard,
    encode_bitmap,
    full_bitmap,
    pack_bitmap,
    unpack_bitmap,
)
from chopchop.directory import SignupRecord
from chopchop.merkle import MerkleTree
from chopchop.messages import (
    BatchPublish,
    DeliveryAck,
    DeliveryNotice,
    DeliverySig,
    LegitimacyStatement,
    MultiSigResponse,
    OrderingSubmit,
    ReductionRequest,
    Refusal,
    RetrievalRequest,
    RetrievalResponse,
    ShardRequest,
    ShardResponse,
    SubmissionMsg,
    SubmissionReject,
    decode_message,
)


def _samples(world):
    s = world.scheme
    sub = world.submission(3, 5, b"m" * 8, world.legit(6))
    tree = MerkleTree([b"a", b"b", b"c"])
    d = b"D" * 32
    witness = Witness(d, tuple(WitnessShard.create(s, i, world.server_pairs[i].secret, d) for i in (0, 2)))
    stmt = DeliveryStatement(d, tree.root, 5, 3, bytes([0b1010_0000]), bytes([0b0100_0000]))
    cert = DeliveryCertificate(stmt, ((0, b"s" * 64), (1, b"t" * 64)))
    record = SignupRecord.create(s, world.keys[0], world.multi[0])
    return [
        SubmissionMsg(sub),
        SubmissionMsg(world.submission(1, 0, b"q" * 8)),
        ReductionRequest(7, tree.root, 5, b"m" * 8, tree.prove(1), world.legit(6)),
        ReductionRequest(7, tree.root, 0, b"m" * 8, tree.prove(2), None),
        MultiSigResponse(7, 3, b"\x01" * 192),
        SubmissionReject(3, 2),
        BatchPublish(b"raw batch bytes"),
        ShardRequest(d),
        ShardResponse(d, 2, Refusal.SIGNED, b"z" * 64),
        ShardResponse(d, 1, Refusal.BAD_AGGREGATE),
        OrderingSubmit(4, witness=witness),
        OrderingSubmit(4, signup=record),
        DeliverySig(1, stmt, b"x" * 64, 9, b"y" * 64),
        DeliveryNotice(7, cert, tree.prove(0), world.legit(10)),
        RetrievalRequest(d),
        RetrievalResponse(b"raw"),
        DeliveryAck(d, 3),
        LegitimacyStatement(2, 11, b"w" * 64),
    ]


def test_every_message_round_trips(world):
    kinds = set()
    for msg in _samples(world):
        raw = msg.encode()
        assert decode_message(raw) == msg
        kinds.add(type(msg))
    assert len(kinds) == 14


def test_decode_message_fuzz(world):
    import random
    rng = random.Random(0)
    samples = [m.encode() for m in _samples(world)]
    for _ in range(3000):
        raw = bytearray(rng.choice(samples))
        op = rng.randrange(3)
        if op == 0:
            raw = raw[: rng.randrange(len(raw) + 1)]
        elif op == 1:
            raw[rng.randrange(len(raw))] ^= 1 << rng.randrange(8)
        else:
            raw += bytes(rng.randrange(1, 5))
        try:
            decode_message(bytes(raw))
        except ValueError:
            pass


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=300))
def test_decode_arbitrary_bytes(blob):
    try:
        decode_message(blob)
    except ValueError:
        pass


@settings(max_examples=200, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=70))
def test_bitmap_pack_round_trip(bits):
    bm = encode_bitmap(bits)
    packed = pack_bitmap(bm, len(bits))
    out, end = unpack_bitmap(packed, 0, len(bits))
    assert out == bm and end == len(packed)
    if all(bits) or not any(bits):
        assert len(packed) == 1


def test_full_bitmap_matches_encoder():
    for n in range(1, 20):
        assert full_bitmap(n) == encode_bitmap([True] * n)
    with pytest.raises(ValueError):
        pack_bitmap(b"\x00", 9)
    with pytest.raises(ValueError):
        unpack_bitmap(b"\x07", 0, 3)
