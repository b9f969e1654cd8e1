import dataclasses
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chopchop.batch import (
    HEADER_SIZE,
    STRAGGLER_SIZE,
    ZERO_SIGNATURE,
    DecodeError,
    DistilledBatch,
    Malformed,
    Straggler,
    build_proposal,
    decode,
    encode,
    encoded_size,
    entry_bytes,
    reconstruct_root,
    verify_batch,
)
from chopchop.directory import id_width


def test_header_width_is_sum_of_fields():
    # magic 4, version 1, count 4, msg size 2, width 1, k 8, signature 192, stragglers 4
    assert HEADER_SIZE == 4 + 1 + 4 + 2 + 1 + 8 + 192 + 4
    assert STRAGGLER_SIZE == 4 + 8 + 64


def test_proposal_k_is_max(world):
    subs = [world.submission(0, 3, b"a" * 8), world.submission(1, 7, b"b" * 8), world.submission(2, 2, b"c" * 8)]
    assert build_proposal(subs).k == 7


def test_proposal_single(world):
    p = build_proposal([world.submission(5, 0, b"m" * 8)])
    assert p.k == 0 and p.tree.leaf_count == 1


def test_proposal_sorted_and_deduplicated(world):
    subs = [world.submission(x, 0, bytes([x]) * 8) for x in (6, 2, 5)]
    dup = world.submission(2, 0, b"z" * 8)
    p = build_proposal(subs + [dup])
    assert p.ids == [2, 5, 6]
    assert p.dropped == (dup,)
    assert p.entries[0].message == b"\x02" * 8


def test_proposal_rejects_mixed_sizes(world):
    with pytest.raises(ValueError):
        build_proposal([world.submission(0, 0, b"a"), world.submission(1, 0, b"bb")])
    with pytest.raises(ValueError):
        build_proposal([])


def test_fully_distilled(world):
    subs = [world.submission(x, 0, bytes([x]) * 8) for x in range(4)]
    p, b = world.batch(subs)
    assert b.stragglers == () and not b.no_aggregate
    assert reconstruct_root(b) == p.root
    assert verify_batch(world.scheme, b, world.directory).ok


def test_all_stragglers_is_classic(world):
    subs = [world.submission(x, 0, bytes([x]) * 8) for x in range(4)]
    _, b = world.batch(subs, stragglers=range(4))
    assert b.no_aggregate and b.signature == ZERO_SIGNATURE
    assert len(b.stragglers) == 4
    assert decode(encode(b)) == b
    assert verify_batch(world.scheme, b, world.directory).ok


def test_one_straggler_of_four(world):
    subs = [world.submission(x, k, bytes([x]) * 8) for x, k in zip(range(4), (4, 1, 4, 4))]
    p, b = world.batch(subs, stragglers=[1])
    assert b.k == 4
    assert b.stragglers == (Straggler(1, 1, subs[1].signature),)
    assert b.signer_indices() == [0, 2, 3]
    assert b.effective_sequence(1) == 1 and b.effective_sequence(0) == 4
    assert verify_batch(world.scheme, b, world.directory).ok


def test_root_independent_of_stragglers(world):
    subs = [world.submission(x, 0, bytes([x]) * 8) for x in range(5)]
    _, b1 = world.batch(subs, stragglers=[0])
    _, b2 = world.batch(subs, stragglers=[2, 3])
    assert reconstruct_root(b1) == reconstruct_root(b2)
    changed = dataclasses.replace(b1, messages=(b"X" * 8,) + b1.messages[1:])
    assert reconstruct_root(changed) != reconstruct_root(b1)


def test_verify_reports_duplicate_ids(world):
    subs = [world.submission(x, 0, bytes([x]) * 8) for x in range(3)]
    _, b = world.batch(subs, stragglers=range(3))
    # broker attributes a second message to client 1
    extra = world.submission(1, 0, b"Y" * 8)
    bad = dataclasses.replace(
        b, ids=(0, 1, 1, 2), messages=(b.messages[0], b.messages[1], extra.message, b.messages[2]),
        stragglers=(Straggler(0, 0, subs[0].signature), Straggler(1, 0, subs[1].signature),
                    Straggler(2, 0, extra.signature), Straggler(3, 0, subs[2].signature)))
    assert verify_batch(world.scheme, bad, world.directory).reason is Malformed.DUPLICATE_OR_UNSORTED_IDS
    with pytest.raises(DecodeError):
        decode(encode(bad))
    assert decode(encode(bad), check_order=False) == bad


def test_verify_reports_omitted_signer(world):
    subs = [world.submission(x, 0, bytes([x]) * 8) for x in range(4)]
    p, b = world.batch(subs)
    s = world.scheme
    partial = s.aggregate_signatures(s.multi_sign(world.multi[x].secret, p.root) for x in range(3))
    bad = dataclasses.replace(b, signature=s.encode_multi_signature(partial))
    assert verify_batch(s, bad, world.directory).reason is Malformed.BAD_AGGREGATE


def test_verify_reports_other_failures(world):
    s = world.scheme
    subs = [world.submission(x, 0, bytes([x]) * 8) for x in range(3)]
    _, b = world.batch(subs, stragglers=[1])
    forged = dataclasses.replace(b, stragglers=(Straggler(1, 0, subs[0].signature),))
    assert verify_batch(s, forged, world.directory).reason is Malformed.BAD_STRAGGLER_SIGNATURE
    above = dataclasses.replace(b, stragglers=(Straggler(1, 9, subs[1].signature),))
    assert verify_batch(s, above, world.directory).reason is Malformed.STRAGGLER_SEQUENCE_ABOVE_AGGREGATE
    unknown = dataclasses.replace(b, ids=(0, 1, len(world.directory)))
    assert verify_batch(s, unknown, world.directory).reason is Malformed.UNKNOWN_CLIENT
    tampered = dataclasses.replace(b, messages=(b"Q" * 8,) + b.messages[1:])
    assert verify_batch(s, tampered, world.directory).reason is Malformed.BAD_AGGREGATE


def test_wire_size_formula():
    assert encoded_size(65536, 28, 8) == HEADER_SIZE + 229_376 + 524_288
    assert encoded_size(1, 8, 8, 1) == HEADER_SIZE + 1 + 8 + 76
    assert id_width(257_000_000) == 28


def test_encoder_matches_formula(world):
    sub = world.submission(0, 0, b"12345678")
    _, b = world.batch([sub], stragglers=[0])
    assert len(encode(b)) == encoded_size(1, 8, 8, 1) == b.size


def test_packed_ids_msb_first():
    b = DistilledBatch(0, 1, 12, (0x123, 0x456, 0x789), (b"a", b"b", b"c"), b"\x01" * 192, ())
    raw = encode(b)
    assert raw[HEADER_SIZE:HEADER_SIZE + 5] == bytes.fromhex("1234567890")
    assert decode(raw) == b


@pytest.mark.parametrize("mutate, reason", [
    (lambda r: b"XXXX" + r[4:], "bad magic"),
    (lambda r: r[:4] + b"\x09" + r[5:], "unsupported version"),
    (lambda r: r[:-1], "truncated body"),
    (lambda r: r + b"\x00", "trailing bytes"),
    (lambda r: r[:100], "truncated header"),
])
def test_decode_errors_named(world, mutate, reason):
    subs = [world.submission(x, 0, bytes([x]) * 8) for x in range(3)]
    _, b = world.batch(subs, stragglers=[1])
    with pytest.raises(DecodeError) as exc:
        decode(mutate(encode(b)))
    assert exc.value.reason == reason


def test_straggler_index_out_of_range(world):
    subs = [world.submission(x, 0, bytes([x]) * 8) for x in range(3)]
    _, b = world.batch(subs, stragglers=[1])
    bad = dataclasses.replace(b, stragglers=(Straggler(7, 0, subs[1].signature),))
    with pytest.raises(DecodeError) as exc:
        decode(encode(bad))
    assert exc.value.reason == "straggler index out of range"
    assert exc.value.offset == len(encode(bad)) - STRAGGLER_SIZE


_batches = st.builds(
    lambda width, msg, ids, k, lag, rnd: _mk(width, msg, ids, k, lag, rnd),
    st.sampled_from([8, 12, 16, 20, 28, 32]),
    st.integers(0, 12),
    st.lists(st.integers(0, 255), min_size=1, max_size=40, unique=True),
    st.integers(0, 2**64 - 1),
    st.floats(0, 1),
    st.randoms(use_true_random=False),
)


def _mk(width, msg, ids, k, lag, rnd):
    ids = tuple(sorted(ids))
    n = len(ids)
    messages = tuple(rnd.randbytes(msg) for _ in ids)
    lagging = sorted(rnd.sample(range(n), round(lag * n)))
    stragglers = tuple(Straggler(i, rnd.randrange(k + 1), rnd.randbytes(64)) for i in lagging)
    no_agg = len(lagging) == n
    sig = ZERO_SIGNATURE if no_agg else rnd.randbytes(192)
    return DistilledBatch(k, msg, width, ids, messages, sig, stragglers, no_agg)


@settings(max_examples=200, deadline=None)
@given(_batches)
def test_codec_round_trip(b):
    raw = encode(b)
    assert len(raw) == b.size
    assert decode(raw) == b


@settings(max_examples=500, deadline=None)
@given(st.one_of(st.binary(max_size=400), _batches.map(encode).flatmap(
    lambda raw: st.tuples(st.just(raw), st.integers(0, len(raw) - 1), st.integers(1, 255)).map(
        lambda t: t[0][:t[1]] + bytes([t[0][t[1]] ^ t[2]]) + t[0][t[1] + 1:]))))
def test_decode_never_crashes(blob):
    try:
        b = decode(blob)
    except ValueError:
        return
    assert encode(b) == blob


def test_amortized_size_at_capacity():
    size = encoded_size(65536, 28, 8)
    assert size / 65536 <= 11.52
    assert size / 65536 < 112


def test_verify_independent_of_arrival_order(world):
    subs = [world.submission(x, x % 3, bytes([x]) * 8) for x in range(6)]
    shuffled = list(subs)
    random.Random(3).shuffle(shuffled)
    _, a = world.batch(subs, stragglers=[2])
    _, b = world.batch(shuffled, stragglers=[2])
    assert encode(a) == encode(b)
    assert verify_batch(world.scheme, b, world.directory).ok
    assert entry_bytes(1, 2, b"m") == (1).to_bytes(4, "little") + (2).to_bytes(8, "little") + b"m"
