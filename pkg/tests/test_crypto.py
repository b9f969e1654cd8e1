import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chopchop.crypto import (
    MULTI_PUBLIC_KEY_SIZE,
    MULTI_SIGNATURE_SIZE,
    PUBLIC_KEY_SIZE,
    SIGNATURE_SIZE,
    CountingScheme,
    CryptoError,
    digest,
    get_scheme,
)

BINDINGS = ["mock", "real"]


def _flip(data: bytes, bit: int) -> bytes:
    b = bytearray(data)
    b[bit // 8] ^= 1 << (bit % 8)
    return bytes(b)


@pytest.mark.parametrize("name", BINDINGS)
def test_sign_examples(name):
    s = get_scheme(name)
    k1, k2 = s.keygen(b"one"), s.keygen(b"two")
    sig = s.sign(k1.secret, b"abc")
    assert len(sig) == SIGNATURE_SIZE
    assert s.verify(k1.public, b"abc", sig)
    assert not s.verify(k1.public, b"abd", sig)
    assert not s.verify(k2.public, b"abc", sig)


@pytest.mark.parametrize("name", BINDINGS)
def test_single_bit_perturbations_fail(name):
    s = get_scheme(name)
    k = s.keygen(b"bits")
    m = b"chop chop"
    sig = s.sign(k.secret, m)
    rng = random.Random(1)
    for bit in rng.sample(range(len(m) * 8), 8):
        assert not s.verify(k.public, _flip(m, bit), sig)
    for bit in rng.sample(range(32 * 8), 8):
        assert not s.verify(k.public, m, _flip(sig, bit))
    pk = s.encode_public(k.public)
    for bit in rng.sample(range(len(pk) * 8), 8):
        try:
            other = s.decode_public(_flip(pk, bit))
        except CryptoError:
            continue
        assert not s.verify(other, m, sig)


@pytest.mark.parametrize("name", BINDINGS)
def test_batch_verify_examples(name):
    s = get_scheme(name)
    items = []
    for i in range(100):
        k = s.keygen(b"b%d" % i)
        m = b"msg%d" % i
        items.append((k.public, m, s.sign(k.secret, m)))
    assert s.batch_verify(items)
    forged = list(items)
    pk, m, sig = forged[57]
    forged[57] = (pk, m + b"!", sig)
    assert not s.batch_verify(forged)
    assert s.batch_verify(items[:1]) == s.verify(*items[0])
    with pytest.raises(ValueError):
        s.batch_verify([])


@pytest.mark.parametrize("name", BINDINGS)
def test_aggregate_examples(name):
    s = get_scheme(name)
    keys = [s.multi_keygen(b"agg%d" % i) for i in range(3)]
    m = b"root" * 8
    sigs = [s.multi_sign(k.secret, m) for k in keys]
    apk = s.aggregate_public_keys(k.public for k in keys)
    assert s.verify_aggregate(apk, m, s.aggregate_signatures(sigs))
    bad = sigs[:2] + [s.multi_sign(keys[2].secret, b"other")]
    assert not s.verify_aggregate(apk, m, s.aggregate_signatures(bad))
    # aggregate of one is the signature itself
    assert s.verify_aggregate(keys[0].public, m, s.aggregate_signatures(sigs[:1]))
    assert s.encode_multi_signature(s.aggregate_signatures(sigs[:1])) == s.encode_multi_signature(sigs[0])
    # dropping one key while keeping its signature fails
    apk2 = s.aggregate_public_keys(k.public for k in keys[:2])
    assert not s.verify_aggregate(apk2, m, s.aggregate_signatures(sigs))


@pytest.mark.parametrize("name", BINDINGS)
def test_wire_widths_and_round_trip(name):
    s = get_scheme(name)
    k = s.keygen(b"w")
    mk = s.multi_keygen(b"w")
    assert len(s.encode_public(k.public)) == PUBLIC_KEY_SIZE
    raw_mpk = s.encode_multi_public(mk.public)
    assert len(raw_mpk) == MULTI_PUBLIC_KEY_SIZE
    sig = s.multi_sign(mk.secret, b"x")
    raw_sig = s.encode_multi_signature(sig)
    assert len(raw_sig) == MULTI_SIGNATURE_SIZE
    assert s.encode_multi_public(s.decode_multi_public(raw_mpk)) == raw_mpk
    assert s.encode_multi_signature(s.decode_multi_signature(raw_sig)) == raw_sig
    assert s.encode_public(s.decode_public(s.encode_public(k.public))) == s.encode_public(k.public)


@pytest.mark.parametrize("name", BINDINGS)
def test_malformed_points_are_errors_not_crashes(name):
    s = get_scheme(name)
    with pytest.raises(CryptoError):
        s.decode_multi_signature(b"\xff" * MULTI_SIGNATURE_SIZE)
    with pytest.raises(CryptoError):
        s.decode_multi_public(b"\xff" * MULTI_PUBLIC_KEY_SIZE)
    with pytest.raises(CryptoError):
        s.decode_multi_signature(b"\x00" * 10)


@pytest.mark.parametrize("name", BINDINGS)
def test_possession_proofs(name):
    s = get_scheme(name)
    a, b = s.multi_keygen(b"pa"), s.multi_keygen(b"pb")
    assert s.verify_possession(a.public, s.prove_possession(a))
    assert not s.verify_possession(b.public, s.prove_possession(a))


@pytest.mark.parametrize("name", BINDINGS)
def test_aggregate_secret_signature_equals_aggregate(name):
    s = get_scheme(name)
    keys = [s.multi_keygen(b"sec%d" % i) for i in range(5)]
    m = b"r" * 32
    direct = s.aggregate_signatures(s.multi_sign(k.secret, m) for k in keys)
    merged = s.multi_sign(s.aggregate_secrets(k.secret for k in keys), m)
    assert s.encode_multi_signature(direct) == s.encode_multi_signature(merged)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.binary(min_size=1, max_size=8), min_size=1, max_size=12, unique=True), st.randoms())
def test_aggregation_order_independent(seeds, rnd):
    s = get_scheme("mock")
    keys = [s.multi_keygen(x) for x in seeds]
    m = b"root"
    sigs = [s.multi_sign(k.secret, m) for k in keys]
    perm = list(range(len(keys)))
    rnd.shuffle(perm)
    apk = s.aggregate_public_keys(keys[i].public for i in perm)
    assert s.verify_aggregate(apk, m, s.aggregate_signatures(sigs[i] for i in reversed(perm)))


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 10), st.data())
def test_subset_soundness(n, data):
    s = get_scheme("mock")
    keys = [s.multi_keygen(b"ss%d" % i) for i in range(n)]
    m = b"root"
    sigs = [s.multi_sign(k.secret, m) for k in keys]
    drop = data.draw(st.integers(0, n - 1))
    apk = s.aggregate_public_keys(k.public for i, k in enumerate(keys) if i != drop)
    assert not s.verify_aggregate(apk, m, s.aggregate_signatures(sigs))


@settings(max_examples=40, deadline=None)
@given(st.binary(max_size=64), st.binary(min_size=1, max_size=8))
def test_round_trip_property(m, seed):
    s = get_scheme("mock")
    k = s.keygen(seed)
    assert s.verify(k.public, m, s.sign(k.secret, m))
    mk = s.multi_keygen(seed)
    assert s.verify_aggregate(mk.public, m, s.multi_sign(mk.secret, m))


def test_counting_scheme_counts():
    c = CountingScheme(get_scheme("mock"))
    k = c.keygen(b"c")
    c.verify(k.public, b"m", c.sign(k.secret, b"m"))
    c.batch_verify([(k.public, b"m", c.sign(k.secret, b"m"))] * 3)
    mk = c.multi_keygen(b"c")
    c.verify_aggregate(mk.public, b"m", c.multi_sign(mk.secret, b"m"))
    assert c.counts == {"verify": 4, "verify_aggregate": 1}


def test_digest_is_sha256():
    assert digest(b"abc").hex() == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"


def test_unknown_binding():
    with pytest.raises(ValueError):
        get_scheme("rot13")
