import random

from hypothesis import given, settings
from hypothesis import strategies as st

from chopchop.harness.apps import BID, TAKE, Auction, Payments, PixelWar, make_app


def test_transfer_conserves():
    p = Payments(2, initial=50)
    assert p.apply(0, Payments.encode(1, 10))
    assert p.balances == [40, 60] and p.total == 100


def test_overdraft_and_garbage_are_noops():
    p = Payments(2, initial=50)
    assert not p.apply(0, Payments.encode(1, 51))
    assert not p.apply(0, Payments.encode(9, 1))
    assert not p.apply(0, b"short")
    assert p.noops == 3 and p.balances == [50, 50]


def test_outbid_refunds():
    a = Auction(3, tokens=1, initial=100)
    assert a.apply(1, Auction.encode(BID, 0, 5))
    assert a.locked[1] == 5
    assert a.apply(2, Auction.encode(BID, 0, 7))
    assert a.locked == [0, 0, 7]
    assert not a.apply(1, Auction.encode(BID, 0, 7))


def test_take_transfers_token_and_funds():
    a = Auction(2, tokens=1, initial=100)
    a.apply(1, Auction.encode(BID, 0, 30))
    assert not a.apply(1, Auction.encode(TAKE, 0, 0))
    assert a.apply(0, Auction.encode(TAKE, 0, 0))
    assert a.balances == [130, 70] and a.locked == [0, 0] and a.lots[0].owner == 1


def test_pixel_round_trip():
    w = PixelWar()
    assert w.apply(0, PixelWar.encode(0, 0, 0xFF0000))
    assert w.pixel(0, 0) == 0xFF0000
    assert PixelWar.decode(PixelWar.encode(2047, 2047, 0xABCDEF)) == (2047, 2047, 0xABCDEF)
    assert not w.apply(0, (2048 << 35).to_bytes(8, "big"))


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 30), st.integers(0, 2**32), st.integers(1, 400))
def test_random_payments_conserve(accounts, seed, ops):
    rng = random.Random(seed)
    p = Payments(accounts, initial=500)
    for _ in range(ops):
        x = rng.randrange(accounts)
        p.apply(x, p.random_message(rng, x))
        assert all(b >= 0 for b in p.balances)
    assert p.total == 500 * accounts


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 20), st.integers(0, 2**32), st.integers(1, 400))
def test_random_auction_invariant(accounts, seed, ops):
    rng = random.Random(seed)
    a = Auction(accounts, tokens=8, initial=20_000)
    for _ in range(ops):
        x = rng.randrange(accounts)
        a.apply(x, a.random_message(rng, x))
        assert a.invariant_holds()
        assert sum(a.locked) == sum(lot.amount for lot in a.lots)
    assert a.total == 20_000 * accounts


def test_same_ops_same_digest():
    def play(name):
        rng = random.Random(4)
        app = make_app(name, 16)
        for _ in range(500):
            x = rng.randrange(16)
            app.apply(x, app.random_message(rng, x))
        return app.digest()

    for name in ("payments", "auction", "pixelwar"):
        assert play(name) == play(name)
