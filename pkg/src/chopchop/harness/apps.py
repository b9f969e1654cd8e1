"""Demo applications replicated on top of the broadcast: payments, an
auction house and a shared pixel board.  All messages are 8 bytes.
"""
from __future__ import annotations

import hashlib
import random
import struct
from dataclasses import dataclass

PAYMENT = struct.Struct("<II")
AUCTION = struct.Struct("<II")
BOARD_SIDE = 2048


class App:
    name = "app"

    def __init__(self):
        self.applied = 0
        self.noops = 0

    def apply(self, x: int, m: bytes) -> bool:
        self.applied += 1
        ok = self._apply(x, m)
        if not ok:
            self.noops += 1
        return ok

    def _apply(self, x: int, m: bytes) -> bool:
        raise NotImplementedError

    def digest(self) -> bytes:
        raise NotImplementedError

    def random_message(self, rng: random.Random, x: int) -> bytes:
        raise NotImplementedError


class Payments(App):
    """Recipient u32 + amount u32.  Overdrafts and unknown accounts are no-ops."""

    name = "payments"

    def __init__(self, accounts: int, initial: int = 1_000_000):
        super().__init__()
        self.balances = [initial] * accounts

    @staticmethod
    def encode(recipient: int, amount: int) -> bytes:
        return PAYMENT.pack(recipient, amount)

    def _apply(self, x: int, m: bytes) -> bool:
        if len(m) != PAYMENT.size or not 0 <= x < len(self.balances):
            return False
        to, amount = PAYMENT.unpack(m)
        if to >= len(self.balances) or amount > self.balances[x]:
            return False
        self.balances[x] -= amount
        self.balances[to] += amount
        return True

    @property
    def total(self) -> int:
        return sum(self.balances)

    def digest(self) -> bytes:
        return hashlib.sha256(struct.pack(f"<{len(self.balances)}Q", *self.balances)).digest()

    def random_message(self, rng: random.Random, x: int) -> bytes:
        return self.encode(rng.randrange(len(self.balances)), rng.randrange(1, 1000))


BID, TAKE = 0, 1


@dataclass
class Lot:
    owner: int
    bidder: int = -1
    amount: int = 0


class Auction(App):
    """Tag u8 (0 bid, 1 take) + token u24 + amount u32.

    The highest bid on a token is locked in the bidder's account and refunded
    when outbid.  The owner may take the highest bid, which transfers the
    funds and the token.
    """

    name = "auction"

    def __init__(self, accounts: int, tokens: int = 1024, initial: int = 1_000_000):
        super().__init__()
        self.balances = [initial] * accounts
        self.locked = [0] * accounts
        self.lots = [Lot(t % accounts) for t in range(tokens)]

    @staticmethod
    def encode(op: int, token: int, amount: int) -> bytes:
        return AUCTION.pack(op | (token << 8), amount)

    @staticmethod
    def decode(m: bytes):
        head, amount = AUCTION.unpack(m)
        return head & 0xFF, head >> 8, amount

    def _apply(self, x: int, m: bytes) -> bool:
        if len(m) != AUCTION.size or not 0 <= x < len(self.balances):
            return False
        op, token, amount = self.decode(m)
        if token >= len(self.lots):
            return False
        lot = self.lots[token]
        if op == BID:
            if amount <= lot.amount:
                return False
            own_lock = lot.amount if lot.bidder == x else 0
            if self.balances[x] - self.locked[x] + own_lock < amount:
                return False
            if lot.bidder >= 0:
                self.locked[lot.bidder] -= lot.amount
            self.locked[x] += amount
            lot.bidder, lot.amount = x, amount
            return True
        if op == TAKE:
            if lot.owner != x or lot.bidder < 0:
                return False
            b, a = lot.bidder, lot.amount
            self.locked[b] -= a
            self.balances[b] -= a
            self.balances[x] += a
            lot.owner, lot.bidder, lot.amount = b, -1, 0
            return True
        return False

    def invariant_holds(self) -> bool:
        return all(0 <= lk <= bal for lk, bal in zip(self.locked, self.balances))

    @property
    def total(self) -> int:
        return sum(self.balances)

    def digest(self) -> bytes:
        h = hashlib.sha256()
        h.update(struct.pack(f"<{len(self.balances)}Q", *self.balances))
        h.update(struct.pack(f"<{len(self.locked)}Q", *self.locked))
        for lot in self.lots:
            h.update(struct.pack("<IiI", lot.owner, lot.bidder, lot.amount))
        return h.digest()

    def random_message(self, rng: random.Random, x: int) -> bytes:
        token = rng.randrange(len(self.lots))
        if rng.random() < 0.2:
            return self.encode(TAKE, token, 0)
        return self.encode(BID, token, rng.randrange(1, 10_000))


class PixelWar(App):
    """Big-endian u64: x (11 bits) << 35 | y (11 bits) << 24 | rgb (24 bits)."""

    name = "pixelwar"

    def __init__(self, side: int = BOARD_SIDE):
        super().__init__()
        self.side = side
        self.board: dict[tuple[int, int], int] = {}

    @staticmethod
    def encode(x: int, y: int, rgb: int) -> bytes:
        return ((x << 35) | (y << 24) | rgb).to_bytes(8, "big")

    @staticmethod
    def decode(m: bytes):
        v = int.from_bytes(m, "big")
        return v >> 35, (v >> 24) & 0x7FF, v & 0xFFFFFF

    def _apply(self, client: int, m: bytes) -> bool:
        if len(m) != 8:
            return False
        x, y, rgb = self.decode(m)
        if x >= self.side or y >= self.side:
            return False
        self.board[(x, y)] = rgb
        return True

    def pixel(self, x: int, y: int) -> int:
        return self.board.get((x, y), 0)

    def digest(self) -> bytes:
        h = hashlib.sha256()
        for (x, y) in sorted(self.board):
            h.update(struct.pack("<HHI", x, y, self.board[(x, y)]))
        return h.digest()

    def random_message(self, rng: random.Random, x: int) -> bytes:
        return self.encode(rng.randrange(self.side), rng.randrange(self.side), rng.randrange(1 << 24))


APPS = {"payments": Payments, "auction": Auction, "pixelwar": PixelWar}


def make_app(name: str, accounts: int) -> App:
    if name == "pixelwar":
        return PixelWar()
    try:
        return APPS[name](accounts)
    except KeyError:
        raise ValueError(f"unknown application {name!r}; choose from {sorted(APPS)}") from None
