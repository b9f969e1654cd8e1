"""Total-order layer used by brokers to order batch digests (and sign-ups).

Anything implementing :class:`Ordering` can sit under the protocol.  The
:class:`Sequencer` here is a deterministic logical sequencer for simulation: it
assigns global positions after a seeded latency, then hands submissions to
every registered server in position order.  In adversarial mode it also
re-delivers submissions (at later positions, never breaking total order) so
upper-layer deduplication gets exercised.
"""
from __future__ import annotations

import random
from typing import Callable, Protocol

from .messages import OrderingSubmit


class OrderingError(RuntimeError):
    pass


class Ordering(Protocol):
    def submit(self, sub: OrderingSubmit) -> None: ...

    def register_delivery_handler(self, server: int, handler: Callable[[int, OrderingSubmit], None]) -> None: ...


class Sequencer:
    """Single logical sequencer.

    ``clock`` must provide ``now`` and ``schedule(delay, fn, *args)``.
    Handlers are called as ``handler(position, submission)``.
    """

    def __init__(self, clock, rng: random.Random, latency: float = 0.05, jitter: float = 0.05,
                 link_latency: float = 0.01, adversarial: bool = False, duplicate_prob: float = 1.0,
                 max_duplicate_delay: float = 0.5):
        self.clock = clock
        self.rng = rng
        self.latency = latency
        self.jitter = jitter
        self.link_latency = link_latency
        self.adversarial = adversarial
        self.duplicate_prob = duplicate_prob
        self.max_duplicate_delay = max_duplicate_delay
        self.handlers: dict[int, Callable] = {}
        self.log: list[OrderingSubmit] = []
        self._next_time: dict[int, float] = {}
        self.on_sequenced: Callable[[int, OrderingSubmit], None] | None = None

    def register_delivery_handler(self, server: int, handler) -> None:
        if server in self.handlers:
            raise OrderingError(f"server {server} already has a delivery handler")
        self.handlers[server] = handler
        self._next_time[server] = 0.0

    def submit(self, sub: OrderingSubmit) -> None:
        if sub.witness is None and sub.signup is None:
            raise OrderingError("submission carries neither a witness nor a sign-up")
        delay = self.latency + self.rng.random() * self.jitter
        self.clock.schedule(delay, self._sequence, sub)
        if self.adversarial and self.rng.random() < self.duplicate_prob:
            extra = delay + self.rng.random() * self.max_duplicate_delay
            self.clock.schedule(extra, self._sequence, sub)

    def _sequence(self, sub: OrderingSubmit) -> None:
        position = len(self.log)
        self.log.append(sub)
        if self.on_sequenced is not None:
            self.on_sequenced(position, sub)
        now = self.clock.now
        for server in sorted(self.handlers):
            at = max(self._next_time[server], now + self.link_latency)
            self._next_time[server] = at
            self.clock.schedule(at - now, self._deliver, server, position, sub)

    def _deliver(self, server: int, position: int, sub: OrderingSubmit) -> None:
        try:
            self.handlers[server](position, sub)
        except Exception as exc:
            raise OrderingError(
                f"delivery handler of server {server} failed at position {position}: {exc!r}"
            ) from exc
