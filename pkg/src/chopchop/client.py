"""Client: sequence-number discipline, one message in flight, buffered
broadcasting, reduction-request checks and broker failover.
"""
from __future__ import annotations

import enum
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from . import merkle
from .batch import Submission, entry_bytes
from .broker import Reject
from .certificates import LegitimacyCertificate
from .crypto import KeyPair, Scheme
from .messages import DeliveryNotice, MultiSigResponse, ReductionRequest, SubmissionMsg, SubmissionReject

log = logging.getLogger(__name__)


class Refuse(enum.Enum):
    BAD_PROOF = "BadProof"
    FOREIGN_MESSAGE = "ForeignMessage"
    ILLEGITIMATE_SEQUENCE = "IllegitimateSequence"
    NO_FLIGHT = "NoFlight"


class Backpressure(RuntimeError):
    """The outbound buffer is full."""


class RepeatedMessage(ValueError):
    """Same payload as the previous broadcast; embed an application nonce."""


@dataclass
class Flight:
    message: bytes
    k: int
    submission: Submission
    started_at: float
    broker_slot: int = 0
    attempt: int = 0
    signed: dict = field(default_factory=dict)

    @property
    def max_signed(self) -> Optional[int]:
        return max(self.signed.values(), default=None)


@dataclass(frozen=True)
class Completion:
    x: int
    message: bytes
    k_next: int
    started_at: float
    finished_at: float
    notice: DeliveryNotice


class Client:
    """Correct client.  ``brokers`` is the failover list in order."""

    MAX_BACKOFF = 8

    def __init__(self, x: int, scheme: Scheme, keys: KeyPair, multi_keys: KeyPair, brokers: Sequence[int],
                 server_keys: Sequence, f: int, env=None, timeout: float = 3.0, buffer_cap: int = 1000):
        if not brokers:
            raise ValueError("client needs at least one broker")
        self.x = x
        self.node = ("c", x)
        self.scheme = scheme
        self.keys = keys
        self.multi_keys = multi_keys
        self.brokers = list(brokers)
        self.server_keys = server_keys
        self.f = f
        self.env = env
        self.base_timeout = timeout
        self.timeout = timeout
        self.buffer_cap = buffer_cap

        self.k_next = 0
        self.legitimacy: Optional[LegitimacyCertificate] = None
        self.flight: Optional[Flight] = None
        self.buffer: deque[bytes] = deque()
        self.last_message: Optional[bytes] = None
        self.completed: list[Completion] = []
        self.ranges: list[tuple[bytes, set]] = []
        self.on_complete: Optional[Callable[[Completion], None]] = None
        self.refusals: list[Refuse] = []
        self.rejections: list[Reject] = []

    # --- application side ----------------------------------------------------

    def broadcast(self, message: bytes) -> None:
        tail = self.buffer[-1] if self.buffer else (self.flight.message if self.flight else self.last_message)
        if message == tail:
            raise RepeatedMessage("identical consecutive message; add an application nonce")
        if len(self.buffer) >= self.buffer_cap:
            raise Backpressure(f"client {self.x} buffer holds {self.buffer_cap} messages")
        self.buffer.append(message)
        if self.flight is None:
            self._flush()

    @property
    def current_broker(self) -> Optional[int]:
        return None if self.flight is None else self.brokers[self.flight.broker_slot % len(self.brokers)]

    def _flush(self) -> None:
        if self.flight is not None or not self.buffer:
            return
        m = self.buffer.popleft()
        legit = self.legitimacy if self.k_next > 0 else None
        sub = Submission.create(self.scheme, self.x, self.keys.secret, self.k_next, m, legit)
        now = self.env.now if self.env else 0.0
        self.flight = Flight(m, self.k_next, sub, now)
        self.ranges.append((m, {self.k_next}))
        self.timeout = self.base_timeout
        self._submit()

    def _submit(self) -> None:
        if self.env is None:
            return
        flight = self.flight
        self.env.send(self.node, ("b", self.current_broker), SubmissionMsg(flight.submission))
        self.env.schedule(self.timeout, self._expired, flight, flight.attempt)

    def _expired(self, flight: Flight, attempt: int) -> None:
        if self.flight is flight and flight.attempt == attempt:
            self.failover()

    def failover(self) -> None:
        """Resubmit the same message with the same k to the next broker."""
        flight = self.flight
        if flight is None:
            return
        flight.attempt += 1
        flight.broker_slot += 1
        if flight.broker_slot % len(self.brokers) == 0:
            self.timeout = min(2 * self.timeout, self.MAX_BACKOFF * self.base_timeout)
        if self.env is not None:
            self.env.emit("failover", client=self.x, broker=self.current_broker, attempt=flight.attempt)
        self._submit()

    def on_reject(self, src, reason: int) -> None:
        try:
            reason = Reject(reason)
        except ValueError:
            return
        self.rejections.append(reason)
        if self.flight is None or src != ("b", self.current_broker):
            return
        if reason == Reject.WINDOW_FULL:
            self.env.schedule(0.05, self._retry_same, self.flight, self.flight.attempt)
        elif reason != Reject.DUPLICATE_CLIENT:
            self.failover()

    def _retry_same(self, flight: Flight, attempt: int) -> None:
        if self.flight is flight and flight.attempt == attempt:
            self.env.send(self.node, ("b", self.current_broker), SubmissionMsg(flight.submission))

    # --- reduction -------------------------------------------------------------

    def check_reduction(self, broker: Optional[int], req: ReductionRequest) -> Optional[Refuse]:
        flight = self.flight
        if flight is None or (broker is not None and broker != self.current_broker):
            return Refuse.NO_FLIGHT
        if req.message != flight.message:
            return Refuse.FOREIGN_MESSAGE
        if not merkle.verify_proof(req.root, req.proof.index, entry_bytes(self.x, req.k, flight.message), req.proof):
            return Refuse.BAD_PROOF
        if req.k < flight.k:
            return Refuse.ILLEGITIMATE_SEQUENCE
        if req.k > 0:
            cert = req.legitimacy
            if cert is None or not cert.covers(req.k):
                return Refuse.ILLEGITIMATE_SEQUENCE
            if not (self.legitimacy is not None and self.legitimacy.n >= cert.n):
                if not cert.verify(self.scheme, self.server_keys, self.f):
                    return Refuse.ILLEGITIMATE_SEQUENCE
                self.legitimacy = cert
        return None

    def on_reduction_request(self, broker: Optional[int], req: ReductionRequest):
        """Multi-signature over the root, or the reason for refusing."""
        reason = self.check_reduction(broker, req)
        if reason is not None:
            self.refusals.append(reason)
            return reason
        self.flight.signed[req.root] = req.k
        self.ranges[-1][1].add(req.k)
        return self.scheme.multi_sign(self.multi_keys.secret, req.root)

    # --- completion ------------------------------------------------------------

    def check_notice(self, notice: DeliveryNotice) -> Optional[int]:
        """New k_next if ``notice`` proves the in-flight message delivered."""
        flight = self.flight
        if flight is None:
            return None
        cert = notice.certificate
        st = cert.statement
        proof = notice.proof
        if proof.leaf_count != st.count or not st.accepted(proof.index):
            return None
        if not merkle.verify_proof(st.root, proof.index, entry_bytes(self.x, st.k, flight.message), proof):
            return None
        if st.root not in flight.signed and st.k < flight.k:
            return None
        if not cert.verify(self.scheme, self.server_keys, self.f):
            return None
        top = flight.max_signed
        k_next = max(flight.k, -1 if top is None else top) + 1
        fresh = notice.legitimacy
        if fresh is not None and (self.legitimacy is None or fresh.n > self.legitimacy.n):
            if fresh.verify(self.scheme, self.server_keys, self.f):
                self.legitimacy = fresh
        return k_next

    def on_delivery_notice(self, notice: DeliveryNotice) -> bool:
        k_next = self.check_notice(notice)
        if k_next is None:
            return False
        flight = self.flight
        self.k_next = k_next
        self.last_message = flight.message
        self.flight = None
        now = self.env.now if self.env else 0.0
        done = Completion(self.x, flight.message, k_next, flight.started_at, now, notice)
        self.completed.append(done)
        if self.on_complete is not None:
            self.on_complete(done)
        self._flush()
        return True

    # --- dispatch ----------------------------------------------------------------

    def handle(self, src, msg) -> None:
        if isinstance(msg, ReductionRequest):
            out = self.on_reduction_request(src[1], msg)
            if not isinstance(out, Refuse):
                self.respond(src, MultiSigResponse(msg.batch, self.x, self.scheme.encode_multi_signature(out)))
        elif isinstance(msg, DeliveryNotice):
            self.on_delivery_notice(msg)
        elif isinstance(msg, SubmissionReject):
            self.on_reject(src, msg.reason)

    def respond(self, dst, msg) -> None:
        self.env.send(self.node, dst, msg)
