"""Server: witnessing, ordered delivery with per-client deduplication,
legitimacy statements, delivery certificates, retrieval and garbage collection.
"""
from __future__ import annotations

import logging
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import batch as batchmod
from .batch import DistilledBatch, Malformed, WellFormedReport, reconstruct_root, verify_batch
from .certificates import (
    DeliveryStatement,
    WitnessShard,
    encode_bitmap,
    legitimacy_statement,
)
from .crypto import KeyPair, Scheme
from .directory import Directory, InvalidSignup
from .messages import (
    BatchPublish,
    DeliveryAck,
    DeliverySig,
    OrderingSubmit,
    Refusal,
    RetrievalRequest,
    RetrievalResponse,
    ShardRequest,
    ShardResponse,
)

log = logging.getLogger(__name__)

GENESIS_ENTRIES = 1

_REFUSALS = {
    Malformed.DUPLICATE_OR_UNSORTED_IDS: Refusal.DUPLICATE_OR_UNSORTED_IDS,
    Malformed.UNKNOWN_CLIENT: Refusal.UNKNOWN_CLIENT,
    Malformed.BAD_STRAGGLER_SIGNATURE: Refusal.BAD_STRAGGLER_SIGNATURE,
    Malformed.BAD_AGGREGATE: Refusal.BAD_AGGREGATE,
    Malformed.STRAGGLER_SEQUENCE_ABOVE_AGGREGATE: Refusal.STRAGGLER_SEQUENCE_ABOVE_AGGREGATE,
}


@dataclass
class ClientRecord:
    """Last delivered sequence number and message of one client."""

    k: Optional[int] = None
    m: Optional[bytes] = None


def deduplicate(records: dict, batch: DistilledBatch, start: int = 0, stop: Optional[int] = None):
    """Apply the delivery rule to entries ``start:stop`` and update ``records``.

    An entry with effective sequence number q is delivered iff q > k_bar (or
    the client has no delivery yet) and its message differs from m_bar.
    Returns ``(delivered, repeated)`` index lists; ``repeated`` holds entries
    dropped because their message equals the client's last delivered one.
    """
    stop = batch.count if stop is None else stop
    lagging = batch.straggler_map
    delivered, repeated = [], []
    for i in range(start, stop):
        x = batch.ids[i]
        m = batch.messages[i]
        s = lagging.get(i)
        q = batch.k if s is None else s.k
        rec = records.get(x)
        if rec is None:
            rec = records[x] = ClientRecord()
        if m == rec.m:
            repeated.append(i)
        elif rec.k is None or q > rec.k:
            rec.k, rec.m = q, m
            delivered.append(i)
    return delivered, repeated


def deduplicate_chunked(records: dict, batch: DistilledBatch, chunks: int,
                        executor: Optional[Executor] = None):
    """Same result as :func:`deduplicate`, processing identifier ranges independently.

    Identifiers are strictly increasing, so each chunk touches its own records.
    """
    bounds = [batch.count * j // chunks for j in range(chunks + 1)]
    spans = [(bounds[j], bounds[j + 1]) for j in range(chunks) if bounds[j] < bounds[j + 1]]
    if executor is None:
        parts = [deduplicate(records, batch, a, b) for a, b in spans]
    else:
        parts = list(executor.map(lambda ab: deduplicate(records, batch, *ab), spans))
    delivered = [i for d, _ in parts for i in d]
    repeated = [i for _, r in parts for i in r]
    return delivered, repeated


@dataclass
class StoredBatch:
    batch: DistilledBatch
    raw: bytes
    report: Optional[WellFormedReport] = None
    delivered: bool = False


@dataclass
class DeliveryOutcome:
    position: int
    batch_digest: bytes
    n: int
    delivered: list = field(default_factory=list)
    repeated: list = field(default_factory=list)
    replay: bool = False


class Server:
    """Correct server.  ``env`` (optional) provides ``send``, ``schedule``, ``now``
    and ``emit``; without it the operations are usable directly."""

    def __init__(self, server_id: int, scheme: Scheme, directory: Directory, keys: KeyPair,
                 server_keys: list, f: int, env=None, app=None, retrieval_timeout: float = 0.5):
        self.id = server_id
        self.node = ("s", server_id)
        self.scheme = scheme
        self.directory = directory
        self.keys = keys
        self.server_keys = server_keys
        self.f = f
        self.env = env
        self.app = app
        self.retrieval_timeout = retrieval_timeout

        self.store: dict[bytes, StoredBatch] = {}
        self.records: dict[int, ClientRecord] = {}
        # log length counting the genesis directory as entry 1, so the first
        # batch yields n = 2 and its signers' next sequence number 1 < n
        self.n = GENESIS_ENTRIES
        self.delivered_digests: set[bytes] = set()
        self.acks: dict[bytes, set[int]] = {}
        self.pending: list[tuple[int, OrderingSubmit]] = []
        self._retrieving: Optional[bytes] = None
        self.log: list[tuple[bytes, tuple]] = []
        self.on_delivery: Optional[Callable[[int, DeliveryOutcome, list], None]] = None
        self.store_watermark = 0

    # --- witnessing -------------------------------------------------------

    def on_batch_publish(self, raw: bytes) -> bool:
        """Store a published batch; idempotent.  Undecodable bytes are dropped."""
        try:
            b = batchmod.decode(raw, check_order=False)
        except ValueError as exc:
            log.debug("server %d dropped undecodable batch: %s", self.id, exc)
            return False
        d = b.digest
        if d in self.store:
            return True
        # A delivered batch may come back when a client resubmits an identical
        # submission; keeping it lets the broker still collect a certificate.
        self.store[d] = StoredBatch(b, bytes(raw), delivered=d in self.delivered_digests)
        self.store_watermark = max(self.store_watermark, len(self.store))
        if self._retrieving == d:
            self._retrieving = None
            self._drain()
        return True

    def check(self, batch_digest: bytes) -> Optional[WellFormedReport]:
        stored = self.store.get(batch_digest)
        if stored is None:
            return None
        if stored.report is None:
            stored.report = verify_batch(self.scheme, stored.batch, self.directory)
        return stored.report

    def on_shard_request(self, batch_digest: bytes) -> ShardResponse:
        report = self.check(batch_digest)
        if report is None:
            return ShardResponse(batch_digest, self.id, Refusal.NOT_STORED)
        if not report.ok:
            return ShardResponse(batch_digest, self.id, _REFUSALS[report.reason])
        shard = WitnessShard.create(self.scheme, self.id, self.keys.secret, batch_digest)
        return ShardResponse(batch_digest, self.id, Refusal.SIGNED, shard.signature)

    # --- ordered delivery -------------------------------------------------

    def on_ordered(self, position: int, sub: OrderingSubmit) -> list[DeliveryOutcome]:
        """Queue an ordered submission and process everything that is ready."""
        if sub.witness is not None and not sub.witness.verify(self.scheme, self.server_keys, self.f):
            log.warning("server %d ignoring ordered digest with invalid witness", self.id)
            return []
        self.pending.append((position, sub))
        return self._drain()

    def _drain(self) -> list[DeliveryOutcome]:
        outcomes = []
        while self.pending:
            position, sub = self.pending[0]
            if sub.signup is not None:
                try:
                    self.directory.signup(sub.signup)
                except InvalidSignup as exc:
                    log.info("server %d rejected sign-up: %s", self.id, exc)
                self.pending.pop(0)
                continue
            d = sub.witness.batch_digest
            if d in self.delivered_digests:
                self.pending.pop(0)
                self.n += 1
                outcome = DeliveryOutcome(position, d, self.n, replay=True)
                self.log.append((d, ()))
                outcomes.append(outcome)
                if self.on_delivery:
                    self.on_delivery(self.id, outcome, [])
                stored = self.store.get(d)
                if stored is not None:
                    b = stored.batch
                    outcome.repeated = [i for i in range(b.count)
                                        if getattr(self.records.get(b.ids[i]), "m", None) == b.messages[i]]
                    self._certify(sub, stored, [], outcome.repeated)
                    self.gc()
                continue
            if d not in self.store:
                self._retrieve(d, sub.witness.signers)
                break
            self.pending.pop(0)
            outcomes.append(self._deliver(position, sub))
        return outcomes

    def _deliver(self, position: int, sub: OrderingSubmit) -> DeliveryOutcome:
        d = sub.witness.batch_digest
        stored = self.store[d]
        b = stored.batch
        delivered, repeated = deduplicate(self.records, b)
        self.n += 1
        self.delivered_digests.add(d)
        stored.delivered = True
        entries = tuple((b.ids[i], b.messages[i], b.effective_sequence(i)) for i in delivered)
        self.log.append((d, entries))
        if self.app is not None:
            for x, m, _ in entries:
                self.app.apply(x, m)
        outcome = DeliveryOutcome(position, d, self.n, delivered, repeated)
        if self.on_delivery:
            self.on_delivery(self.id, outcome, list(entries))

        self._certify(sub, stored, delivered, repeated)
        self.gc()
        return outcome

    def _certify(self, sub: OrderingSubmit, stored: StoredBatch, delivered, repeated) -> None:
        """Send the delivery statement to the submitting broker and ack to peers."""
        b = stored.batch
        d = sub.witness.batch_digest
        if self.env is not None:
            root = stored.report.root if stored.report is not None and stored.report.root else None
            if root is None:
                root = reconstruct_root(b)
            flags = [False] * b.count
            for i in delivered:
                flags[i] = True
            again = [False] * b.count
            for i in repeated:
                again[i] = True
            statement = DeliveryStatement(d, root, b.k, b.count, encode_bitmap(flags), encode_bitmap(again))
            n, legit_sig = self.emit_legitimacy()
            sig = self.scheme.sign(self.keys.secret, statement.signed_bytes())
            self.env.send(self.node, ("b", sub.submitter), DeliverySig(self.id, statement, sig, n, legit_sig))
            ack = DeliveryAck(d, self.id)
            for peer in range(len(self.server_keys)):
                if peer != self.id:
                    self.env.send(self.node, ("s", peer), ack)

    def emit_legitimacy(self) -> tuple[int, bytes]:
        return self.n, self.scheme.sign(self.keys.secret, legitimacy_statement(self.n))

    # --- retrieval --------------------------------------------------------

    def _retrieve(self, batch_digest: bytes, signers, attempt: int = 0) -> None:
        if self.env is None:
            return
        if self._retrieving == batch_digest and attempt == 0:
            return
        peers = [s for s in signers if s != self.id] or [s for s in range(len(self.server_keys)) if s != self.id]
        self._retrieving = batch_digest
        target = peers[attempt % len(peers)]
        self.env.send(self.node, ("s", target), RetrievalRequest(batch_digest))
        self.env.schedule(self.retrieval_timeout, self._retry_retrieval, batch_digest, signers, attempt + 1)

    def _retry_retrieval(self, batch_digest, signers, attempt):
        if self._retrieving == batch_digest and batch_digest not in self.store:
            self._retrieve(batch_digest, signers, attempt)

    def on_retrieval_request(self, batch_digest: bytes) -> Optional[RetrievalResponse]:
        stored = self.store.get(batch_digest)
        return None if stored is None else RetrievalResponse(stored.raw)

    # --- garbage collection -----------------------------------------------

    def on_delivery_ack(self, batch_digest: bytes, server: int) -> list[bytes]:
        if batch_digest in self.delivered_digests and batch_digest not in self.store:
            return []
        self.acks.setdefault(batch_digest, set()).add(server)
        return self.gc()

    def gc(self) -> list[bytes]:
        """Free batches this server delivered and every other server acknowledged."""
        others = len(self.server_keys) - 1
        freed = []
        for d in [d for d, s in self.store.items() if s.delivered]:
            if len(self.acks.get(d, ())) >= others:
                del self.store[d]
                self.acks.pop(d, None)
                freed.append(d)
        return freed

    # --- message dispatch ---------------------------------------------------

    def handle(self, src, msg) -> None:
        env = self.env
        if isinstance(msg, BatchPublish):
            self.on_batch_publish(msg.batch)
        elif isinstance(msg, ShardRequest):
            env.send(self.node, src, self.on_shard_request(msg.batch_digest))
        elif isinstance(msg, RetrievalRequest):
            resp = self.on_retrieval_request(msg.batch_digest)
            if resp is not None:
                env.send(self.node, src, resp)
        elif isinstance(msg, RetrievalResponse):
            self.on_batch_publish(msg.batch)
        elif isinstance(msg, DeliveryAck):
            self.on_delivery_ack(msg.batch_digest, msg.server)
        else:
            log.debug("server %d ignoring %s", self.id, type(msg).__name__)
