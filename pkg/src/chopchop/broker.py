"""Broker: submission windows, reduction, straggler fallback, witnessing,
ordering submission and delivery-certificate distribution.

The broker is untrusted.  :class:`Broker` is the correct behaviour; the
methods marked as hooks are what Byzantine strategies override.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from .batch import BatchProposal, DistilledBatch, Submission, build_proposal, distill
from .certificates import (
    DeliveryCertificate,
    LegitimacyCertificate,
    Witness,
    WitnessShard,
    legitimacy_statement,
    witness_statement,
)
from .crypto import Scheme
from .directory import Directory, UnknownClient
from .messages import (
    BatchPublish,
    DeliveryNotice,
    DeliverySig,
    MultiSigResponse,
    OrderingSubmit,
    ReductionRequest,
    Refusal,
    ShardRequest,
    ShardResponse,
    SubmissionMsg,
    SubmissionReject,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WindowConfig:
    capacity: int = 65_536
    collection_timeout: float = 1.0
    reduction_timeout: float = 1.0
    witness_margin: int = 0
    witness_timeout: float = 1.0
    message_size: int = 8

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be at least 1")
        if min(self.collection_timeout, self.reduction_timeout, self.witness_timeout) <= 0:
            raise ValueError("timeouts must be positive")
        if self.witness_margin < 0:
            raise ValueError("witness margin must be non-negative")


class Phase(enum.IntEnum):
    COLLECTING = 0
    REDUCING = 1
    WITNESSING = 2
    ORDERING = 3
    RESPONDING = 4
    DONE = 5


class Reject(enum.IntEnum):
    BAD_SIGNATURE = 1
    MISSING_LEGITIMACY = 2
    INVALID_LEGITIMACY = 3
    DUPLICATE_CLIENT = 4
    WINDOW_FULL = 5
    MESSAGE_SIZE = 6


class PhaseError(RuntimeError):
    pass


class LegitimacyCache:
    """Highest verified legitimacy certificate.

    A certificate at or below the cached bound is accepted without checking
    its signatures: the cached one already proves everything it could.
    """

    def __init__(self, scheme: Scheme, server_keys: Sequence, f: int):
        self.scheme = scheme
        self.server_keys = server_keys
        self.f = f
        self.highest: Optional[LegitimacyCertificate] = None
        self.verifications = 0

    @property
    def bound(self) -> int:
        return 0 if self.highest is None else self.highest.n

    def check(self, k: int, cert: Optional[LegitimacyCertificate]) -> Optional[Reject]:
        if k == 0:
            return None
        if cert is None or cert.n <= k:
            # the client's proof may lag behind one this broker already holds
            return None if k < self.bound else Reject.MISSING_LEGITIMACY
        if cert.n <= self.bound:
            return None
        self.verifications += 1
        if not cert.verify(self.scheme, self.server_keys, self.f):
            return Reject.INVALID_LEGITIMACY
        self.highest = cert
        return None

    def offer(self, cert: LegitimacyCertificate) -> None:
        """Record a certificate the caller already verified."""
        if cert.n > self.bound:
            self.highest = cert

    def covering(self, k: int) -> Optional[LegitimacyCertificate]:
        if self.highest is not None and self.highest.n > k:
            return self.highest
        return None


@dataclass
class SiftResult:
    valid: list
    invalid: list
    calls: int


def sift_multisignatures(scheme: Scheme, root: bytes, received: Iterable[tuple[int, object]],
                         multi_public: Callable[[int], object]) -> SiftResult:
    """Split received multi-signatures over ``root`` into valid and invalid.

    One aggregate check covers the whole set; on failure the set is halved and
    only failing halves are recursed into, so d invalid signatures among n cost
    at most 2*d*ceil(log2 n) + 1 checks.  Signatures that do not decode are
    classified invalid without a check.
    """
    items, invalid = [], []
    for x, sig in received:
        if isinstance(sig, (bytes, bytearray)):
            try:
                sig = scheme.decode_multi_signature(bytes(sig))
            except ValueError:
                invalid.append(x)
                continue
        try:
            pk = multi_public(x)
        except (UnknownClient, LookupError):
            invalid.append(x)
            continue
        items.append((x, pk, sig))

    calls = 0
    valid = []

    def check(group) -> bool:
        nonlocal calls
        calls += 1
        apk = scheme.aggregate_public_keys(pk for _, pk, _ in group)
        asig = scheme.aggregate_signatures(s for _, _, s in group)
        return scheme.verify_aggregate(apk, root, asig)

    def walk(group, known_bad: bool = False) -> None:
        if not known_bad and check(group):
            valid.extend(x for x, _, _ in group)
            return
        if len(group) == 1:
            invalid.append(group[0][0])
            return
        mid = len(group) // 2
        left, right = group[:mid], group[mid:]
        if check(left):
            valid.extend(x for x, _, _ in left)
            walk(right, known_bad=True)
        else:
            walk(left, known_bad=True)
            walk(right)

    if items:
        walk(items)
    return SiftResult(sorted(valid), sorted(invalid), calls)


@dataclass
class BatchState:
    """One broker-side batch, from window to certificate."""

    batch_id: int
    opened_at: float
    phase: Phase = Phase.COLLECTING
    submissions: dict = field(default_factory=dict)
    order: list = field(default_factory=list)
    proposal: Optional[BatchProposal] = None
    received: dict = field(default_factory=dict)
    stragglers: list = field(default_factory=list)
    batch: Optional[DistilledBatch] = None
    sift: Optional[SiftResult] = None
    shard_targets: list = field(default_factory=list)
    shards: dict = field(default_factory=dict)
    extended: bool = False
    witness: Optional[Witness] = None
    delivery_sigs: dict = field(default_factory=dict)
    certificate: Optional[DeliveryCertificate] = None
    legitimacy: Optional[LegitimacyCertificate] = None
    timers: list = field(default_factory=list)

    def advance(self, phase: Phase) -> None:
        if phase <= self.phase:
            raise PhaseError(f"batch {self.batch_id}: {self.phase.name} -> {phase.name}")
        self.phase = phase

    @property
    def digest(self) -> Optional[bytes]:
        return None if self.batch is None else self.batch.digest


def accept_submission(state: BatchState, sub: Submission, scheme: Scheme, directory: Directory,
                      cache: LegitimacyCache, config: WindowConfig) -> Optional[Reject]:
    """Admit ``sub`` to the window, or say why not."""
    if state.phase != Phase.COLLECTING:
        raise PhaseError("window is closed")
    if len(state.submissions) >= config.capacity:
        return Reject.WINDOW_FULL
    if sub.x in state.submissions:
        return Reject.DUPLICATE_CLIENT
    if len(sub.message) != config.message_size:
        return Reject.MESSAGE_SIZE
    try:
        public = directory.public(sub.x)
    except UnknownClient:
        return Reject.BAD_SIGNATURE
    if not sub.signature_valid(scheme, public):
        return Reject.BAD_SIGNATURE
    reason = cache.check(sub.k, sub.legitimacy)
    if reason is not None:
        return reason
    state.submissions[sub.x] = sub
    state.order.append(sub.x)
    return None


def close_window(state: BatchState, cache: LegitimacyCache):
    """Build the proposal and one reduction request per client."""
    if state.phase != Phase.COLLECTING:
        raise PhaseError("window already closed")
    if not state.submissions:
        return None, []
    proposal = build_proposal(state.submissions[x] for x in state.order)
    state.proposal = proposal
    state.advance(Phase.REDUCING)
    cert = cache.covering(proposal.k) if proposal.k > 0 else None
    requests = []
    for i, e in enumerate(proposal.entries):
        requests.append((e.x, ReductionRequest(state.batch_id, proposal.root, proposal.k, e.message,
                                               proposal.tree.prove(i), cert)))
    return proposal, requests


def finalize_batch(state: BatchState, scheme: Scheme, directory: Directory) -> DistilledBatch:
    """Sift what arrived; every entry without a valid multi-signature straggles."""
    if state.phase != Phase.REDUCING:
        raise PhaseError("not reducing")
    proposal = state.proposal
    result = sift_multisignatures(scheme, proposal.root, sorted(state.received.items(), key=lambda kv: kv[0]),
                                  directory.multi_public)
    state.sift = result
    valid = set(result.valid)
    multisigs = {}
    for x in valid:
        sig = state.received[x]
        multisigs[x] = scheme.decode_multi_signature(sig) if isinstance(sig, (bytes, bytearray)) else sig
    state.stragglers = [x for x in proposal.ids if x not in valid]
    state.batch = distill(scheme, proposal, multisigs, state.stragglers, width=directory.id_width)
    state.advance(Phase.WITNESSING)
    return state.batch


def witness_targets(n_servers: int, f: int, margin: int, start: int, extended: bool) -> list[int]:
    """Servers asked for shards: f+1+margin first, 2f+1 after a timeout."""
    size = f + 1 + margin
    if extended:
        size = max(size, 2 * f + 1)
    size = min(size, n_servers)
    return [(start + j) % n_servers for j in range(size)]


def add_shard(state: BatchState, resp: ShardResponse, scheme: Scheme, server_keys: Sequence,
              f: int) -> Optional[Witness]:
    """Record a shard; returns the witness once f+1 distinct valid shards exist."""
    if state.phase != Phase.WITNESSING or resp.batch_digest != state.digest:
        return None
    if resp.refusal != Refusal.SIGNED or not 0 <= resp.server < len(server_keys):
        return None
    if resp.server in state.shards:
        return None
    if not scheme.verify(server_keys[resp.server], witness_statement(resp.batch_digest), resp.signature):
        return None
    state.shards[resp.server] = WitnessShard(resp.server, resp.signature)
    if len(state.shards) < f + 1:
        return None
    chosen = tuple(state.shards[s] for s in sorted(state.shards)[: f + 1])
    state.witness = Witness(state.digest, chosen)
    state.advance(Phase.ORDERING)
    return state.witness


def respond(state: BatchState, sig: DeliverySig, scheme: Scheme, server_keys: Sequence, f: int):
    """Collect delivery signatures; returns (certificate, legitimacy) once f+1 match."""
    if state.phase not in (Phase.ORDERING, Phase.RESPONDING):
        return None
    if sig.statement.batch_digest != state.digest or not 0 <= sig.server < len(server_keys):
        return None
    pk = server_keys[sig.server]
    if not scheme.verify(pk, sig.statement.signed_bytes(), sig.signature):
        return None
    if not scheme.verify(pk, legitimacy_statement(sig.n), sig.legitimacy_signature):
        return None
    if state.phase == Phase.ORDERING:
        state.advance(Phase.RESPONDING)
    key = (sig.statement.encode(), sig.n)
    group = state.delivery_sigs.setdefault(key, {})
    group[sig.server] = sig
    if len(group) < f + 1:
        return None
    servers = sorted(group)[: f + 1]
    state.certificate = DeliveryCertificate(sig.statement, tuple((s, group[s].signature) for s in servers))
    state.legitimacy = LegitimacyCertificate(sig.n, tuple((s, group[s].legitimacy_signature) for s in servers))
    state.advance(Phase.DONE)
    return state.certificate, state.legitimacy


class Broker:
    """Correct broker process.

    ``env`` provides ``now``, ``send(src, dst, msg)``, ``schedule(delay, fn, *args)``,
    ``order(submission)`` and ``emit(kind, **fields)``.
    """

    def __init__(self, broker_id: int, scheme: Scheme, directory: Directory, server_keys: Sequence,
                 f: int, config: WindowConfig, env):
        self.id = broker_id
        self.node = ("b", broker_id)
        self.scheme = scheme
        self.directory = directory
        self.server_keys = server_keys
        self.n_servers = len(server_keys)
        self.f = f
        self.config = config
        self.env = env
        self.cache = LegitimacyCache(scheme, server_keys, f)
        self.collecting: Optional[BatchState] = None
        self.batches: dict[int, BatchState] = {}
        self.by_digest: dict[bytes, BatchState] = {}
        self.finished: list[BatchState] = []
        self._next_batch = 0
        # last notice per client, resent when a lost notice makes it resubmit
        self.notices: dict[int, tuple[int, bytes, DeliveryNotice]] = {}

    # --- submissions ---------------------------------------------------------

    def on_submission(self, src, sub: Submission) -> None:
        cached = self.notices.get(sub.x)
        if cached is not None and cached[0] == sub.k and cached[1] == sub.message:
            self.env.send(self.node, ("c", sub.x), cached[2])
            return
        state = self.collecting
        if state is None:
            state = self.collecting = BatchState(self._next_batch, self.env.now)
            self._next_batch += 1
            self.batches[state.batch_id] = state
            self.env.schedule(self.config.collection_timeout, self._collection_expired, state)
        reason = accept_submission(state, sub, self.scheme, self.directory, self.cache, self.config)
        if reason is not None:
            self.env.send(self.node, src, SubmissionReject(sub.x, int(reason)))
            return
        if len(state.submissions) >= self.config.capacity:
            self._close(state)

    def _collection_expired(self, state: BatchState) -> None:
        if state.phase == Phase.COLLECTING:
            self._close(state)

    def _close(self, state: BatchState) -> None:
        if self.collecting is state:
            self.collecting = None
        proposal, requests = close_window(state, self.cache)
        if proposal is None:
            del self.batches[state.batch_id]
            return
        self.env.emit("window_closed", broker=self.id, batch=state.batch_id, size=len(proposal.entries),
                      k=proposal.k)
        for x, req in self.reduction_requests(state, requests):
            self.env.send(self.node, ("c", x), req)
        self.env.schedule(self.config.reduction_timeout, self._reduction_expired, state)

    # --- reduction -------------------------------------------------------------

    def on_multisig(self, resp: MultiSigResponse) -> None:
        state = self.batches.get(resp.batch)
        if state is None or state.phase != Phase.REDUCING:
            return
        if resp.x not in state.proposal.positions or resp.x in state.received:
            return
        state.received[resp.x] = resp.signature
        if len(state.received) == len(state.proposal.entries):
            self._finalize(state)

    def _reduction_expired(self, state: BatchState) -> None:
        if state.phase == Phase.REDUCING:
            self._finalize(state)

    def _finalize(self, state: BatchState) -> None:
        batch = self.build_batch(state)
        self.by_digest[batch.digest] = state
        self.env.emit("batch_finalized", broker=self.id, batch=state.batch_id, digest=batch.digest,
                      size=batch.count, stragglers=len(batch.stragglers), wire=len(batch.wire))
        msg = BatchPublish(batch.wire)
        for s in self.publish_targets(state):
            self.env.send(self.node, ("s", s), msg)
        self._request_shards(state)

    # --- witnessing ------------------------------------------------------------

    def _request_shards(self, state: BatchState) -> None:
        start = (self.id + state.batch_id) % self.n_servers
        targets = witness_targets(self.n_servers, self.f, self.config.witness_margin, start, state.extended)
        state.shard_targets = targets
        req = ShardRequest(state.digest)
        for s in targets:
            if s not in state.shards:
                self.env.send(self.node, ("s", s), req)
        self.env.schedule(self.config.witness_timeout, self._witness_expired, state)

    def _witness_expired(self, state: BatchState) -> None:
        if state.phase == Phase.WITNESSING:
            state.extended = True
            self._request_shards(state)

    def on_shard(self, resp: ShardResponse) -> None:
        state = self.by_digest.get(resp.batch_digest)
        if state is None:
            return
        witness = add_shard(state, resp, self.scheme, self.server_keys, self.f)
        if witness is not None:
            self.submit_order(state, witness)

    # --- responding ------------------------------------------------------------

    def on_delivery_sig(self, sig: DeliverySig) -> None:
        state = self.by_digest.get(sig.statement.batch_digest)
        if state is None:
            return
        done = respond(state, sig, self.scheme, self.server_keys, self.f)
        if done is None:
            return
        cert, legit = done
        self.cache.offer(legit)
        self.env.emit("certified", broker=self.id, batch=state.batch_id, n=legit.n)
        self.send_notices(state, cert, legit)
        self.finished.append(state)
        self.batches.pop(state.batch_id, None)
        self.by_digest.pop(state.digest, None)

    # --- hooks -----------------------------------------------------------------

    def reduction_requests(self, state: BatchState, requests):
        return requests

    def build_batch(self, state: BatchState) -> DistilledBatch:
        return finalize_batch(state, self.scheme, self.directory)

    def publish_targets(self, state: BatchState) -> list[int]:
        return list(range(self.n_servers))

    def submit_order(self, state: BatchState, witness: Witness) -> None:
        self.env.order(OrderingSubmit(self.id, witness=witness))

    def send_notices(self, state: BatchState, cert: DeliveryCertificate, legit: LegitimacyCertificate) -> None:
        tree = state.proposal.tree
        for i, x in enumerate(state.batch.ids):
            notice = DeliveryNotice(state.batch_id, cert, tree.prove(i), legit)
            sub = state.submissions.get(x)
            if sub is not None:
                self.notices[x] = (sub.k, sub.message, notice)
            self.env.send(self.node, ("c", x), notice)

    # --- dispatch ----------------------------------------------------------------

    def handle(self, src, msg) -> None:
        if isinstance(msg, SubmissionMsg):
            self.on_submission(src, msg.submission)
        elif isinstance(msg, MultiSigResponse):
            self.on_multisig(msg)
        elif isinstance(msg, ShardResponse):
            self.on_shard(msg)
        elif isinstance(msg, DeliverySig):
            self.on_delivery_sig(msg)
        else:
            log.debug("broker %d ignoring %s", self.id, type(msg).__name__)
