"""Byzantine broker and client behaviours.

Each broker strategy subclasses the correct :class:`~chopchop.broker.Broker`
and overrides one or two hooks.  None of them can make a correct server
deliver a forged or duplicated message; the safety suite checks exactly that.
"""
from __future__ import annotations

import random
from dataclasses import replace

from ..batch import MAX_SEQUENCE, BatchProposal, DistilledBatch, Straggler, Submission, distill, entry_bytes
from ..broker import BatchState, Broker, LegitimacyCache, Phase, finalize_batch, witness_targets
from ..certificates import LegitimacyCertificate
from ..merkle import MerkleTree
from ..messages import BatchPublish, OrderingSubmit, ReductionRequest, SubmissionMsg


def _proposal(entries, k: int) -> BatchProposal:
    tree = MerkleTree([entry_bytes(e.x, k, e.message) for e in entries])
    return BatchProposal(tuple(entries), k, tree)


def _flip(m: bytes) -> bytes:
    return bytes(b ^ 0xA5 for b in m)


class ForgeMessage(Broker):
    """Swaps one client's payload for a forged one before the reduction.

    On even batches the victim is told the forged payload, on odd ones the
    broker lies and shows the genuine payload next to a proof for the forgery.
    Either way the victim refuses, and the only way to ship the forged entry is
    as a straggler carrying a signature over the genuine payload.
    """

    def reduction_requests(self, state: BatchState, requests):
        p = state.proposal
        victim = p.entries[0]
        forged = replace(victim, message=_flip(victim.message))
        state.proposal = p = _proposal((forged,) + p.entries[1:], p.k)
        out = []
        for i, e in enumerate(p.entries):
            shown = e.message
            if i == 0 and state.batch_id % 2:
                shown = victim.message
            cert = requests[i][1].legitimacy
            out.append((e.x, ReductionRequest(state.batch_id, p.root, p.k, shown, p.tree.prove(i), cert)))
        return out


class DuplicateEntry(Broker):
    """Lists the first client twice."""

    def build_batch(self, state: BatchState) -> DistilledBatch:
        b = finalize_batch(state, self.scheme, self.directory)
        first = state.proposal.entries[0]
        moved = [Straggler(s.index + 1 if s.index else 0, s.k, s.signature) for s in b.stragglers]
        stragglers = sorted(moved + [Straggler(1, first.k, first.signature)], key=lambda s: s.index)
        dup = DistilledBatch(b.k, b.msg_size, b.id_width, (b.ids[0],) + b.ids, (b.messages[0],) + b.messages,
                             b.signature, tuple(stragglers), b.no_aggregate)
        state.batch = dup
        return dup


class ReplayBatch(Broker):
    """Correct until certified, then replays the batch twice.

    The exact digest goes through ordering again, and a repackaged copy (every
    entry as a straggler with its original signature and sequence number) is
    witnessed and ordered as a fresh batch.
    """

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.replays: set[int] = set()

    def send_notices(self, state, cert, legit):
        super().send_notices(state, cert, legit)
        if state.batch_id in self.replays:
            return
        self.env.order(OrderingSubmit(self.id, witness=state.witness))
        copy = BatchState(self._next_batch, self.env.now)
        self._next_batch += 1
        self.replays.add(copy.batch_id)
        copy.proposal = state.proposal
        copy.phase = Phase.REDUCING
        copy.stragglers = list(state.proposal.ids)
        copy.batch = distill(self.scheme, state.proposal, {}, copy.stragglers, width=self.directory.id_width)
        copy.advance(Phase.WITNESSING)
        self.batches[copy.batch_id] = copy
        self.by_digest[copy.batch.digest] = copy
        self.env.emit("replay", broker=self.id, batch=state.batch_id, digest=state.digest, copy=copy.batch.digest)
        for s in range(self.n_servers):
            self.env.send(self.node, ("s", s), BatchPublish(copy.batch.wire))
        self._request_shards(copy)


class WithholdCertificate(Broker):
    """Never forwards delivery certificates, and publishes the batch only to
    the servers it asks for shards, so everyone else must retrieve it."""

    def publish_targets(self, state):
        start = (self.id + state.batch_id) % self.n_servers
        return witness_targets(self.n_servers, self.f, self.config.witness_margin, start, False)

    def send_notices(self, state, cert, legit):
        pass


class _Gullible(LegitimacyCache):
    def check(self, k, cert):
        return None


class StaleLegitimacy(Broker):
    """Admits any correctly signed submission regardless of legitimacy and
    proposes the largest sequence number, backed only by a stale certificate."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.cache = _Gullible(self.scheme, self.server_keys, self.f)

    def reduction_requests(self, state: BatchState, requests):
        p = state.proposal
        state.proposal = p = _proposal(p.entries, MAX_SEQUENCE)
        stale = self.cache.highest
        return [(e.x, ReductionRequest(state.batch_id, p.root, p.k, e.message, p.tree.prove(i), stale))
                for i, e in enumerate(p.entries)]


class Misdistill(Broker):
    """Even batches: a valid signer is demoted to straggler (harmless).
    Odd batches: a signer is claimed but its signature left out of the aggregate."""

    def build_batch(self, state: BatchState) -> DistilledBatch:
        b = finalize_batch(state, self.scheme, self.directory)
        signers = b.signer_indices()
        if not signers:
            return b
        victim = signers[0]
        entry = state.proposal.entries[victim]
        if state.batch_id % 2 == 0:
            stragglers = tuple(sorted(b.stragglers + (Straggler(victim, entry.k, entry.signature),),
                                      key=lambda s: s.index))
            if len(stragglers) == b.count:
                bad = replace(b, stragglers=stragglers, signature=bytes(192), no_aggregate=True)
            else:
                others = [state.received[b.ids[i]] for i in signers[1:]]
                sigs = [self.scheme.decode_multi_signature(s) for s in others]
                agg = self.scheme.encode_multi_signature(self.scheme.aggregate_signatures(sigs))
                bad = replace(b, stragglers=stragglers, signature=agg)
        else:
            others = [state.received[b.ids[i]] for i in signers[1:]]
            if others:
                sigs = [self.scheme.decode_multi_signature(s) for s in others]
                agg = self.scheme.encode_multi_signature(self.scheme.aggregate_signatures(sigs))
            else:
                agg = self.scheme.encode_multi_signature(self.scheme.multi_sign(
                    self.scheme.multi_keygen(b"misdistill").secret, b"nothing"))
            bad = replace(b, signature=agg)
        state.batch = bad
        return bad


class Silent(Broker):
    """Crashed from the start."""

    def handle(self, src, msg) -> None:
        pass


BROKER_STRATEGIES = {
    "forge-message": ForgeMessage,
    "duplicate-entry": DuplicateEntry,
    "replay-batch": ReplayBatch,
    "withhold-certificate": WithholdCertificate,
    "stale-legitimacy": StaleLegitimacy,
    "misdistill": Misdistill,
    "silent": Silent,
}


def broker_class(strategy: str):
    try:
        return BROKER_STRATEGIES[strategy]
    except KeyError:
        raise ValueError(f"unknown broker strategy {strategy!r}; choose from {sorted(BROKER_STRATEGIES)}") from None


class MaxSequenceClient:
    """Keeps submitting k = 2^64-1 (no certificate) and k = 2^63 with a forged one."""

    def __init__(self, x: int, scheme, keys, brokers, env, rng: random.Random, period: float = 0.5,
                 message_size: int = 8):
        self.x = x
        self.node = ("c", x)
        self.scheme = scheme
        self.keys = keys
        self.brokers = list(brokers)
        self.env = env
        self.rng = rng
        self.period = period
        self.message_size = message_size
        self.sent = 0
        self.rejections: list[int] = []

    def start(self) -> None:
        self.env.schedule(self.rng.random() * self.period, self._tick)

    def _tick(self) -> None:
        m = self.rng.randbytes(self.message_size)
        if self.sent % 2 == 0:
            sub = Submission.create(self.scheme, self.x, self.keys.secret, MAX_SEQUENCE, m)
        else:
            k = 1 << 63
            forged = LegitimacyCertificate(k + 1, tuple((s, self.rng.randbytes(64)) for s in range(4)))
            sub = Submission.create(self.scheme, self.x, self.keys.secret, k, m, forged)
        broker = self.brokers[self.sent % len(self.brokers)]
        self.sent += 1
        self.env.send(self.node, ("b", broker), SubmissionMsg(sub))
        self.env.schedule(self.period, self._tick)

    def handle(self, src, msg) -> None:
        reason = getattr(msg, "reason", None)
        if reason is not None:
            self.rejections.append(reason)


CLIENT_STRATEGIES = ("max-seq", "garbage-multisig")
