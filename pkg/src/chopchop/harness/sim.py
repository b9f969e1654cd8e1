"""Deterministic discrete-event simulation of a full deployment.

One logical clock, one seeded RNG, one event heap ordered by (time, insertion
counter).  Every message is encoded to bytes on send and decoded on arrival,
so byte counts are those of the wire format.  The trace digest is a running
hash over every arrival and every server delivery: equal scenarios give equal
digests.
"""
from __future__ import annotations

import hashlib
import heapq
import logging
import math
import random
import struct
from collections import deque
from typing import Optional

from ..broker import Broker, WindowConfig
from ..client import Client, RepeatedMessage
from ..crypto import CountingScheme, get_scheme
from ..directory import Directory, SignupRecord
from ..messages import MultiSigResponse, OrderingSubmit, decode_message
from ..ordering import Sequencer
from ..server import Server
from .apps import make_app
from .faults import MaxSequenceClient, broker_class
from .metrics import Metrics, summarize_latency
from .oracles import InvariantViolation, SafetyOracle
from .scenario import Scenario

log = logging.getLogger(__name__)

_KIND_TAG = {"s": 0, "b": 1, "c": 2}


def _node_bytes(node) -> bytes:
    return struct.pack("<BI", _KIND_TAG[node[0]], node[1])


class NodeEnv:
    """What a node sees of the simulation; silences timers of crashed nodes."""

    __slots__ = ("sim", "node")

    def __init__(self, sim: "Simulation", node):
        self.sim = sim
        self.node = node

    @property
    def now(self) -> float:
        return self.sim.now

    def send(self, src, dst, msg) -> None:
        self.sim.send(src, dst, msg)

    def schedule(self, delay: float, fn, *args) -> None:
        self.sim.schedule(delay, self._fire, fn, args)

    def _fire(self, fn, args) -> None:
        if self.node not in self.sim.crashed:
            fn(*args)

    def order(self, sub: OrderingSubmit) -> None:
        if self.node not in self.sim.crashed:
            self.sim.sequencer.submit(sub)

    def emit(self, kind: str, **fields) -> None:
        self.sim.emit(self.node, kind, fields)


class SimClient(Client):
    """Correct client whose multi-signature, with probability phi, arrives
    after the reduction timeout (it straggles)."""

    def __init__(self, *args, rng: random.Random, straggle: float, late_by: float, **kwargs):
        super().__init__(*args, **kwargs)
        self.rng = rng
        self.straggle = straggle
        self.late_by = late_by
        self.straggled = 0

    def respond(self, dst, msg) -> None:
        if self.straggle and self.rng.random() < self.straggle:
            self.straggled += 1
            self.env.schedule(self.late_by, self.env.send, self.node, dst, msg)
        else:
            self.env.send(self.node, dst, msg)


class GarbageClient(SimClient):
    """Broadcasts like a correct client but answers reductions with junk."""

    def respond(self, dst, msg) -> None:
        if isinstance(msg, MultiSigResponse):
            if self.rng.random() < 0.5:
                junk = self.rng.randbytes(len(msg.signature))
            else:
                junk = self.scheme.encode_multi_signature(self.scheme.multi_sign(self.multi_keys.secret, b"junk"))
            msg = MultiSigResponse(msg.batch, msg.x, junk)
        self.env.send(self.node, dst, msg)


class Simulation:
    def __init__(self, scenario: Scenario):
        sc = scenario
        self.scenario = sc
        self.rng = random.Random(sc.seed)
        self.now = 0.0
        self._heap: list = []
        self._seq = 0
        self.crashed: set = set()
        self.trace = hashlib.sha256()
        self.recent: deque = deque(maxlen=256)
        self.events = 0
        self.sent = 0
        self.lost = 0
        self.ingress = [0] * sc.n_servers
        self.batches: list[dict] = []
        self.latencies: list[float] = []
        self.replays = 0
        self.rejected: dict[int, list] = {}

        self.scheme = CountingScheme(get_scheme(sc.crypto))
        scheme = self.scheme
        seed = sc.seed.to_bytes(8, "little", signed=True)
        self.server_pairs = [scheme.keygen(b"server" + seed + i.to_bytes(4, "little")) for i in range(sc.n_servers)]
        self.server_keys = [p.public for p in self.server_pairs]

        self.directory = Directory(scheme)
        client_pairs = []
        for x in range(sc.n_clients):
            tag = seed + x.to_bytes(4, "little")
            keys = scheme.keygen(b"client" + tag)
            multi = scheme.multi_keygen(b"multi" + tag)
            self.directory.signup(SignupRecord.create(scheme, keys, multi), check=False)
            client_pairs.append((keys, multi))

        faulty_brokers = sc.faulty_brokers
        faulty_clients = sc.faulty_clients
        crashed_servers = {s for s, _ in sc.crashes}
        self.oracle = SafetyOracle(
            correct_servers=[s for s in range(sc.n_servers) if s not in crashed_servers],
            correct_clients=[x for x in range(sc.n_clients) if x not in faulty_clients],
            recent=lambda: list(self.recent),
        )

        self.sequencer = Sequencer(self, self.rng, latency=sc.ordering_latency, jitter=sc.ordering_latency,
                                   link_latency=sc.link_latency / 5, adversarial=sc.adversarial_ordering)
        self.servers: list[Server] = []
        for i in range(sc.n_servers):
            srv = Server(i, scheme, self.directory, self.server_pairs[i], self.server_keys, sc.f,
                         env=NodeEnv(self, ("s", i)), app=make_app(sc.app, sc.n_clients),
                         retrieval_timeout=sc.witness_timeout)
            srv.on_delivery = self._on_delivery
            self.servers.append(srv)
            self.sequencer.register_delivery_handler(i, self._ordered_handler(i))

        config = WindowConfig(capacity=sc.batch_size, collection_timeout=sc.collection_timeout,
                              reduction_timeout=sc.reduction_timeout, witness_margin=sc.witness_margin,
                              witness_timeout=sc.witness_timeout, message_size=sc.message_size)
        self.brokers: list[Broker] = []
        for b in range(sc.n_brokers):
            cls = broker_class(faulty_brokers[b]) if b in faulty_brokers else Broker
            self.brokers.append(cls(b, scheme, self.directory, self.server_keys, sc.f, config,
                                    NodeEnv(self, ("b", b))))
        self.correct_brokers = [b for b in range(sc.n_brokers) if b not in faulty_brokers]

        self.workload = make_app(sc.app, sc.n_clients)
        self.clients: list = []
        late_by = sc.reduction_timeout + sc.link_latency * 2
        for x in range(sc.n_clients):
            keys, multi = client_pairs[x]
            start = (x + sc.seed) % sc.n_brokers
            order = [(start + j) % sc.n_brokers for j in range(sc.n_brokers)]
            env = NodeEnv(self, ("c", x))
            strategy = faulty_clients.get(x)
            if strategy == "max-seq":
                c = MaxSequenceClient(x, scheme, keys, order, env, self.rng)
            else:
                cls = GarbageClient if strategy == "garbage-multisig" else SimClient
                c = cls(x, scheme, keys, multi, order, self.server_keys, sc.f, env=env,
                        timeout=sc.client_timeout, buffer_cap=max(1000, sc.messages_per_client),
                        rng=self.rng, straggle=sc.straggler_frac, late_by=late_by)
                if strategy is None:
                    c.on_complete = self._on_complete
                    self.oracle.watch_client(x, c.ranges)
            self.clients.append(c)
        self.nodes = {}
        for s in self.servers:
            self.nodes[s.node] = s
        for b in self.brokers:
            self.nodes[b.node] = b
        for c in self.clients:
            self.nodes[c.node] = c
        self.outstanding = 0
        self.done_at: Optional[float] = None

    # --- clock ---------------------------------------------------------------

    def schedule(self, delay: float, fn, *args) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (self.now + delay, self._seq, fn, args))

    # --- network -------------------------------------------------------------

    def send(self, src, dst, msg) -> None:
        if src in self.crashed:
            return
        data = msg.encode()
        self.sent += 1
        sc = self.scenario
        if sc.loss and (src[0] == "c" or dst[0] == "c") and self.rng.random() < sc.loss:
            self.lost += 1
            return
        self.schedule(sc.link_latency + self.rng.random() * sc.link_jitter, self._arrive, src, dst, data)

    def _arrive(self, src, dst, data: bytes) -> None:
        if dst in self.crashed:
            return
        if dst[0] == "s":
            self.ingress[dst[1]] += len(data)
        self.trace.update(struct.pack("<dI", self.now, len(data)) + _node_bytes(src) + _node_bytes(dst))
        self.trace.update(data)
        self.events += 1
        msg = decode_message(data)
        self.recent.append((round(self.now, 6), src, dst, type(msg).__name__))
        self.nodes[dst].handle(src, msg)

    def _ordered_handler(self, server: int):
        def handler(position: int, sub: OrderingSubmit) -> None:
            node = ("s", server)
            if node in self.crashed:
                return
            data = sub.encode()
            self.ingress[server] += len(data)
            self.servers[server].on_ordered(position, OrderingSubmit.decode(data))
        return handler

    # --- observation -----------------------------------------------------------

    def emit(self, node, kind: str, fields: dict) -> None:
        self.recent.append((round(self.now, 6), node, kind, fields))
        if kind == "batch_finalized" and node[1] in self.correct_brokers:
            self.batches.append(fields)
        elif kind == "replay":
            self.replays += 1

    def _on_delivery(self, server: int, outcome, entries) -> None:
        self.trace.update(struct.pack("<dIQ", self.now, server, outcome.n) + outcome.batch_digest)
        for x, m, q in entries:
            self.trace.update(struct.pack("<IQ", x, q) + m)
        self.recent.append((round(self.now, 6), ("s", server), "deliver", len(entries)))
        self.oracle.on_delivery(server, outcome.batch_digest, entries)

    def _on_complete(self, done) -> None:
        self.latencies.append(done.finished_at - done.started_at)
        self.oracle.on_complete(done.x, done.k_next)
        self.outstanding -= 1
        if self.outstanding == 0 and self.done_at is None:
            self.done_at = self.now

    # --- running -----------------------------------------------------------------

    def _start_workload(self) -> None:
        sc = self.scenario
        rng = self.rng
        for c in self.clients:
            if isinstance(c, MaxSequenceClient):
                c.start()
                continue
            msgs = []
            prev = None
            for _ in range(sc.messages_per_client):
                m = self.workload.random_message(rng, c.x)
                while m == prev:
                    m = self.workload.random_message(rng, c.x)
                msgs.append(m)
                prev = m
            if not isinstance(c, GarbageClient):
                self.outstanding += len(msgs)
            for m in msgs:
                self.oracle.add_intent(c.x, m)
            self.schedule(rng.random() * 0.05, self._broadcast_all, c, msgs)
        for s, t in sc.crashes:
            self.schedule(t, self.crashed.add, ("s", s))

    def _broadcast_all(self, client, msgs) -> None:
        for m in msgs:
            try:
                client.broadcast(m)
            except RepeatedMessage:
                raise AssertionError("workload produced consecutive identical messages") from None

    def run(self) -> "RunResult":
        sc = self.scenario
        self._start_workload()
        heap = self._heap
        while heap:
            t = heap[0][0]
            if t > sc.duration:
                break
            if self.done_at is not None and t > self.done_at + sc.drain:
                break
            _, _, fn, args = heapq.heappop(heap)
            self.now = t
            fn(*args)
        self.oracle.check_ranges()
        self.oracle.check_app_hashes({
            s.id: (len(s.log), s.app.digest()) for s in self.servers if ("s", s.id) not in self.crashed
        })
        if not sc.adversarial:
            self.oracle.check_validity(self.clients)
        return RunResult(self.metrics(), self.trace.hexdigest(), self)

    # --- metrics -------------------------------------------------------------------

    def reference_server(self) -> Server:
        live = [s for s in self.servers if ("s", s.id) not in self.crashed]
        return max(live, key=lambda s: (len(s.log), -s.id))

    def metrics(self) -> Metrics:
        sc = self.scenario
        m = Metrics()
        correct = [c for c in self.clients if isinstance(c, SimClient) and not isinstance(c, GarbageClient)]
        m.intents = sum(len(self.oracle.intents[c.x]) for c in correct)
        m.completed = sum(len(c.completed) for c in correct)
        ref = self.reference_server()
        m.delivered = sum(len(entries) for _, entries in ref.log)
        m.batches = len(ref.log)
        last = self.done_at if self.done_at is not None else self.now
        m.throughput = m.delivered / last if last > 0 else 0.0
        m.latency_mean, m.latency_p50, m.latency_p99 = summarize_latency(self.latencies)
        m.entries = sum(b["size"] for b in self.batches)
        m.signers = sum(b["size"] - b["stragglers"] for b in self.batches)
        m.distillation_ratio = m.signers / m.entries if m.entries else math.nan
        live = [s for s in self.servers if ("s", s.id) not in self.crashed]
        m.ingress_bytes = sum(self.ingress[s.id] for s in live)
        useful = self.directory.id_width / 8 + sc.message_size
        ratios, per_msg = [], []
        for s in live:
            delivered = sum(len(entries) for _, entries in s.log)
            if delivered:
                per_msg.append(self.ingress[s.id] / delivered)
                ratios.append(self.ingress[s.id] / (delivered * useful))
        m.ingress_bytes_per_message = sum(per_msg) / len(per_msg) if per_msg else math.nan
        m.line_rate_ratio = sum(ratios) / len(ratios) if ratios else math.nan
        m.verify_calls = self.scheme.counts["verify"]
        m.aggregate_verify_calls = self.scheme.counts["verify_aggregate"]
        m.store_watermark = max(s.store_watermark for s in self.servers)
        m.messages_sent = self.sent
        m.messages_lost = self.lost
        m.sim_time = self.now
        return m


class RunResult:
    def __init__(self, metrics: Metrics, trace_digest: str, sim: Simulation):
        self.metrics = metrics
        self.trace_digest = trace_digest
        self.sim = sim


def run(scenario: Scenario) -> RunResult:
    """Run ``scenario``; raises :class:`InvariantViolation` on a safety failure."""
    return Simulation(scenario).run()


__all__ = ["Simulation", "RunResult", "run", "InvariantViolation", "NodeEnv", "SimClient"]
