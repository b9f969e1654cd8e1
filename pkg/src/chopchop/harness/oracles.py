"""Safety oracles evaluated while a simulation runs.

* agreement      -- correct servers' delivery logs are identical at equal length
* integrity      -- every delivery to a correct client matches one of its
                    broadcast intents under a sequence number it authenticated
* no-duplication -- per server and client: sequence numbers strictly increase,
                    no message equals its predecessor, no intent twice
* legitimacy     -- no correct client's k_next exceeds delivered batches + 1
"""
from __future__ import annotations

from collections import defaultdict


class InvariantViolation(AssertionError):
    def __init__(self, prop: str, detail: str, events=()):
        super().__init__(f"{prop}: {detail}")
        self.property = prop
        self.detail = detail
        self.events = list(events)


class SafetyOracle:
    def __init__(self, correct_servers, correct_clients, recent=lambda: ()):
        self.correct_servers = set(correct_servers)
        self.correct_clients = set(correct_clients)
        self.recent = recent
        self.reference: list = []
        self.length: dict[int, int] = defaultdict(int)
        self.intents: dict[int, list[bytes]] = defaultdict(list)
        self.ranges: dict[int, list] = {}
        self.matched: dict[tuple[int, int], int] = {}
        self.last: dict[tuple[int, int], tuple[int, bytes]] = {}
        self.delivered_batches = 0
        self.checks = 0

    def fail(self, prop: str, detail: str):
        raise InvariantViolation(prop, detail, self.recent())

    def add_intent(self, x: int, m: bytes) -> None:
        self.intents[x].append(m)

    def watch_client(self, x: int, ranges: list) -> None:
        self.ranges[x] = ranges

    def on_delivery(self, server: int, digest: bytes, entries) -> None:
        if server not in self.correct_servers:
            return
        record = (digest, tuple(entries))
        i = self.length[server]
        self.length[server] = i + 1
        self.delivered_batches = max(self.delivered_batches, i + 1)
        if i < len(self.reference):
            if self.reference[i] != record:
                self.fail("agreement", f"server {server} log entry {i} differs from the reference")
        else:
            self.reference.append(record)
        for x, m, q in entries:
            if x not in self.correct_clients:
                continue
            self.checks += 1
            key = (server, x)
            prev = self.last.get(key)
            if prev is not None:
                if q <= prev[0]:
                    self.fail("no-duplication", f"server {server} client {x}: q={q} after q={prev[0]}")
                if m == prev[1]:
                    self.fail("no-duplication", f"server {server} client {x}: message repeated")
            self.last[key] = (q, m)
            intents = self.intents[x]
            ranges = self.ranges.get(x, [])
            start = self.matched.get(key, -1) + 1
            for j in range(start, min(len(intents), len(ranges))):
                if intents[j] == m and q in ranges[j][1]:
                    self.matched[key] = j
                    break
            else:
                earlier = any(intents[j] == m and q in ranges[j][1] for j in range(min(start, len(ranges))))
                prop = "no-duplication" if earlier else "integrity"
                self.fail(prop, f"server {server} delivered unmatched message {m.hex()} q={q} for client {x}")

    def on_complete(self, x: int, k_next: int) -> None:
        if x in self.correct_clients and k_next > self.delivered_batches + 1:
            self.fail("legitimacy", f"client {x} k_next={k_next} with only {self.delivered_batches} batches delivered")

    def check_ranges(self) -> None:
        for x, ranges in self.ranges.items():
            seen: set[int] = set()
            for m, ks in ranges:
                if seen & ks:
                    self.fail("sequence-ranges", f"client {x} reused sequence numbers {sorted(seen & ks)[:5]}")
                seen |= ks

    def check_app_hashes(self, hashes: dict[int, tuple[int, bytes]]) -> None:
        by_length: dict[int, set] = defaultdict(set)
        for s, (length, h) in hashes.items():
            if s in self.correct_servers:
                by_length[length].add(h)
        for length, hs in by_length.items():
            if len(hs) > 1:
                self.fail("app-determinism", f"{len(hs)} distinct application states at log length {length}")

    def check_validity(self, clients) -> None:
        for c in clients:
            if c.x not in self.correct_clients:
                continue
            if len(c.completed) != len(self.intents[c.x]):
                self.fail("validity", f"client {c.x} completed {len(c.completed)} of {len(self.intents[c.x])}")
