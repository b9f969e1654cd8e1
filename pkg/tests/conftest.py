from __future__ import annotations

import heapq
import itertools
import sys

import pytest

from chopchop.batch import Submission, build_proposal, distill
from chopchop.certificates import LegitimacyCertificate, legitimacy_statement
from chopchop.crypto import CountingScheme, get_scheme
from chopchop.directory import Directory, SignupRecord


class World:
    """Keys, directory and helpers for hand-built protocol scenarios (mock crypto)."""

    def __init__(self, n_clients=8, n_servers=4, f=1, crypto="mock"):
        self.scheme = CountingScheme(get_scheme(crypto))
        s = self.scheme
        self.f = f
        self.server_pairs = [s.keygen(b"srv%d" % i) for i in range(n_servers)]
        self.server_keys = [p.public for p in self.server_pairs]
        self.directory = Directory(s)
        self.keys, self.multi = [], []
        for x in range(n_clients):
            k, mk = s.keygen(b"cli%d" % x), s.multi_keygen(b"cli%d" % x)
            self.directory.signup(SignupRecord.create(s, k, mk))
            self.keys.append(k)
            self.multi.append(mk)

    def submission(self, x, k, m, cert=None):
        return Submission.create(self.scheme, x, self.keys[x].secret, k, m, cert)

    def legit(self, n, signers=None):
        signers = range(self.f + 1) if signers is None else signers
        stmt = legitimacy_statement(n)
        return LegitimacyCertificate(n, tuple((i, self.scheme.sign(self.server_pairs[i].secret, stmt))
                                              for i in signers))

    def batch(self, subs, stragglers=()):
        """Honestly distilled batch; ``stragglers`` are client ids."""
        p = build_proposal(subs)
        lagging = set(stragglers)
        sigs = {e.x: self.scheme.multi_sign(self.multi[e.x].secret, p.root) for e in p.entries if e.x not in lagging}
        return p, distill(self.scheme, p, sigs, lagging, width=self.directory.id_width)


@pytest.fixture
def world():
    return World()


class FakeEnv:
    """Deterministic event loop for driving a handful of nodes by hand."""

    def __init__(self):
        self.now = 0.0
        self.sent = []
        self.events = []
        self.ordered = []
        self._q = []
        self._seq = itertools.count()

    def send(self, src, dst, msg):
        self.sent.append((src, dst, msg))

    def schedule(self, delay, fn, *args):
        heapq.heappush(self._q, (self.now + delay, next(self._seq), fn, args))

    def order(self, sub):
        self.ordered.append(sub)

    def emit(self, kind, **fields):
        self.events.append((kind, fields))

    def run_timers(self, until=float("inf")):
        while self._q and self._q[0][0] <= until:
            t, _, fn, args = heapq.heappop(self._q)
            self.now = t
            fn(*args)
        self.now = max(self.now, until) if until != float("inf") else self.now

    def take(self, kind=None, dst=None):
        out = [(s, d, m) for s, d, m in self.sent
               if (kind is None or isinstance(m, kind)) and (dst is None or d == dst)]
        self.sent = [e for e in self.sent if e not in out]
        return out


@pytest.fixture
def env():
    return FakeEnv()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
