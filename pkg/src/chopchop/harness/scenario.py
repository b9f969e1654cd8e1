"""Simulation scenarios and their key = value text format.

Example file::

    # four servers, one of them crashing after two seconds
    n_servers = 4
    f = 1
    n_brokers = 2
    n_clients = 64
    batch_size = 64
    straggler_frac = 0.25
    loss = 0.05
    crashes = 3@2.0
    broker_faults = 1:replay-batch
    byzantine_clients = 7:max-seq
    seed = 11

Lists are comma separated.  ``crashes`` entries are ``server@time``,
``broker_faults`` entries ``broker:strategy``, ``byzantine_clients`` entries
``client:strategy``.  Unknown keys are an error.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .apps import APPS
from .faults import BROKER_STRATEGIES, CLIENT_STRATEGIES


@dataclass(frozen=True)
class Scenario:
    n_servers: int = 4
    f: int = 1
    n_brokers: int = 1
    n_clients: int = 16
    batch_size: int = 65_536
    message_size: int = 8
    messages_per_client: int = 1
    collection_timeout: float = 0.2
    reduction_timeout: float = 0.2
    witness_timeout: float = 0.3
    witness_margin: int = 0
    client_timeout: float = 3.0
    link_latency: float = 0.05
    link_jitter: float = 0.02
    ordering_latency: float = 0.05
    loss: float = 0.0
    straggler_frac: float = 0.0
    crashes: tuple = ()
    broker_faults: tuple = ()
    byzantine_clients: tuple = ()
    adversarial_ordering: bool = False
    app: str = "payments"
    crypto: str = "mock"
    seed: int = 0
    duration: float = 60.0
    drain: float = 1.0

    def __post_init__(self):
        if self.f < 0 or self.n_servers < 3 * self.f + 1:
            raise ValueError(f"need n_servers >= 3f+1, got n={self.n_servers}, f={self.f}")
        if not 0.0 <= self.straggler_frac <= 1.0:
            raise ValueError("straggler_frac must lie in [0, 1]")
        if not 0.0 <= self.loss < 1.0:
            raise ValueError("loss must lie in [0, 1)")
        if self.n_brokers < 1 or self.n_clients < 1 or self.batch_size < 1:
            raise ValueError("need at least one broker, one client and batch_size >= 1")
        if self.message_size != 8:
            raise ValueError("the demo applications use 8-byte messages")
        if len({s for s, _ in self.crashes}) > self.f:
            raise ValueError(f"at most f={self.f} servers may crash")
        for s, _ in self.crashes:
            if not 0 <= s < self.n_servers:
                raise ValueError(f"crash of unknown server {s}")
        for b, strategy in self.broker_faults:
            if not 0 <= b < self.n_brokers:
                raise ValueError(f"fault on unknown broker {b}")
            if strategy not in BROKER_STRATEGIES:
                raise ValueError(f"unknown broker strategy {strategy!r}")
        for c, strategy in self.byzantine_clients:
            if not 0 <= c < self.n_clients:
                raise ValueError(f"fault on unknown client {c}")
            if strategy not in CLIENT_STRATEGIES:
                raise ValueError(f"unknown client strategy {strategy!r}")
        if self.app not in APPS:
            raise ValueError(f"unknown application {self.app!r}")
        if self.crypto not in ("mock", "real"):
            raise ValueError("crypto must be 'mock' or 'real'")

    @property
    def faulty_brokers(self) -> dict:
        return dict(self.broker_faults)

    @property
    def faulty_clients(self) -> dict:
        return dict(self.byzantine_clients)

    @property
    def adversarial(self) -> bool:
        return bool(self.broker_faults or self.byzantine_clients or self.adversarial_ordering)

    def with_(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for fl in fields(self):
            lines.append(f"{fl.name} = {_format(fl.name, getattr(self, fl.name))}")
        return "\n".join(lines) + "\n"


def _format(name: str, value) -> str:
    if name == "crashes":
        return ", ".join(f"{s}@{t}" for s, t in value)
    if name in ("broker_faults", "byzantine_clients"):
        return ", ".join(f"{i}:{s}" for i, s in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _parse_value(name: str, text: str, kind):
    text = text.strip()
    if name == "crashes":
        out = []
        for item in filter(None, (p.strip() for p in text.split(","))):
            s, _, t = item.partition("@")
            out.append((int(s), float(t)))
        return tuple(out)
    if name in ("broker_faults", "byzantine_clients"):
        out = []
        for item in filter(None, (p.strip() for p in text.split(","))):
            i, _, s = item.partition(":")
            out.append((int(i), s.strip()))
        return tuple(out)
    if kind is bool:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: not a boolean: {text!r}")
    return kind(text)


_KINDS = {"int": int, "float": float, "str": str, "bool": bool, "tuple": tuple}


def parse_scenario(text: str, base: Scenario | None = None) -> Scenario:
    types = {fl.name: _KINDS[fl.type] for fl in fields(Scenario)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ValueError(f"line {lineno}: expected key = value")
        if key not in types:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _parse_value(key, value, types[key])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return dataclasses.replace(base or Scenario(), **values)


def load_scenario(path, base: Scenario | None = None) -> Scenario:
    return parse_scenario(Path(path).read_text(), base)
