"""Seeded random scenario sweeps for the safety and validity checks."""
from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from .faults import BROKER_STRATEGIES, CLIENT_STRATEGIES
from .oracles import InvariantViolation
from .scenario import Scenario
from .sim import run

SIZES = ((4, 1), (7, 2))
LOSSES = (0.0, 0.05, 0.2)
STRAGGLING = (0.0, 0.25, 0.5, 1.0)
APPS = ("payments", "auction", "pixelwar")


def random_scenario(seed: int, adversarial: bool = True, duration: float = 300.0) -> Scenario:
    """One scenario drawn from ``seed``.

    Broker 0 is always correct.  With ``adversarial`` the other brokers draw
    Byzantine strategies, up to two clients misbehave and the ordering layer
    may replay submissions.
    """
    rng = random.Random(seed)
    n, f = rng.choice(SIZES)
    brokers = rng.randint(2, 4) if adversarial else rng.randint(1, 3)
    clients = rng.randint(8, 40) if adversarial else rng.randint(8, 64)
    broker_faults: tuple = ()
    byzantine: tuple = ()
    if adversarial:
        names = sorted(BROKER_STRATEGIES)
        broker_faults = tuple((b, rng.choice(names)) for b in range(1, brokers) if rng.random() < 0.7)
        byzantine = tuple((c, rng.choice(CLIENT_STRATEGIES)) for c in rng.sample(range(clients), rng.randint(0, 2)))
    crashes = tuple((s, rng.uniform(0, 3)) for s in rng.sample(range(n), rng.randint(0, f)))
    return Scenario(
        n_servers=n, f=f, n_brokers=brokers, n_clients=clients,
        batch_size=rng.choice((4, 16, 64)),
        messages_per_client=rng.randint(1, 4),
        loss=rng.choice(LOSSES),
        straggler_frac=rng.choice(STRAGGLING),
        crashes=crashes,
        broker_faults=broker_faults,
        byzantine_clients=byzantine,
        adversarial_ordering=adversarial and rng.random() < 0.3,
        app=rng.choice(APPS) if adversarial else "payments",
        seed=seed,
        duration=duration,
    )


@dataclass
class SweepReport:
    runs: int = 0
    violations: list = field(default_factory=list)
    incomplete: list = field(default_factory=list)
    sizes: Counter = field(default_factory=Counter)
    strategies: Counter = field(default_factory=Counter)
    crashes: Counter = field(default_factory=Counter)
    losses: Counter = field(default_factory=Counter)
    straggling: Counter = field(default_factory=Counter)
    checks: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations


def sweep(seeds, adversarial: bool = True, duration: float = 300.0, progress: Optional[callable] = None
          ) -> SweepReport:
    """Run one scenario per seed and collect oracle verdicts."""
    report = SweepReport()
    for seed in seeds:
        sc = random_scenario(seed, adversarial, duration)
        report.runs += 1
        report.sizes[(sc.n_servers, sc.f)] += 1
        report.strategies.update(s for _, s in sc.broker_faults)
        report.strategies.update(s for _, s in sc.byzantine_clients)
        report.crashes[len(sc.crashes)] += 1
        report.losses[sc.loss] += 1
        report.straggling[sc.straggler_frac] += 1
        try:
            result = run(sc)
        except InvariantViolation as exc:
            report.violations.append((seed, exc.property, exc.detail))
            continue
        report.checks += result.sim.oracle.checks
        m = result.metrics
        if m.completed != m.intents:
            report.incomplete.append((seed, m.completed, m.intents))
        if progress is not None:
            progress(seed, sc, m)
    return report
