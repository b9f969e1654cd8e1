"""Command line: ``chopchop run | bench | apps``.

``run`` writes ``metrics.csv``, ``batches.jsonl`` (one record per finalized
batch), ``trace-digest.txt`` and ``scenario.txt`` into ``--out``.  When an
invariant breaks it also writes ``events.log`` and exits with status 1.
"""
from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from pathlib import Path

from .apps import APPS, Auction, make_app
from .oracles import InvariantViolation
from .scenario import Scenario, load_scenario
from .sim import Simulation

_RUN_FLAGS = {
    "servers": "n_servers",
    "faulty": "f",
    "brokers": "n_brokers",
    "clients": "n_clients",
    "batch_size": "batch_size",
    "message_size": "message_size",
    "straggler_frac": "straggler_frac",
    "loss": "loss",
    "seed": "seed",
    "duration": "duration",
}


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chopchop", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scenario")
    r.add_argument("--scenario", type=Path, help="key = value scenario file; flags override it")
    r.add_argument("--servers", type=int)
    r.add_argument("--faulty", type=int, help="tolerated server faults f")
    r.add_argument("--brokers", type=int)
    r.add_argument("--clients", type=int)
    r.add_argument("--batch-size", type=int)
    r.add_argument("--message-size", type=int)
    r.add_argument("--straggler-frac", type=float)
    r.add_argument("--loss", type=float)
    r.add_argument("--seed", type=int)
    r.add_argument("--duration", type=float)
    r.add_argument("--out", type=Path, default=Path("results"))

    b = sub.add_parser("bench", help="time batch verification")
    b.add_argument("--batch-size", type=_ints, default=(1024, 4096, 16384, 65536),
                   help="comma separated batch sizes")
    b.add_argument("--straggler-frac", type=_floats, default=(0.0, 0.1, 0.5, 1.0),
                   help="comma separated straggler fractions")
    b.add_argument("--crypto", choices=("real", "mock"), default="real")
    b.add_argument("--repeats", type=int, default=1)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", type=Path, default=Path("results"))

    a = sub.add_parser("apps", help="drive an application with random operations")
    a.add_argument("app", choices=sorted(APPS))
    a.add_argument("--clients", type=int, default=1024)
    a.add_argument("--ops", type=int, default=100_000)
    a.add_argument("--seed", type=int, default=0)
    return p


def scenario_from_args(args) -> Scenario:
    base = load_scenario(args.scenario) if args.scenario else Scenario()
    changes = {field: getattr(args, flag) for flag, field in _RUN_FLAGS.items() if getattr(args, flag) is not None}
    return base.with_(**changes)


def cmd_run(args) -> int:
    sc = scenario_from_args(args)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    (out / "scenario.txt").write_text(sc.to_text())
    sim = Simulation(sc)
    try:
        result = sim.run()
    except InvariantViolation as exc:
        with (out / "events.log").open("w") as fh:
            fh.write(f"{exc}\n")
            for ev in exc.events:
                fh.write(f"{ev}\n")
        print(f"invariant violated: {exc}", file=sys.stderr)
        return 1
    result.metrics.write_csv(out / "metrics.csv")
    with (out / "batches.jsonl").open("w") as fh:
        for rec in sim.batches:
            fh.write(json.dumps({k: (v.hex() if isinstance(v, bytes) else v) for k, v in rec.items()}) + "\n")
    (out / "trace-digest.txt").write_text(result.trace_digest + "\n")
    print(result.metrics.to_json())
    return 0


def cmd_bench(args) -> int:
    from .bench import bench_verify

    args.out.mkdir(parents=True, exist_ok=True)
    rows = bench_verify(args.batch_size, args.straggler_frac, crypto=args.crypto, seed=args.seed,
                        repeats=args.repeats, out=args.out / "bench.csv")
    for row in rows:
        print(f"{row['batch_size']:>6} phi={row['straggler_frac']:<4} {row['seconds']:.4f}s "
              f"x{row['relative_to_distilled']:.1f}")
    return 0


def cmd_apps(args) -> int:
    rng = random.Random(args.seed)
    app = make_app(args.app, args.clients)
    start_total = getattr(app, "total", None)
    for _ in range(args.ops):
        x = rng.randrange(args.clients)
        app.apply(x, app.random_message(rng, x))
        if isinstance(app, Auction) and not app.invariant_holds():
            print("auction invariant broken", file=sys.stderr)
            return 1
    summary = {"app": args.app, "ops": args.ops, "digest": app.digest().hex()}
    if start_total is not None:
        summary["total_before"] = start_total
        summary["total_after"] = app.total
    print(json.dumps(summary))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    return {"run": cmd_run, "bench": cmd_bench, "apps": cmd_apps}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
