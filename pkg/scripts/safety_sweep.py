"""Seeded random scenarios under the safety oracles (adversarial by default)."""
import argparse
import time

from chopchop.harness.sweep import sweep


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--runs", type=int, default=1000)
    p.add_argument("--first-seed", type=int, default=0)
    p.add_argument("--no-adversary", action="store_true", help="validity sweep without Byzantine parties")
    p.add_argument("--verbose", action="store_true")
    args = p.parse_args()

    def progress(seed, sc, m):
        if args.verbose:
            print(f"seed {seed}: n={sc.n_servers} brokers={sc.n_brokers} faults={sc.broker_faults} "
                  f"{m.completed}/{m.intents} delivered in {m.batches} batches")

    t0 = time.perf_counter()
    rep = sweep(range(args.first_seed, args.first_seed + args.runs), adversarial=not args.no_adversary,
                duration=600.0 if args.no_adversary else 300.0, progress=progress)
    print(f"runs {rep.runs}  violations {len(rep.violations)}  incomplete {len(rep.incomplete)}  "
          f"checks {rep.checks}  {time.perf_counter() - t0:.0f}s")
    print(f"sizes {dict(rep.sizes)}")
    print(f"strategies {dict(rep.strategies)}")
    for v in rep.violations:
        print("VIOLATION", *v)
    return 1 if rep.violations else 0


if __name__ == "__main__":
    raise SystemExit(main())
