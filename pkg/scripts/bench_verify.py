"""Batch verification time per batch size and straggler fraction (CSV to --out)."""
import argparse
from pathlib import Path

from chopchop.harness.bench import bench_verify


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--batch-size", default="1024,4096,16384,65536")
    p.add_argument("--straggler-frac", default="0,0.1,0.5,1")
    p.add_argument("--crypto", choices=("real", "mock"), default="real")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path("results/bench.csv"))
    args = p.parse_args()
    args.out.parent.mkdir(parents=True, exist_ok=True)
    rows = bench_verify(tuple(int(v) for v in args.batch_size.split(",")),
                        tuple(float(v) for v in args.straggler_frac.split(",")),
                        crypto=args.crypto, repeats=args.repeats, out=args.out)
    for r in rows:
        print(f"{r['batch_size']:>6}  phi={r['straggler_frac']:<4}  {r['seconds']:.4f}s  "
              f"{r['messages_per_second']:>12.0f} msg/s  x{r['relative_to_distilled']:.1f}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
