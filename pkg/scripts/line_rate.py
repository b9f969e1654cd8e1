"""Server ingress bytes per delivered payload byte in a no-fault distilled run."""
import argparse
import time

from chopchop.harness import Scenario, run


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--clients", type=int, default=65_536)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    t0 = time.perf_counter()
    m = run(Scenario(n_clients=args.clients, batch_size=args.clients, seed=args.seed, collection_timeout=1.0,
                     reduction_timeout=1.0, client_timeout=30.0)).metrics
    print(f"delivered {m.delivered} in {m.batches} batches, distillation {m.distillation_ratio:.3f}")
    print(f"ingress per message {m.ingress_bytes_per_message:.2f} B, line-rate ratio {m.line_rate_ratio:.4f}")
    print(f"{time.perf_counter() - t0:.0f}s")


if __name__ == "__main__":
    main()
