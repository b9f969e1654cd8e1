"""Encoded size of a fully distilled batch against the classic per-message cost."""
import argparse
import random

from chopchop.batch import HEADER_SIZE, DistilledBatch, encode

CLASSIC_PER_MESSAGE = 112


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--count", type=int, default=65_536)
    p.add_argument("--id-width", type=int, default=28)
    p.add_argument("--message-size", type=int, default=8)
    args = p.parse_args()
    rng = random.Random(0)
    b = DistilledBatch(0, args.message_size, args.id_width, tuple(range(args.count)),
                       tuple(rng.randbytes(args.message_size) for _ in range(args.count)), rng.randbytes(192), ())
    size = len(encode(b))
    print(f"entries          {args.count}")
    print(f"header           {HEADER_SIZE} B")
    print(f"total            {size} B ({size / 1024:.1f} KiB)")
    print(f"per message      {size / args.count:.3f} B (classic {CLASSIC_PER_MESSAGE} B)")


if __name__ == "__main__":
    main()
