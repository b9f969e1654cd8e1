"""Server-side verification benchmark: distilled batches versus stragglers.

Fixtures are built outside the timed region.  The aggregate multi-signature is
produced by signing once with the sum of the signers' secrets, which yields the
same group element as aggregating every individual multi-signature.
"""
from __future__ import annotations

import csv
import random
import time
from dataclasses import dataclass
from pathlib import Path

from ..batch import ZERO_SIGNATURE, DistilledBatch, Straggler, entry_bytes, verify_batch
from ..crypto import Scheme, get_scheme
from ..directory import Directory
from ..merkle import MerkleTree


@dataclass
class Fixture:
    scheme: Scheme
    directory: Directory
    keys: list
    multi_keys: list

    @property
    def size(self) -> int:
        return len(self.keys)


def make_fixture(size: int, crypto: str = "real", seed: int = 0) -> Fixture:
    """Directory of ``size`` clients with deterministic keys."""
    scheme = get_scheme(crypto)
    directory = Directory(scheme)
    keys, multi_keys = [], []
    for x in range(size):
        s = seed.to_bytes(8, "little") + x.to_bytes(4, "little")
        k = scheme.keygen(s)
        mk = scheme.multi_keygen(s)
        keys.append(k)
        multi_keys.append(mk)
        directory.add_trusted(k.public, mk.public, None)
    return Fixture(scheme, directory, keys, multi_keys)


def build_batch(fx: Fixture, count: int, straggler_frac: float, rng: random.Random,
                msg_size: int = 8, k: int = 0) -> DistilledBatch:
    """A well-formed batch over clients 0..count-1 with round(phi*count) stragglers."""
    scheme = fx.scheme
    ids = tuple(range(count))
    messages = tuple(rng.randbytes(msg_size) for _ in ids)
    n_lag = round(straggler_frac * count)
    lagging = sorted(rng.sample(range(count), n_lag))
    lag_set = set(lagging)
    stragglers = tuple(
        Straggler(i, k, scheme.sign(fx.keys[i].secret, entry_bytes(i, k, messages[i]))) for i in lagging
    )
    signers = [i for i in ids if i not in lag_set]
    if signers:
        root = MerkleTree([entry_bytes(x, k, m) for x, m in zip(ids, messages)]).root
        secret = scheme.aggregate_secrets(fx.multi_keys[i].secret for i in signers)
        signature = scheme.encode_multi_signature(scheme.multi_sign(secret, root))
    else:
        signature = ZERO_SIGNATURE
    return DistilledBatch(k, msg_size, fx.directory.id_width, ids, messages, signature, stragglers,
                          no_aggregate=not signers)


def time_verify(fx: Fixture, batch: DistilledBatch, repeats: int = 1) -> float:
    """Best wall-clock seconds of ``verify_batch`` over ``repeats`` runs."""
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        report = verify_batch(fx.scheme, batch, fx.directory)
        best = min(best, time.perf_counter() - t0)
        if not report.ok:
            raise RuntimeError(f"benchmark batch rejected: {report.reason}")
    return best


def bench_verify(batch_sizes=(1024, 4096, 16384, 65536), straggler_fracs=(0.0, 0.1, 0.5, 1.0),
                 crypto: str = "real", seed: int = 0, repeats: int = 1, out=None) -> list[dict]:
    """Verification time per (batch size, straggler fraction); optionally written as CSV."""
    rng = random.Random(seed)
    fx = make_fixture(max(batch_sizes), crypto, seed)
    rows = []
    for count in batch_sizes:
        baseline = None
        for phi in straggler_fracs:
            b = build_batch(fx, count, phi, rng)
            secs = time_verify(fx, b, repeats)
            if phi == 0.0:
                baseline = secs
            rows.append({
                "batch_size": count,
                "straggler_frac": phi,
                "seconds": secs,
                "messages_per_second": count / secs,
                "wire_bytes": b.size,
                "relative_to_distilled": secs / baseline if baseline else float("nan"),
            })
    if out is not None:
        with Path(out).open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return rows
