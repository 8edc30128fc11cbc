#!/usr/bin/env python3
"""Compare the pure-Python and compiled Max-SAT kernels on random instances.

Both kernels run the same branch and bound, so they must agree on every
status, cost, and node count; this script checks that while timing them.

    python benchmarks/solver_bench.py --n 25 --vars 22 --seed 0
"""

from __future__ import annotations

import argparse
import random
import statistics
import sys
import time

from rfplan.maxsat import available_backends, solve
from rfplan.maxsat.model import WcnfInstance


def random_instance(rng: random.Random, nv: int) -> WcnfInstance:
    # lightly constrained, heavily weighted: most of the work is optimization
    hard = []
    soft = []
    for _ in range(int(nv * 0.8)):
        width = rng.randint(2, 3)
        clause = [rng.choice([-1, 1]) * v for v in rng.sample(range(1, nv + 1), width)]
        hard.append(clause)
    for _ in range(int(nv * 3.0)):
        width = rng.randint(1, 2)
        clause = [rng.choice([-1, 1]) * v for v in rng.sample(range(1, nv + 1), width)]
        soft.append((rng.randint(1, 50), clause))
    return WcnfInstance.build(nv, hard, soft)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=25, help="instances per run")
    ap.add_argument("--vars", type=int, default=22, help="variables per instance")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = available_backends()
    if "compiled" not in backends:
        print("compiled kernel not built; only timing the pure kernel", file=sys.stderr)

    rng = random.Random(args.seed)
    instances = [random_instance(rng, args.vars) for _ in range(args.n)]

    times: dict[str, list[float]] = {b: [] for b in backends}
    for i, inst in enumerate(instances):
        results = {}
        for b in backends:
            t0 = time.perf_counter()
            results[b] = solve(inst, backend=b)
            times[b].append(time.perf_counter() - t0)
        if len(results) == 2:
            rp, rc = results["pure"], results["compiled"]
            same = (
                rp.status == rc.status
                and rp.cost == rc.cost
                and rp.assignment == rc.assignment
                and rp.nodes == rc.nodes
            )
            if not same:
                print(f"instance {i}: kernels disagree: "
                      f"pure=({rp.status},{rp.cost},{rp.nodes}) "
                      f"compiled=({rc.status},{rc.cost},{rc.nodes})")
                return 1

    print(f"{args.n} instances, {args.vars} variables each, all kernels agree")
    for b in backends:
        total = sum(times[b])
        print(f"  {b:<9} total {total:8.3f}s   median {statistics.median(times[b]):.4f}s")
    if len(backends) == 2:
        ratio = sum(times["pure"]) / max(sum(times["compiled"]), 1e-12)
        print(f"  speedup  {ratio:.1f}x (pure / compiled)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
