"""Compare closed-form mini-batch times with the simulator over a random grid.

Prints one line per schedule kind with the mismatch count, split by whether
2*SR exceeds F+B, and the worst relative gap. Usage:

    python3 scripts/sweep_formula_gap.py [--cases 2000] [--seed 20240611] [--csv out.csv]
"""

import argparse
import csv
import random
import sys
from collections import Counter
from fractions import Fraction

from pipeplan.cost_models import minibatch_time
from pipeplan.plan import PartitionPlan
from pipeplan.profiles import synth_chain_cluster, synth_uniform_network
from pipeplan.schedule import ScheduleKind
from pipeplan.simulator import simulate


def instance(kind, M, N, F, B, SR):
    net = synth_uniform_network(N, F, B, 0, SR)
    cluster = synth_chain_cluster(N, kind.mode, bandwidth=1)
    return net, cluster, PartitionPlan.from_cuts(list(range(1, N)), N, cluster)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cases", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=20240611)
    ap.add_argument("--csv", help="write every case to this file")
    args = ap.parse_args(argv)

    rng = random.Random(args.seed)
    cases = [(rng.randint(1, 16), rng.randint(1, 8), rng.randint(1, 50), rng.randint(1, 50),
              rng.randint(0, 10)) for _ in range(args.cases)]
    rows = []
    mism, wide = Counter(), Counter()
    worst = {k: Fraction(0) for k in ScheduleKind}
    for M, N, F, B, SR in cases:
        for kind in ScheduleKind:
            net, cluster, plan = instance(kind, M, N, F, B, SR)
            sim = simulate(kind, plan, net, cluster, M).makespan
            want = minibatch_time(kind, M, N, F, B, SR)
            rows.append((kind.value, M, N, F, B, SR, sim, want))
            if sim != want:
                mism[kind] += 1
                wide[kind] += 2 * SR > F + B
                worst[kind] = max(worst[kind], Fraction(abs(sim - want), want))
    for kind in ScheduleKind:
        print(f"{kind.value:9} mismatches {mism[kind]:4d}/{len(cases)} "
              f"(with 2SR>F+B: {wide[kind]}) worst rel gap {float(worst[kind]):.4f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "M", "N", "F", "B", "SR", "simulated_us", "formula_us"])
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
