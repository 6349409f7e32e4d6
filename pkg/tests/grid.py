"""Shared instance generators for the property and acceptance tests."""

import random

from pipeplan.profiles import synth_chain_cluster, synth_uniform_network
from pipeplan.plan import PartitionPlan

GRID_SEED = 20240611
GRID_CASES = 2000


def balanced_instance(kind, M, N, F, B, SR, w=0):
    """N one-layer stages with cost F/B; each cut carries SR bytes over a 1 B/us link."""
    net = synth_uniform_network(N, F, B, w, SR)
    cluster = synth_chain_cluster(N, kind.mode, bandwidth=1)
    plan = PartitionPlan.from_cuts(list(range(1, N)), N, cluster)
    return net, cluster, plan


def grid(n=GRID_CASES, seed=GRID_SEED):
    """Random (M, N, F, B, SR) tuples from the acceptance grid."""
    rng = random.Random(seed)
    return [(rng.randint(1, 16), rng.randint(1, 8), rng.randint(1, 50), rng.randint(1, 50),
             rng.randint(0, 10)) for _ in range(n)]
