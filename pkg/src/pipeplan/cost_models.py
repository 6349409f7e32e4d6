"""Closed-form mini-batch time, bubble, memory and bandwidth models for the
four schedules, plus a per-plan estimate built on them.

The closed forms assume every stage has the same FP time ``F``, BP time
``B`` and send/receive time ``SR``. ``estimate`` applies them to real plans
by taking the per-stage maxima, which makes the result an upper bound on the
simulated makespan whenever the schedule hides its communication. All
results are exact ``int`` or ``Fraction`` values.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import IncompatibleSchedule
from .plan import ceil_div, cut_activations, stage_loads, validate_plan
from .schedule import ExecutionMode, ScheduleKind

__all__ = [
    "ScheduleKind", "StageCost", "CostEstimate", "minibatch_time", "bubble_fraction",
    "bubble_time", "features_memory", "weights_memory", "bandwidth_demand", "stage_costs",
    "estimate", "check_mode",
]


def _ceil_frac(num, den):
    return -(-num // den)


def bubble_time(kind, M, N, F, B, SR=0):
    """Idle time in the mini-batch, i.e. ``minibatch_time - M*(F+B)``."""
    if kind.is_async:
        return (N - 1) * (F + B)
    if kind is ScheduleKind.ONE_F_ONE_B_SNO:
        return (N - 1) * (F + B + 2 * SR) + (M - 1 - _ceil_frac(M - 1, N)) * 2 * SR
    return (N - 1) * (F + B + 2 * SR)


def minibatch_time(kind, M, N, F, B, SR=0):
    """Mini-batch time in microseconds. ``SR`` is ignored by the async schedules."""
    base = (M + N - 1) * (F + B)
    if kind.is_async:
        return base
    if kind is ScheduleKind.ONE_F_ONE_B_SNO:
        return base + (N + M - 2 - _ceil_frac(M - 1, N)) * 2 * SR
    return base + (N - 1) * 2 * SR


def bubble_fraction(kind, M, N, F, B, SR=0):
    if kind.is_async:
        return Fraction(N - 1, M + N - 1)
    total = minibatch_time(kind, M, N, F, B, SR)
    if total == 0:
        return Fraction(0)
    return Fraction(bubble_time(kind, M, N, F, B, SR), total)


def features_memory(kind, N, i, a, M=None):
    """Activation bytes stashed on stage ``i`` (1-based).

    Each downstream stage keeps one micro-batch in flight (two for FBP-AS and
    1F1B-SO). With ``M`` given the count is capped at the number of
    micro-batches that exist.
    """
    if not 1 <= i <= N:
        raise ValueError(f"stage index {i} outside [1, {N}]")
    depth = kind.buffer_multiplier * (N - i + 1)
    if M is not None:
        depth = min(depth, M)
    return depth * a


def weights_memory(w):
    return 2 * w


def bandwidth_demand(kind, a, F, B):
    """Minimum link bandwidth (bytes/us) to hide a transfer of ``a`` bytes."""
    if kind is ScheduleKind.FBP_AS:
        return Fraction(2 * a) / (F + B)
    return Fraction(a) / F


def check_mode(kind, cluster):
    if kind.mode is not cluster.execution_mode:
        raise IncompatibleSchedule(
            f"{kind.value} needs an {kind.mode.value} cluster but the cluster executes "
            f"{cluster.execution_mode.value}")


@dataclass(frozen=True)
class StageCost:
    """Integer costs of one stage for a micro-batch of a given size.

    ``a`` is the activation crossing the stage's input cut (0 for stage 1)
    and ``SR`` the matching transfer time. ``act`` is what the stage stashes
    per micro-batch for its backward pass and ``w`` its weight bytes.
    """

    F: int
    B: int
    a: int
    w: int
    SR: int
    act: int


def stage_costs(plan, net, cluster, micro_batch_size=1):
    """Round each stage's fractional load up to whole microseconds and bytes."""
    mu = micro_batch_size
    loads = stage_loads(plan, net, cluster)
    cuts = cut_activations(plan, net)
    costs = []
    for n, load in enumerate(loads):
        if n == 0:
            a, sr = 0, 0
        else:
            a = cuts[n - 1] * mu
            sr = ceil_div(a, cluster.links[n - 1]) if a else 0
        costs.append(StageCost(
            F=math.ceil(load.fp * mu),
            B=math.ceil(load.bp * mu),
            a=a,
            w=math.ceil(load.weight),
            SR=sr,
            act=math.ceil(load.activation * mu),
        ))
    return costs


def link_transfer_times(plan, net, cluster, micro_batch_size=1):
    return [ceil_div(a * micro_batch_size, bw) if a else 0
            for a, bw in zip(cut_activations(plan, net), cluster.links)]


@dataclass(frozen=True)
class CostEstimate:
    schedule: ScheduleKind
    M: int
    N: int
    micro_batch_size: int
    minibatch_time: int
    bubble_fraction: Fraction
    features_mem: tuple
    weights_mem: tuple
    bandwidth_demand: tuple
    link_capacity: tuple
    memory_feasible: tuple
    heuristic: bool
    stage_costs: tuple

    @property
    def stage_memory(self):
        return tuple(f + w for f, w in zip(self.features_mem, self.weights_mem))

    @property
    def peak_memory(self):
        return max(self.stage_memory)

    @property
    def feasible(self):
        return all(self.memory_feasible)

    @property
    def max_bandwidth_demand(self):
        return max(self.bandwidth_demand, default=Fraction(0))

    @property
    def bandwidth_ok(self):
        return all(d <= c for d, c in zip(self.bandwidth_demand, self.link_capacity))


def estimate(kind, plan, net, cluster, M, micro_batch_size=1):
    """Apply the balanced closed forms to ``plan`` using per-stage maxima."""
    check_mode(kind, cluster)
    validate_plan(plan, net.L, cluster)
    N = plan.N
    costs = stage_costs(plan, net, cluster, micro_batch_size)
    F = max(c.F for c in costs)
    B = max(c.B for c in costs)
    SR = max(c.SR for c in costs)
    features = tuple(features_memory(kind, N, i + 1, c.act, M) for i, c in enumerate(costs))
    weights = tuple(weights_memory(c.w) for c in costs)
    capacity = [acc.mem_capacity_bytes for acc in cluster.accelerators]
    feasible = tuple(f + w <= cap for f, w, cap in zip(features, weights, capacity))
    demand = []
    for k in range(N - 1):
        a = costs[k + 1].a
        # forward activations are produced by stage k, backward errors by stage k+1
        demand.append(max(_demand_or_zero(kind, a, costs[k]),
                          _demand_or_zero(kind, a, costs[k + 1])))
    balanced = (len({c.F for c in costs}) == 1 and len({c.B for c in costs}) == 1
                and len({c.SR for c in costs[1:]}) <= 1)
    hides_comm = SR <= min(F, B)
    heuristic = (not balanced
                 or (kind.mode is ExecutionMode.SYNC and M < N)
                 or (kind is not ScheduleKind.ONE_F_ONE_B_SNO and not hides_comm))
    return CostEstimate(
        schedule=kind,
        M=M,
        N=N,
        micro_batch_size=micro_batch_size,
        minibatch_time=minibatch_time(kind, M, N, F, B, SR),
        bubble_fraction=bubble_fraction(kind, M, N, F, B, SR),
        features_mem=features,
        weights_mem=weights,
        bandwidth_demand=tuple(demand),
        link_capacity=tuple(cluster.links),
        memory_feasible=feasible,
        heuristic=heuristic,
        stage_costs=tuple(costs),
    )


def _demand_or_zero(kind, a, cost):
    if a == 0:
        return Fraction(0)
    if cost.F + cost.B == 0 or cost.F == 0:
        return Fraction(a)
    return bandwidth_demand(kind, a, cost.F, cost.B)
