"""Load-balanced contiguous partitioning of a network over a chain.

The flow is: whole-layer min-max partition, a communication check, optional
coarsening around cheap cut points, fractional refinement of the boundary
layers, and finally a memory fine-tune that moves layers off stages that do
not fit.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .cost_models import features_memory, stage_costs, weights_memory
from .errors import Infeasible, InfeasibleShape
from .plan import (LayerPrefix, PartitionPlan, StageAssignment, cut_activation, stage_loads,
                   validate_plan)

MAX_DENOMINATOR = 1024
GRID = Fraction(1, MAX_DENOMINATOR)
INF = float("inf")


def ideal_stage_time(T_n):
    """Per-stage time of a perfectly balanced heterogeneous pipeline.

    ``T_n`` is the whole-network FP+BP time on accelerator ``n``; stage ``n``
    then gets the share of the work it can finish in time ``1/sum(1/T_n)``.
    """
    if not T_n:
        raise ValueError("need at least one accelerator")
    if any(t < 1 for t in T_n):
        raise ValueError("every T_n must be >= 1")
    return 1 / sum(Fraction(1, 1) / Fraction(t) for t in T_n)


# --------------------------------------------------------------------------
# coarse networks

@dataclass(frozen=True)
class Block:
    lo: int
    hi: int
    fp_time: dict
    bp_time: dict
    weight_bytes: int
    out_activation_bytes: int
    activation_sum: int

    def time_on(self, accel_type):
        return self.fp_time[accel_type] + self.bp_time[accel_type]


@dataclass(frozen=True)
class CoarseNetwork:
    blocks: tuple
    cut_threshold: int
    name: str = "coarse"

    @property
    def L(self):
        return self.blocks[-1].hi if self.blocks else 0

    @property
    def cut_positions(self):
        """Whole-layer positions where a stage boundary may go."""
        return tuple(b.hi for b in self.blocks[:-1])


def coarsen_by_comm(net, a_th):
    """Merge layers so that cuts only fall after layers emitting ``<= a_th`` bytes."""
    if a_th < 0:
        raise ValueError("a_th must be >= 0")
    types = net.accel_types
    blocks = []
    lo = 1
    for idx, layer in enumerate(net.layers, start=1):
        if idx == net.L or layer.out_activation_bytes <= a_th:
            members = net.layers[lo - 1:idx]
            blocks.append(Block(
                lo=lo,
                hi=idx,
                fp_time={t: sum(m.fp_time[t] for m in members) for t in types},
                bp_time={t: sum(m.bp_time[t] for m in members) for t in types},
                weight_bytes=sum(m.weight_bytes for m in members),
                out_activation_bytes=members[-1].out_activation_bytes,
                activation_sum=sum(m.out_activation_bytes for m in members),
            ))
            lo = idx + 1
    return CoarseNetwork(blocks=tuple(blocks), cut_threshold=a_th, name=net.name)


def _units(net):
    """``(hi, time-by-type, weight, activation)`` per partitionable unit."""
    if isinstance(net, CoarseNetwork):
        return [(b.hi, {t: b.time_on(t) for t in b.fp_time}, b.weight_bytes, b.activation_sum)
                for b in net.blocks]
    return [(i, {t: l.time_on(t) for t in l.fp_time}, l.weight_bytes, l.out_activation_bytes)
            for i, l in enumerate(net.layers, start=1)]


# --------------------------------------------------------------------------
# whole-layer min-max partition

def _prefix_ints(values):
    out = [0]
    for v in values:
        out.append(out[-1] + v)
    return out


class _UnitCosts:
    """Prefix sums of unit time per stage and of weights/activations."""

    def __init__(self, units, cluster):
        self.U = len(units)
        self.N = cluster.N
        by_type = {}
        self.time = []
        for acc in cluster.accelerators:
            t = acc.accel_type
            if t not in by_type:
                by_type[t] = _prefix_ints(u[1][t] for u in units)
            self.time.append(by_type[t])
        self.w = _prefix_ints(u[2] for u in units)
        self.a = _prefix_ints(u[3] for u in units)

    def stage_time(self, n, i, j):
        """Time of units ``i+1..j`` on stage ``n`` (0-based)."""
        return self.time[n][j] - self.time[n][i]

    def stage_memory(self, n, i, j):
        # footprint used for tie-breaking: weights plus one stashed activation per stage in flight
        return 2 * (self.w[j] - self.w[i]) + (self.N - n) * (self.a[j] - self.a[i])


def _minmax_dp(costs, ok=None):
    """Smallest achievable max stage time; ``ok(n, i, j)`` filters stages."""
    U, N = costs.U, costs.N
    best = [[INF] * (U + 1) for _ in range(N + 1)]
    best[0][0] = 0
    for n in range(1, N + 1):
        # stage n-1 (0-based) takes units i+1..j; leave room for the stages after it
        for j in range(n, U - (N - n) + 1):
            cur = INF
            for i in range(n - 1, j):
                prev = best[n - 1][i]
                if prev == INF:
                    continue
                if ok is not None and not ok(n - 1, i, j):
                    continue
                t = max(prev, costs.stage_time(n - 1, i, j))
                if t < cur:
                    cur = t
            best[n][j] = cur
    return best[N][U]


def _earliest_cuts(costs, ok):
    """Lexicographically earliest cut vector whose stages all pass ``ok``."""
    U, N = costs.U, costs.N
    # feas[n][i]: units i+1..U can be split over stages n..N-1
    feas = [[False] * (U + 1) for _ in range(N + 1)]
    feas[N][U] = True
    for n in range(N - 1, -1, -1):
        for i in range(n, U):
            feas[n][i] = any(feas[n + 1][j] and ok(n, i, j)
                             for j in range(i + 1, U - (N - n - 1) + 1))
    if not feas[0][0]:
        return None
    cuts = []
    i = 0
    for n in range(N - 1):
        for j in range(i + 1, U):
            if ok(n, i, j) and feas[n + 1][j]:
                cuts.append(j)
                i = j
                break
    return cuts


def _min_max_memory(costs, t_star):
    U, N = costs.U, costs.N
    best = [[INF] * (U + 1) for _ in range(N + 1)]
    best[0][0] = 0
    for n in range(1, N + 1):
        for j in range(n, U - (N - n) + 1):
            cur = INF
            for i in range(n - 1, j):
                prev = best[n - 1][i]
                if prev == INF or costs.stage_time(n - 1, i, j) > t_star:
                    continue
                cur = min(cur, max(prev, costs.stage_memory(n - 1, i, j)))
            best[n][j] = cur
    return best[N][U]


def inter_layer_partition(net, cluster):
    """Whole-layer plan minimizing the slowest stage's compute time.

    Ties go to the plan with the smallest peak footprint, then to the
    earliest cut positions. ``net`` may be a ``CoarseNetwork``, in which case
    boundaries only fall between its blocks.
    """
    units = _units(net)
    N = cluster.N
    if len(units) < N:
        raise InfeasibleShape(f"{len(units)} partitionable unit(s) for {N} accelerators")
    costs = _UnitCosts(units, cluster)
    t_star = _minmax_dp(costs)
    m_star = _min_max_memory(costs, t_star)

    def ok(n, i, j):
        return costs.stage_time(n, i, j) <= t_star and costs.stage_memory(n, i, j) <= m_star

    cuts = _earliest_cuts(costs, ok)
    positions = [units[j - 1][0] for j in cuts]
    return PartitionPlan.from_cuts(positions, net.L, cluster)


def stage_times(plan, net, cluster, micro_batch_size=1):
    """Exact FP+BP time of each stage for one micro-batch."""
    return [load.compute * micro_batch_size for load in stage_loads(plan, net, cluster)]


def max_stage_time(plan, net, cluster, micro_batch_size=1):
    return max(stage_times(plan, net, cluster, micro_batch_size))


# --------------------------------------------------------------------------
# communication check

@dataclass(frozen=True)
class CommReport:
    bottleneck: bool
    worst_link: object
    comm_times: tuple
    target: object


def detect_comm_bottleneck(plan, net, cluster, target=None, micro_batch_size=1):
    """Compare each cut's transfer time with ``target``.

    ``target`` defaults to the plan's slowest stage compute time. Links are
    numbered from 1; ``worst_link`` is ``None`` when the plan has no cuts.
    """
    if target is None:
        target = max(c.F + c.B for c in stage_costs(plan, net, cluster, micro_batch_size))
    times = []
    for p, bw in zip(plan.cuts(), cluster.links):
        a = cut_activation(net, p) * micro_batch_size
        times.append(math.ceil(Fraction(a) / bw) if a else 0)
    worst = None
    if times:
        worst = max(range(len(times)), key=lambda k: (times[k], -k)) + 1
    return CommReport(bottleneck=any(t > target for t in times), worst_link=worst,
                      comm_times=tuple(times), target=target)


# --------------------------------------------------------------------------
# intra-layer refinement

def _quantize(p):
    """Candidate grid points for ``p`` with denominator at most 1024."""
    if p.denominator <= MAX_DENOMINATOR:
        return [p]
    lo = Fraction(math.floor(p * MAX_DENOMINATOR), MAX_DENOMINATOR)
    return [lo, lo + GRID]


def _owner_layer(p):
    """Layer containing a fractional position, ``None`` for whole positions."""
    return None if p.denominator == 1 else math.ceil(p)


def intra_layer_refine(plan, net, cluster, target=None, max_rounds=64):
    """Split boundary layers fractionally between neighbours to even out stage times.

    Each boundary may only move within the two layers adjacent to its
    original whole-layer position, a move must not raise the activation that
    crosses the cut, and no layer ends up split three ways. The input plan is
    returned unchanged unless the slowest stage gets strictly faster.
    """
    N = plan.N
    if N == 1:
        return plan
    types = [acc.accel_type for acc in cluster.accelerators]
    prefix = {t: LayerPrefix(l.time_on(t) for l in net.layers) for t in set(types)}
    layer_time = {t: [l.time_on(t) for l in net.layers] for t in set(types)}
    bounds = plan.boundaries()
    original = list(bounds)
    # window each boundary may move in, and the activation it may not exceed
    windows = []
    for k in range(1, N):
        anchor = math.floor(original[k]) if original[k].denominator == 1 else round(original[k])
        windows.append((Fraction(max(anchor - 1, 0)), Fraction(min(anchor + 1, net.L)),
                        cut_activation(net, original[k])))

    def stime(n, b):
        return prefix[types[n]].between(b[n], b[n + 1])

    def valid(b, k):
        p = b[k]
        if not (b[k - 1] < p < b[k + 1]):
            return False
        layer = _owner_layer(p)
        if layer is not None:
            for other in (b[k - 1], b[k + 1]):
                if _owner_layer(other) == layer:
                    return False
        return True

    def best_position(b, k):
        lo_w, hi_w, a_max = windows[k - 1]
        lo_w = max(lo_w, b[k - 1])
        hi_w = min(hi_w, b[k + 1])
        left = types[k - 1]
        right = types[k]
        candidates = {b[k]}
        # whole positions inside the window
        for q in range(math.ceil(lo_w), math.floor(hi_w) + 1):
            candidates.add(Fraction(q))
        # equal-time point inside each layer of the window
        for layer in range(math.floor(lo_w) + 1, math.ceil(hi_w) + 1):
            seg_lo, seg_hi = Fraction(layer - 1), Fraction(layer)
            rate = layer_time[left][layer - 1] + layer_time[right][layer - 1]
            if rate == 0:
                continue
            trial = list(b)
            trial[k] = seg_lo
            gap = stime(k - 1, trial) - stime(k, trial)
            p = seg_lo - gap / rate
            if seg_lo < p < seg_hi:
                candidates.update(_quantize(p))
        scored = []
        for p in candidates:
            if not (lo_w <= p <= hi_w):
                continue
            trial = list(b)
            trial[k] = p
            if not valid(trial, k):
                continue
            if p != b[k] and cut_activation(net, p) > a_max:
                continue
            scored.append((max(stime(k - 1, trial), stime(k, trial)), abs(p - b[k]), p))
        scored.sort()
        return scored[0] if scored else None

    start_max = max(stime(n, bounds) for n in range(N))
    for _ in range(max_rounds):
        changed = False
        for k in list(range(1, N)) + list(range(N - 1, 0, -1)):
            current = max(stime(k - 1, bounds), stime(k, bounds))
            best = best_position(bounds, k)
            if best is not None and best[0] < current:
                bounds[k] = best[2]
                changed = True
        if not changed:
            break
    end_max = max(stime(n, bounds) for n in range(N))
    if end_max >= start_max:
        return plan
    refined = PartitionPlan.from_boundaries(bounds, cluster)
    validate_plan(refined, net.L, cluster)
    return refined


# --------------------------------------------------------------------------
# memory fine-tuning

def stage_memory(plan, net, cluster, kind, M, micro_batch_size=1):
    """Peak bytes each stage needs: stashed activations plus weights and their update."""
    costs = stage_costs(plan, net, cluster, micro_batch_size)
    return [features_memory(kind, plan.N, n + 1, c.act, M) + weights_memory(c.w)
            for n, c in enumerate(costs)]


def _excess(mem, cluster):
    return [m - acc.mem_capacity_bytes for m, acc in zip(mem, cluster.accelerators)]


def _collapse(plan, net, cluster):
    """Round fractional boundaries to whole layers, keeping every stage non-empty."""
    if plan.is_whole:
        return plan
    bounds = plan.boundaries()
    whole = [Fraction(0)]
    for k in range(1, plan.N):
        p = Fraction(round(bounds[k]))
        p = max(p, whole[-1] + 1)
        whole.append(p)
    whole.append(Fraction(net.L))
    for k in range(plan.N - 1, 0, -1):
        if whole[k] >= whole[k + 1]:
            whole[k] = whole[k + 1] - 1
    if any(whole[k] >= whole[k + 1] for k in range(plan.N)) or whole[0] != 0:
        return None
    return PartitionPlan.from_boundaries(whole, cluster)


def _memory_dp(net, cluster, kind, M, micro_batch_size, allowed_cuts=None):
    """Fastest whole-layer plan in which every stage fits, or ``None``."""
    N = cluster.N
    mu = micro_batch_size
    if allowed_cuts is None:
        positions = list(range(1, net.L + 1))
    else:
        positions = sorted(set(allowed_cuts) | {net.L})
    units = []
    prev = 0
    for hi in positions:
        members = net.layers[prev:hi]
        units.append((hi, {t: sum(m.time_on(t) for m in members) for t in net.accel_types},
                      sum(m.weight_bytes for m in members),
                      sum(m.out_activation_bytes for m in members)))
        prev = hi
    if len(units) < N:
        return None
    costs = _UnitCosts(units, cluster)

    def fits(n, i, j):
        act = (costs.a[j] - costs.a[i]) * mu
        w = costs.w[j] - costs.w[i]
        need = features_memory(kind, N, n + 1, act, M) + weights_memory(w)
        return need <= cluster.accelerators[n].mem_capacity_bytes

    t_star = _minmax_dp(costs, ok=fits)
    if t_star == INF:
        return None
    cuts = _earliest_cuts(costs, lambda n, i, j: fits(n, i, j)
                          and costs.stage_time(n, i, j) <= t_star)
    return PartitionPlan.from_cuts([units[j - 1][0] for j in cuts], net.L, cluster)


def memory_fine_tune(plan, net, cluster, kind, M, micro_batch_size=1, allowed_cuts=None,
                     max_steps=None):
    """Shift boundary layers off over-capacity stages until every stage fits.

    Each step moves one layer from the stage with the largest overflow to
    whichever neighbour has more headroom, provided the total overflow
    shrinks and no cut becomes a communication bottleneck. If the greedy walk
    gets stuck, an exact memory-constrained partition is used instead.
    Raises ``Infeasible("memory")`` when no contiguous plan fits.
    """
    mu = micro_batch_size
    excess = _excess(stage_memory(plan, net, cluster, kind, M, mu), cluster)
    if all(e <= 0 for e in excess):
        return plan
    allowed = None if allowed_cuts is None else set(allowed_cuts)
    current = _collapse(plan, net, cluster)
    if current is not None and allowed is not None:
        if any(p not in allowed for p in current.cuts()):
            current = None
    steps = max_steps if max_steps is not None else net.L * cluster.N
    seen = set()
    while current is not None and steps > 0:
        steps -= 1
        bounds = [int(p) for p in current.boundaries()]
        key = tuple(bounds)
        if key in seen:
            break
        seen.add(key)
        excess = _excess(stage_memory(current, net, cluster, kind, M, mu), cluster)
        total = sum(max(e, 0) for e in excess)
        if total == 0:
            return current
        n = max(range(cluster.N), key=lambda s: (excess[s], -s))
        moved = None
        for nb in sorted((x for x in (n - 1, n + 1) if 0 <= x < cluster.N),
                         key=lambda x: (excess[x], x)):
            trial = _shift(bounds, n, nb, allowed)
            if trial is None:
                continue
            cand = PartitionPlan.from_boundaries(trial, cluster)
            cand_excess = _excess(stage_memory(cand, net, cluster, kind, M, mu), cluster)
            if sum(max(e, 0) for e in cand_excess) >= total:
                continue
            if detect_comm_bottleneck(cand, net, cluster, micro_batch_size=mu).bottleneck and \
                    not detect_comm_bottleneck(current, net, cluster,
                                               micro_batch_size=mu).bottleneck:
                continue
            moved = cand
            break
        if moved is None:
            break
        current = moved
    fallback = _memory_dp(net, cluster, kind, M, mu, allowed_cuts)
    if fallback is None:
        raise Infeasible("memory", f"no contiguous {kind.value} plan with M={M} fits")
    return fallback


def _shift(bounds, n, nb, allowed):
    """Move one layer from stage ``n`` to neighbouring stage ``nb``."""
    trial = list(bounds)
    if nb == n - 1:
        k, step = n, 1
    else:
        k, step = n + 1, -1
    p = trial[k] + step
    # skip to the next allowed cut when coarse blocks are in force
    while allowed is not None and 0 < p < bounds[-1] and p not in allowed:
        p += step
    trial[k] = p
    if not (trial[k - 1] < trial[k] < trial[k + 1]):
        return None
    return trial


# --------------------------------------------------------------------------
# orchestration

@dataclass
class BalanceTrace:
    """What ``balance_partition`` did, for reports."""

    plan: PartitionPlan = None
    steps: list = field(default_factory=list)
    a_th: int = None
    comm: CommReport = None


def _single_stage(net, cluster):
    acc = cluster.accelerators[0]
    return PartitionPlan(stages=(StageAssignment(acc.id, 1, net.L),))


def balance_partition_trace(net, cluster, kind, M, micro_batch_size=1):
    mu = micro_batch_size
    trace = BalanceTrace()
    if cluster.N == 1:
        plan = _single_stage(net, cluster)
        trace.steps.append("single stage")
        need = stage_memory(plan, net, cluster, kind, M, mu)[0]
        if need > cluster.accelerators[0].mem_capacity_bytes:
            raise Infeasible("memory", "the whole network does not fit on one accelerator")
        trace.plan = plan
        return trace

    base = inter_layer_partition(net, cluster)
    trace.steps.append("inter-layer")
    report = detect_comm_bottleneck(base, net, cluster, micro_batch_size=mu)
    trace.comm = report
    if report.bottleneck:
        a_th = math.floor(min(cluster.links) * report.target / mu)
        coarse = coarsen_by_comm(net, a_th)
        if len(coarse.blocks) < cluster.N:
            # relax the threshold just enough to leave N blocks
            interior = sorted(l.out_activation_bytes for l in net.layers[:-1])
            a_th = interior[cluster.N - 2]
            coarse = coarsen_by_comm(net, a_th)
            trace.steps.append("threshold relaxed")
        trace.a_th = a_th
        plan = inter_layer_partition(coarse, cluster)
        trace.steps.append("coarsened")
        try:
            plan = memory_fine_tune(plan, net, cluster, kind, M, mu,
                                    allowed_cuts=coarse.cut_positions)
        except Infeasible:
            plan = memory_fine_tune(plan, net, cluster, kind, M, mu)
            trace.steps.append("coarse cuts dropped for memory")
        trace.plan = plan
        return trace

    plan = intra_layer_refine(base, net, cluster, report.target)
    if plan is not base:
        if detect_comm_bottleneck(plan, net, cluster, micro_batch_size=mu).bottleneck:
            plan = base
            trace.steps.append("intra-layer reverted")
        else:
            trace.steps.append("intra-layer")
    mem = stage_memory(plan, net, cluster, kind, M, mu)
    if any(e > 0 for e in _excess(mem, cluster)):
        plan = memory_fine_tune(plan, net, cluster, kind, M, mu)
        trace.steps.append("memory fine-tune")
    trace.plan = plan
    return trace


def balance_partition(net, cluster, kind, M, micro_batch_size=1):
    """Balanced plan for ``kind`` with ``M`` micro-batches of ``micro_batch_size`` samples."""
    return balance_partition_trace(net, cluster, kind, M, micro_batch_size).plan


def naive_partition(net, cluster):
    """Equal layer counts per stage, remainder to the earliest stages."""
    N, L = cluster.N, net.L
    if L < N:
        raise InfeasibleShape(f"{L} layer(s) for {N} accelerators")
    base, extra = divmod(L, N)
    cuts = []
    pos = 0
    for n in range(N - 1):
        pos += base + (1 if n < extra else 0)
        cuts.append(pos)
    return PartitionPlan.from_cuts(cuts, L, cluster)
