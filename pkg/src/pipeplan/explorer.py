"""Search over schedule kind, micro-batch count and partition.

Every (kind, M) pair gets its own balanced plan, is checked against the
memory and bandwidth models, and is scored by its simulated mini-batch time.
"""

from dataclasses import dataclass, field
from fractions import Fraction

from .cost_models import estimate
from .errors import Infeasible, InfeasibleShape, NoFeasiblePlan
from .partitioner import balance_partition
from .schedule import ExecutionMode, ScheduleKind
from .simulator import simulate


def feasible_kinds(mode):
    mode = ExecutionMode(mode)
    if mode is ExecutionMode.ASYNC:
        return [ScheduleKind.ONE_F_ONE_B_AS, ScheduleKind.FBP_AS]
    return [ScheduleKind.ONE_F_ONE_B_SNO, ScheduleKind.ONE_F_ONE_B_SO]


def _divisors(n):
    return [d for d in range(1, n + 1) if n % d == 0]


def candidate_Ms(cfg, cluster, kind):
    """Micro-batch counts whose micro-batch size satisfies every stage's minimum."""
    need = max(acc.min_micro(kind) for acc in cluster.accelerators)
    pool = cfg.micro_batch_candidates if cfg.micro_batch_candidates else _divisors(cfg.mini_batch_size)
    return [M for M in pool if cfg.mini_batch_size // M >= need]


@dataclass(frozen=True)
class Candidate:
    kind: ScheduleKind
    M: int
    micro_batch_size: int
    plan: object
    simulated_makespan: int
    estimate: object

    def rank_key(self):
        return (self.simulated_makespan, self.estimate.peak_memory,
                self.estimate.max_bandwidth_demand, self.M, self.kind.value)


@dataclass(frozen=True)
class Rejection:
    kind: ScheduleKind
    M: object
    reason: str
    detail: str = ""


@dataclass
class ExplorationResult:
    best: Candidate
    ranked: list
    rejected: list = field(default_factory=list)
    dp_baseline_us: object = None

    @property
    def speedup_vs_dp(self):
        """DP baseline time over the best makespan (reported, never used for selection)."""
        if self.dp_baseline_us is None or self.best.simulated_makespan == 0:
            return None
        return Fraction(self.dp_baseline_us, self.best.simulated_makespan)


def evaluate(net, cluster, kind, M, micro_batch_size):
    """Plan, check and simulate one candidate. Returns a Candidate or a Rejection."""
    try:
        plan = balance_partition(net, cluster, kind, M, micro_batch_size)
    except Infeasible as exc:
        return Rejection(kind, M, exc.reason, exc.detail)
    except InfeasibleShape as exc:
        return Rejection(kind, M, "shape", str(exc))
    est = estimate(kind, plan, net, cluster, M, micro_batch_size)
    if not est.feasible:
        return Rejection(kind, M, "memory", "plan exceeds a stage's capacity")
    if kind.is_async and not est.bandwidth_ok:
        worst = max(range(len(est.bandwidth_demand)),
                    key=lambda k: est.bandwidth_demand[k] - est.link_capacity[k])
        return Rejection(kind, M, "bandwidth",
                         f"link {worst + 1} needs {float(est.bandwidth_demand[worst]):.4g} B/us, "
                         f"has {float(est.link_capacity[worst]):.4g}")
    timeline = simulate(kind, plan, net, cluster, M, micro_batch_size)
    return Candidate(kind, M, micro_batch_size, plan, timeline.makespan, est)


def explore(net, cluster, cfg, kinds=None):
    """Evaluate every compatible (kind, M) and rank the feasible ones.

    ``kinds`` restricts the search; kinds whose execution mode does not
    match the cluster are rejected with reason ``"mode"``.
    """
    allowed = feasible_kinds(cluster.execution_mode)
    kinds = list(kinds) if kinds is not None else list(ScheduleKind)
    ranked, rejected = [], []
    for kind in kinds:
        if kind not in allowed:
            rejected.append(Rejection(kind, None, "mode",
                                      f"{kind.value} cannot run on a "
                                      f"{cluster.execution_mode.value} cluster"))
            continue
        pool = cfg.micro_batch_candidates or _divisors(cfg.mini_batch_size)
        ok = set(candidate_Ms(cfg, cluster, kind))
        for M in pool:
            if M not in ok:
                rejected.append(Rejection(kind, M, "min_micro_batch",
                                          f"micro-batch size {cfg.mini_batch_size // M} is below "
                                          f"the minimum {max(a.min_micro(kind) for a in cluster.accelerators)}"))
                continue
            outcome = evaluate(net, cluster, kind, M, cfg.mini_batch_size // M)
            (ranked if isinstance(outcome, Candidate) else rejected).append(outcome)
    if not ranked:
        raise NoFeasiblePlan(rejected)
    ranked.sort(key=Candidate.rank_key)
    return ExplorationResult(best=ranked[0], ranked=ranked, rejected=rejected,
                             dp_baseline_us=cfg.dp_baseline_us)
