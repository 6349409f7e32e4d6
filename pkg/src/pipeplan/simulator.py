"""Deterministic discrete-event simulation of one (or a few) mini-batches.

Each stage runs a fixed program of compute operations:

* 1F1B kinds: ``depth`` forward passes, then alternate one BP and one FP,
  then drain the remaining BPs. ``depth`` is ``N-s+1`` (1F1B-AS, 1F1B-SNO)
  or ``2(N-s+1)`` (1F1B-SO), capped at ``M``.
* FBP-AS: ``2(N-s+1)-1`` forward passes, then FP/BP pairs that execute
  concurrently on the stage, then the remaining BPs. A pair shares the
  stage's compute, so it lasts ``F+B`` and both halves finish together.

An operation starts when the stage is free and its input is available.
Synchronous clusters ship data only after the producer finishes; the
transfer takes ``SR`` and the consumer waits for it. Links are full duplex
and behave as fixed-delay channels. Asynchronous clusters stream data while
the producer runs, so the consumer may start as soon as the producer ends;
a transfer longer than its producer is reported in ``link_overruns``.
"""

import enum
from collections import deque
from dataclasses import dataclass, replace
from fractions import Fraction

from .cost_models import check_mode, stage_costs, weights_memory
from .errors import InvalidPlan
from .plan import validate_plan
from .schedule import ScheduleKind


class EventKind(enum.Enum):
    FP = "FP"
    BP = "BP"
    SEND_F = "SEND_F"
    RECV_F = "RECV_F"
    SEND_B = "SEND_B"
    RECV_B = "RECV_B"

    @property
    def is_compute(self):
        return self in (EventKind.FP, EventKind.BP)


# BP before FP at equal times, communication after compute
_KIND_RANK = {EventKind.BP: 0, EventKind.FP: 1, EventKind.SEND_B: 2, EventKind.RECV_B: 3,
              EventKind.SEND_F: 4, EventKind.RECV_F: 5}


@dataclass(frozen=True)
class Event:
    stage: int
    kind: EventKind
    micro_batch: int
    start: int
    end: int
    minibatch: int = 0

    def sort_key(self):
        return (self.minibatch, self.start, self.micro_batch, _KIND_RANK[self.kind], self.stage)


@dataclass(frozen=True)
class Timeline:
    schedule: ScheduleKind
    M: int
    N: int
    minibatches: int
    events: tuple
    makespan: int
    stage_activation_bytes: tuple
    feature_highwater: tuple
    buffer_highwater: tuple
    weight_static: tuple
    link_busy_fraction: tuple
    link_overruns: tuple

    @property
    def compute_events(self):
        return tuple(e for e in self.events if e.kind.is_compute)

    @property
    def bubble_fraction(self):
        """Fraction of stage-time spent idle, from the busiest stage's view."""
        if self.makespan == 0:
            return Fraction(0)
        busy = {}
        for e in self.events:
            if e.kind.is_compute:
                busy.setdefault(e.stage, []).append((e.start, e.end))
        worst = max(_union_length(iv) for iv in busy.values())
        return Fraction(self.makespan - worst, self.makespan)


def _union_length(intervals):
    total = 0
    cur_start = cur_end = None
    for s, e in sorted(intervals):
        if cur_end is None or s > cur_end:
            if cur_end is not None:
                total += cur_end - cur_start
            cur_start, cur_end = s, e
        else:
            cur_end = max(cur_end, e)
    if cur_end is not None:
        total += cur_end - cur_start
    return total


def warmup_depth(kind, M, N, s):
    """Forward passes a stage runs before its first backward pass."""
    depth = N - s + 1
    if kind is ScheduleKind.ONE_F_ONE_B_SO:
        depth *= 2
    elif kind is ScheduleKind.FBP_AS:
        depth = 2 * depth - 1
    return min(depth, M)


def stage_program(kind, M, N, s):
    """Ordered compute operations of stage ``s`` (1-based).

    Items are ``("F", m)``, ``("B", m)`` or, for FBP-AS, ``("FB", m_fp, m_bp)``.
    """
    K = warmup_depth(kind, M, N, s)
    ops = [("F", m) for m in range(1, K + 1)]
    nf, nb = K, 0
    while nb < M:
        if kind is ScheduleKind.FBP_AS and nf < M:
            nf += 1
            nb += 1
            ops.append(("FB", nf, nb))
            continue
        nb += 1
        ops.append(("B", nb))
        if nf < M:
            nf += 1
            ops.append(("F", nf))
    return ops


def simulate_stages(kind, F, B, SR, M, act=None, w=None, minibatches=1):
    """Simulate explicit per-stage costs.

    ``F``/``B`` hold one integer per stage and ``SR`` one transfer time per
    link. ``act``/``w`` are per-stage stashed-activation and weight bytes.
    """
    N = len(F)
    if len(B) != N or len(SR) != N - 1:
        raise ValueError("need len(F) == len(B) == N and len(SR) == N-1")
    if M < 1:
        raise ValueError("M must be >= 1")
    act = list(act) if act is not None else [0] * N
    w = list(w) if w is not None else [0] * N
    sync = not kind.is_async

    programs = [stage_program(kind, M, N, s) for s in range(1, N + 1)]
    ptr = [0] * N
    free = [0] * N
    fp_span = {}
    bp_span = {}
    events = []
    overruns = set()

    def forward_ready(m, s):
        if s == 0:
            return 0
        span = fp_span.get((m, s - 1))
        if span is None:
            return None
        return span[1] + SR[s - 1] if sync else span[1]

    def backward_ready(m, s):
        if s == N - 1:
            span = fp_span.get((m, s))
            return None if span is None else span[1]
        span = bp_span.get((m, s + 1))
        if span is None:
            return None
        return span[1] + SR[s] if sync else span[1]

    def emit_transfer(link, forward, m, start, end):
        sr = SR[link]
        if sr == 0:
            return
        sender, receiver = (link, link + 1) if forward else (link + 1, link)
        send_kind, recv_kind = ((EventKind.SEND_F, EventKind.RECV_F) if forward
                                else (EventKind.SEND_B, EventKind.RECV_B))
        if sync:
            t0, t1 = end, end + sr
        else:
            t0, t1 = start, end
            if sr > end - start:
                overruns.add(link + 1)
        events.append(Event(sender + 1, send_kind, m, t0, t1))
        events.append(Event(receiver + 1, recv_kind, m, t0, t1))

    def run_fp(s, m, start, end):
        fp_span[(m, s)] = (start, end)
        events.append(Event(s + 1, EventKind.FP, m, start, end))
        if s < N - 1:
            emit_transfer(s, True, m, start, end)

    def run_bp(s, m, start, end):
        bp_span[(m, s)] = (start, end)
        events.append(Event(s + 1, EventKind.BP, m, start, end))
        if s > 0:
            emit_transfer(s - 1, False, m, start, end)

    pending = deque(range(N))
    queued = set(pending)
    while pending:
        s = pending.popleft()
        queued.discard(s)
        progressed = False
        while ptr[s] < len(programs[s]):
            op = programs[s][ptr[s]]
            if op[0] == "F":
                ready = forward_ready(op[1], s)
                if ready is None:
                    break
                start = max(free[s], ready)
                free[s] = start + F[s]
                run_fp(s, op[1], start, free[s])
            elif op[0] == "B":
                ready = backward_ready(op[1], s)
                if ready is None:
                    break
                start = max(free[s], ready)
                free[s] = start + B[s]
                run_bp(s, op[1], start, free[s])
            else:
                r1 = forward_ready(op[1], s)
                r2 = backward_ready(op[2], s)
                if r1 is None or r2 is None:
                    break
                start = max(free[s], r1, r2)
                free[s] = start + F[s] + B[s]
                run_fp(s, op[1], start, free[s])
                run_bp(s, op[2], start, free[s])
            ptr[s] += 1
            progressed = True
        if progressed:
            for nb in (s - 1, s + 1):
                if 0 <= nb < N and nb not in queued:
                    pending.append(nb)
                    queued.add(nb)
    if any(ptr[s] < len(programs[s]) for s in range(N)):
        raise RuntimeError("schedule deadlocked; stage programs are inconsistent")

    makespan = max(e.end for e in events) - min(e.start for e in events)
    all_events = []
    for k in range(minibatches):
        shift = k * makespan
        all_events.extend(Event(e.stage, e.kind, e.micro_batch, e.start + shift,
                                e.end + shift, k) for e in events)
    all_events.sort(key=Event.sort_key)

    total = makespan * minibatches
    busy = []
    for link in range(N - 1):
        per_direction = M * SR[link] * minibatches
        busy.append(Fraction(per_direction, total) if total else Fraction(0))

    timeline = Timeline(
        schedule=kind,
        M=M,
        N=N,
        minibatches=minibatches,
        events=tuple(all_events),
        makespan=total,
        stage_activation_bytes=tuple(act),
        feature_highwater=(),
        buffer_highwater=(),
        weight_static=tuple(weights_memory(x) for x in w),
        link_busy_fraction=tuple(busy),
        link_overruns=tuple(sorted(overruns)),
    )
    counts = buffer_highwater(timeline)
    return replace(timeline, buffer_highwater=tuple(counts),
                    feature_highwater=tuple(c * a for c, a in zip(counts, act)))


def simulate(kind, plan, net, cluster, M, micro_batch_size=1, minibatches=1):
    """Simulate ``plan`` under ``kind`` for ``M`` micro-batches of ``micro_batch_size``."""
    check_mode(kind, cluster)
    validate_plan(plan, net.L, cluster)
    if M < 1:
        raise InvalidPlan("M must be >= 1")
    costs = stage_costs(plan, net, cluster, micro_batch_size)
    return simulate_stages(
        kind,
        [c.F for c in costs],
        [c.B for c in costs],
        [c.SR for c in costs[1:]],
        M,
        act=[c.act for c in costs],
        w=[c.w for c in costs],
        minibatches=minibatches,
    )


def buffer_highwater(timeline):
    """Peak number of live activation buffers per stage.

    A buffer is live from the FP start of a micro-batch until the end of its
    BP on the same stage. Frees are processed before allocations at the same
    instant.
    """
    starts = {}
    ends = {}
    for e in timeline.events:
        key = (e.stage, e.minibatch, e.micro_batch)
        if e.kind is EventKind.FP:
            starts[key] = e.start
        elif e.kind is EventKind.BP:
            ends[key] = e.end
    sweep = {s: [] for s in range(1, timeline.N + 1)}
    for key, t0 in starts.items():
        sweep[key[0]].append((t0, 1))
        sweep[key[0]].append((ends[key], -1))
    peaks = []
    for s in range(1, timeline.N + 1):
        live = peak = 0
        for _, delta in sorted(sweep[s]):
            live += delta
            peak = max(peak, live)
        peaks.append(peak)
    return peaks


def memory_highwater(timeline):
    """Peak stashed-activation bytes per stage."""
    return [c * a for c, a in zip(buffer_highwater(timeline), timeline.stage_activation_bytes)]


def format_trace(timeline):
    """One event per line, for debugging."""
    lines = []
    for e in timeline.events:
        lines.append(f"mb={e.minibatch} stage={e.stage} {e.kind.value:<6} m={e.micro_batch:<3} "
                     f"[{e.start}, {e.end})")
    return "\n".join(lines) + ("\n" if lines else "")


def export_gantt(timeline, format="csv"):
    from .gantt import to_csv, to_svg
    if format == "csv":
        return to_csv(timeline)
    if format == "svg":
        return to_svg(timeline)
    raise ValueError(f"unknown gantt format {format!r}; expected 'csv' or 'svg'")
