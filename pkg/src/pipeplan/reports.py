"""Structured (dict) and tabular renderings of estimates, explorations and timelines.

Structured forms contain only JSON types; rationals are written as
``"p/q"`` strings so that outputs stay exact and byte-stable.
"""

from fractions import Fraction

from .plan import plan_to_dict


def frac(x):
    x = Fraction(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def _pct(x):
    return f"{float(x) * 100:.1f}%"


def estimate_to_dict(est):
    return {
        "schedule": est.schedule.value,
        "M": est.M,
        "micro_batch_size": est.micro_batch_size,
        "minibatch_time_us": est.minibatch_time,
        "bubble_fraction": frac(est.bubble_fraction),
        "heuristic": est.heuristic,
        "stages": [
            {
                "F_us": c.F,
                "B_us": c.B,
                "SR_us": c.SR,
                "features_bytes": f,
                "weights_bytes": w,
                "fits": ok,
            }
            for c, f, w, ok in zip(est.stage_costs, est.features_mem, est.weights_mem,
                                   est.memory_feasible)
        ],
        "links": [
            {"demand_bytes_per_us": frac(d), "capacity_bytes_per_us": frac(c)}
            for d, c in zip(est.bandwidth_demand, est.link_capacity)
        ],
    }


def candidate_to_dict(cand):
    return {
        "schedule": cand.kind.value,
        "M": cand.M,
        "micro_batch_size": cand.micro_batch_size,
        "simulated_makespan_us": cand.simulated_makespan,
        "peak_memory_bytes": cand.estimate.peak_memory,
        "estimate": estimate_to_dict(cand.estimate),
        "plan": plan_to_dict(cand.plan),
    }


def exploration_to_dict(result):
    doc = {
        "best": candidate_to_dict(result.best),
        "ranked": [candidate_to_dict(c) for c in result.ranked],
        "rejected": [
            {"schedule": r.kind.value, "M": r.M, "reason": r.reason, "detail": r.detail}
            for r in result.rejected
        ],
    }
    if result.dp_baseline_us is not None:
        doc["dp_baseline_us"] = result.dp_baseline_us
        doc["speedup_vs_dp"] = frac(result.speedup_vs_dp)
    return doc


def timeline_to_dict(timeline):
    return {
        "schedule": timeline.schedule.value,
        "M": timeline.M,
        "N": timeline.N,
        "minibatches": timeline.minibatches,
        "makespan_us": timeline.makespan,
        "bubble_fraction": frac(timeline.bubble_fraction),
        "stages": [
            {
                "feature_highwater_bytes": f,
                "buffers_highwater": b,
                "weights_bytes": w,
            }
            for f, b, w in zip(timeline.feature_highwater, timeline.buffer_highwater,
                               timeline.weight_static)
        ],
        "links": [
            {"busy_fraction": frac(x), "overrun": (k + 1) in timeline.link_overruns}
            for k, x in enumerate(timeline.link_busy_fraction)
        ],
    }


def plan_summary_lines(plan):
    lines = []
    for n, s in enumerate(plan.stages, start=1):
        extra = ""
        if s.leading_fraction != 1 or s.trailing_fraction != 1:
            extra = f"  (first {frac(s.leading_fraction)}, last {frac(s.trailing_fraction)})"
        lines.append(f"  stage {n}  {s.accelerator_id:<10} layers {s.lo}-{s.hi}{extra}")
    return lines


def _table(headers, rows):
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) if rows else len(str(h))
              for i, h in enumerate(headers)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    out = [fmt.format(*headers), fmt.format(*("-" * w for w in widths))]
    out.extend(fmt.format(*map(str, r)) for r in rows)
    return out


def estimate_table(est):
    lines = [f"schedule {est.schedule.value}  M={est.M}  micro-batch size {est.micro_batch_size}",
             f"estimated mini-batch time {est.minibatch_time} us"
             + ("  (approximate: unbalanced or comm-bound)" if est.heuristic else ""),
             f"bubble {_pct(est.bubble_fraction)}"]
    rows = [(n, c.F, c.B, c.SR, f + w, "yes" if ok else "NO")
            for n, (c, f, w, ok) in enumerate(zip(est.stage_costs, est.features_mem,
                                                  est.weights_mem, est.memory_feasible), start=1)]
    lines += _table(("stage", "F_us", "B_us", "SR_us", "memory_B", "fits"), rows)
    if est.bandwidth_demand:
        rows = [(k, f"{float(d):.4g}", f"{float(c):.4g}")
                for k, (d, c) in enumerate(zip(est.bandwidth_demand, est.link_capacity), start=1)]
        lines += _table(("link", "demand_B/us", "capacity_B/us"), rows)
    return lines


def exploration_table(result):
    rows = []
    for c in result.ranked:
        mem = "/".join(str(m) for m in c.estimate.stage_memory)
        links = " ".join(f"{float(d):.3g}/{float(cap):.3g}"
                         for d, cap in zip(c.estimate.bandwidth_demand, c.estimate.link_capacity))
        rows.append((c.kind.value, c.M, c.micro_batch_size, c.simulated_makespan,
                     _pct(c.estimate.bubble_fraction), mem, links or "-"))
    lines = _table(("schedule", "M", "mu", "makespan_us", "bubble", "stage_memory_B",
                    "link_demand/capacity"), rows)
    b = result.best
    lines.append("")
    lines.append(f"best: {b.kind.value} M={b.M} makespan {b.simulated_makespan} us")
    lines += plan_summary_lines(b.plan)
    if result.dp_baseline_us is not None:
        lines.append(f"speedup vs data-parallel baseline: {float(result.speedup_vs_dp):.3f}x")
    if result.rejected:
        lines.append("")
        lines.append("rejected:")
        for r in result.rejected:
            m = "-" if r.M is None else r.M
            lines.append(f"  {r.kind.value:<9} M={m:<4} {r.reason}"
                         + (f": {r.detail}" if r.detail else ""))
    return lines


def timeline_table(timeline):
    lines = [f"schedule {timeline.schedule.value}  M={timeline.M}  N={timeline.N}",
             f"makespan {timeline.makespan} us",
             f"bubble {_pct(timeline.bubble_fraction)}"]
    rows = [(n, b, f, w) for n, (f, b, w) in enumerate(
        zip(timeline.feature_highwater, timeline.buffer_highwater, timeline.weight_static),
        start=1)]
    lines += _table(("stage", "buffers", "features_B", "weights_B"), rows)
    if timeline.link_busy_fraction:
        rows = [(k, _pct(x), "overrun" if k in timeline.link_overruns else "")
                for k, x in enumerate(timeline.link_busy_fraction, start=1)]
        lines += _table(("link", "busy", ""), rows)
    return lines
