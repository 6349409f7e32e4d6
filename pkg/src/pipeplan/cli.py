"""Command-line front end.

Exit codes: 0 success, 1 input or usage error, 2 no feasible plan.
"""

import argparse
import hashlib
import sys
from pathlib import Path

from . import __version__
from .cost_models import estimate
from .errors import Infeasible, InfeasibleShape, NoFeasiblePlan, PipeplanError
from .explorer import explore
from .partitioner import balance_partition
from .plan import dump_plan, load_plan, plan_to_dict
from .profiles import TrainingConfig, canonical_json, check_compatible, load_cluster, load_network
from .reports import (estimate_table, estimate_to_dict, exploration_table, exploration_to_dict,
                      plan_summary_lines, timeline_table, timeline_to_dict)
from .schedule import ScheduleKind
from .simulator import export_gantt, format_trace, simulate

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _schedule(text):
    try:
        return ScheduleKind.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _positive(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def _int_list(text):
    return [_positive(x) for x in text.split(",") if x.strip()]


def build_parser():
    parser = _Parser(prog="pipeplan", description="Plan, explore and simulate pipelined "
                                                  "training on a chain of accelerators.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("network", help="network profile JSON")
        p.add_argument("cluster", help="cluster description JSON")
        p.add_argument("--lenient", action="store_true", help="ignore unknown fields")
        p.add_argument("--format", choices=("table", "json"), default="table")
        p.add_argument("--manifest", metavar="PATH", help="write a run manifest here")

    p = sub.add_parser("validate", help="check input files")
    common(p)

    p = sub.add_parser("plan", help="balanced partition for one schedule")
    common(p)
    p.add_argument("--schedule", type=_schedule, required=True)
    p.add_argument("--micro", type=_positive, metavar="M", help="micro-batches per mini-batch")
    p.add_argument("--minibatch", type=_positive, metavar="B", help="mini-batch size in samples")
    p.add_argument("-o", "--output", metavar="PATH", help="write the plan here")

    p = sub.add_parser("explore", help="search schedules and micro-batch counts")
    common(p)
    p.add_argument("--minibatch", type=_positive, required=True, metavar="B")
    p.add_argument("--micro-set", type=_int_list, metavar="M1,M2,...",
                   help="explicit micro-batch counts to try")
    p.add_argument("--dp-baseline", type=_positive, metavar="US",
                   help="data-parallel mini-batch time to compare against")
    p.add_argument("-o", "--output", metavar="PATH", help="write the best plan here")

    p = sub.add_parser("simulate", help="simulate a plan")
    common(p)
    p.add_argument("plan", help="plan JSON")
    p.add_argument("--schedule", type=_schedule, required=True)
    p.add_argument("--micro", type=_positive, required=True, metavar="M")
    p.add_argument("--minibatch", type=_positive, metavar="B")
    p.add_argument("--minibatches", type=_positive, default=1,
                   help="consecutive mini-batches to simulate")
    p.add_argument("--gantt", metavar="PATH", help="write a Gantt chart (.csv or .svg)")
    p.add_argument("--trace", action="store_true", help="print every event")
    return parser


def _load_inputs(args):
    strict = not args.lenient
    net = load_network(args.network, strict)
    cluster = load_cluster(args.cluster, strict)
    check_compatible(net, cluster)
    return net, cluster


def _micro_size(minibatch, M):
    if minibatch is None:
        return 1
    if minibatch % M:
        raise PipeplanError(f"--micro {M} does not divide --minibatch {minibatch}")
    return minibatch // M


def _emit(args, doc, lines, out):
    if args.format == "json":
        out.write(canonical_json(doc))
    else:
        out.write("\n".join(lines) + "\n")


def _digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(args, argv, inputs):
    doc = {
        "tool_version": __version__,
        "input_digests": {Path(p).name: _digest(p) for p in inputs},
        "command": list(argv),
        "seed_free": True,
    }
    Path(args.manifest).write_text(canonical_json(doc))


def cmd_validate(args, out):
    net, cluster = _load_inputs(args)
    doc = {"valid": True, "L": net.L, "N": cluster.N,
           "execution_mode": cluster.execution_mode.value}
    lines = [f"ok: {net.L} layers, {cluster.N} accelerators, "
             f"{cluster.execution_mode.value} execution"]
    _emit(args, doc, lines, out)
    return EXIT_OK


def cmd_plan(args, out):
    net, cluster = _load_inputs(args)
    kind = args.schedule
    if args.micro is None and args.minibatch is None:
        raise PipeplanError("give --micro M, --minibatch B, or both")
    if args.micro is None:
        # pick the best micro-batch count for this schedule
        result = explore(net, cluster, TrainingConfig(args.minibatch), kinds=[kind])
        plan, M, mu = result.best.plan, result.best.M, result.best.micro_batch_size
    else:
        M = args.micro
        mu = _micro_size(args.minibatch, M)
        plan = balance_partition(net, cluster, kind, M, mu)
    est = estimate(kind, plan, net, cluster, M, mu)
    if not est.feasible:
        raise Infeasible("memory", "the balanced plan exceeds a stage's capacity")
    if args.output:
        Path(args.output).write_text(dump_plan(plan))
    doc = {"plan": plan_to_dict(plan), "estimate": estimate_to_dict(est)}
    lines = ["plan:"] + plan_summary_lines(plan) + [""] + estimate_table(est)
    _emit(args, doc, lines, out)
    return EXIT_OK


def cmd_explore(args, out):
    net, cluster = _load_inputs(args)
    cfg = TrainingConfig(args.minibatch, tuple(args.micro_set) if args.micro_set else None,
                         args.dp_baseline)
    result = explore(net, cluster, cfg)
    if args.output:
        Path(args.output).write_text(dump_plan(result.best.plan))
    _emit(args, exploration_to_dict(result), exploration_table(result), out)
    return EXIT_OK


def cmd_simulate(args, out):
    net, cluster = _load_inputs(args)
    plan = load_plan(args.plan, not args.lenient)
    mu = _micro_size(args.minibatch, args.micro)
    timeline = simulate(args.schedule, plan, net, cluster, args.micro, mu, args.minibatches)
    if args.gantt:
        suffix = Path(args.gantt).suffix.lower().lstrip(".")
        if suffix not in ("csv", "svg"):
            raise PipeplanError(f"--gantt needs a .csv or .svg file name, got {args.gantt!r}")
        Path(args.gantt).write_bytes(export_gantt(timeline, suffix))
    _emit(args, timeline_to_dict(timeline), timeline_table(timeline), out)
    if args.trace:
        out.write(format_trace(timeline))
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "plan": cmd_plan, "explore": cmd_explore,
            "simulate": cmd_simulate}


def main(argv=None, out=None, err=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_INPUT
    try:
        code = COMMANDS[args.command](args, out)
    except (Infeasible, NoFeasiblePlan, InfeasibleShape) as exc:
        err.write(f"infeasible: shape ({exc})\n" if isinstance(exc, InfeasibleShape)
                  else f"{exc}\n")
        if isinstance(exc, NoFeasiblePlan):
            for r in exc.rejected:
                m = "-" if r.M is None else r.M
                err.write(f"  {r.kind.value} M={m}: {r.reason}"
                          + (f" ({r.detail})" if r.detail else "") + "\n")
        return EXIT_INFEASIBLE
    except PipeplanError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_INPUT
    if args.manifest:
        inputs = [args.network, args.cluster] + ([args.plan] if args.command == "simulate" else [])
        write_manifest(args, argv, inputs)
    return code


if __name__ == "__main__":
    sys.exit(main())
