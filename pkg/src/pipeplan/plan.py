"""Stage-to-accelerator assignments and the per-stage loads they induce.

A plan is stored as one ``StageAssignment`` per accelerator. Internally it is
often easier to treat it as ``N+1`` boundary positions on the real line,
where layer ``l`` (1-based) occupies ``[l-1, l]``. A stage covering
``[p, q]`` owns every layer fully inside that interval plus the overlapping
fractions of the layers at either end.
"""

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .errors import InvalidPlan, ParseError, SchemaError
from .profiles import canonical_json

ONE = Fraction(1)


@dataclass(frozen=True)
class StageAssignment:
    accelerator_id: str
    lo: int
    hi: int
    leading_fraction: Fraction = ONE
    trailing_fraction: Fraction = ONE

    @property
    def layer_range(self):
        return (self.lo, self.hi)

    @property
    def start(self):
        return self.lo - self.leading_fraction

    @property
    def end(self):
        return self.hi - 1 + self.trailing_fraction


@dataclass(frozen=True)
class PartitionPlan:
    stages: tuple

    @property
    def N(self):
        return len(self.stages)

    def boundaries(self):
        """Stage boundary positions ``[p0=0, p1, ..., pN=L]`` in layer units."""
        if not self.stages:
            return [Fraction(0)]
        return [Fraction(self.stages[0].start)] + [Fraction(s.end) for s in self.stages]

    @property
    def is_whole(self):
        return all(p.denominator == 1 for p in self.boundaries())

    @classmethod
    def from_boundaries(cls, bounds, cluster):
        bounds = [Fraction(p) for p in bounds]
        stages = []
        for n in range(len(bounds) - 1):
            p, q = bounds[n], bounds[n + 1]
            lo = math.floor(p) + 1
            hi = math.ceil(q)
            stages.append(StageAssignment(
                accelerator_id=cluster.accelerators[n].id,
                lo=lo,
                hi=hi,
                leading_fraction=lo - p,
                trailing_fraction=q - (hi - 1),
            ))
        return cls(stages=tuple(stages))

    @classmethod
    def from_cuts(cls, cuts, L, cluster):
        """Whole-layer plan; ``cuts[k]`` is the number of layers before boundary ``k+1``."""
        return cls.from_boundaries([0, *cuts, L], cluster)

    def cuts(self):
        return self.boundaries()[1:-1]


def validate_plan(plan, L, cluster=None):
    """Raise ``InvalidPlan`` unless the plan covers ``[1, L]`` contiguously."""
    if not plan.stages:
        raise InvalidPlan("plan has no stages")
    if cluster is not None:
        if plan.N != cluster.N:
            raise InvalidPlan(f"plan has {plan.N} stages but the cluster has {cluster.N} "
                              "accelerators")
        for n, (stage, acc) in enumerate(zip(plan.stages, cluster.accelerators)):
            if stage.accelerator_id != acc.id:
                raise InvalidPlan(f"stage {n + 1} is assigned to {stage.accelerator_id!r} but "
                                  f"accelerator {n + 1} in the chain is {acc.id!r}")
    for n, stage in enumerate(plan.stages):
        for label, frac in (("leading", stage.leading_fraction),
                            ("trailing", stage.trailing_fraction)):
            if not (0 < frac <= 1):
                raise InvalidPlan(f"stage {n + 1}: {label}_fraction {frac} outside (0, 1]")
        if not (1 <= stage.lo <= stage.hi <= L):
            raise InvalidPlan(f"stage {n + 1}: layer range [{stage.lo}, {stage.hi}] outside "
                              f"[1, {L}]")
        if stage.end <= stage.start:
            raise InvalidPlan(f"stage {n + 1} owns no work")
    bounds = plan.boundaries()
    if bounds[0] != 0:
        raise InvalidPlan("first stage must start at layer 1")
    if bounds[-1] != L:
        raise InvalidPlan(f"last stage must end at layer {L}")
    for n in range(plan.N - 1):
        if plan.stages[n].end != plan.stages[n + 1].start:
            raise InvalidPlan(f"stages {n + 1} and {n + 2} are not contiguous (fractions of a "
                              "shared layer must sum to 1)")


# --------------------------------------------------------------------------
# loads

def _prefix(values):
    out = [Fraction(0)]
    for v in values:
        out.append(out[-1] + v)
    return out


class LayerPrefix:
    """Prefix sums over layers, evaluated at fractional positions."""

    def __init__(self, values):
        self.values = list(values)
        self.sums = _prefix(self.values)

    def at(self, p):
        p = Fraction(p)
        whole = math.floor(p)
        if whole >= len(self.values):
            return self.sums[-1]
        return self.sums[whole] + (p - whole) * self.values[whole]

    def between(self, p, q):
        return self.at(q) - self.at(p)


@dataclass(frozen=True)
class StageLoad:
    """Per-sample work and footprint of one stage (may be fractional)."""

    fp: Fraction
    bp: Fraction
    weight: Fraction
    activation: Fraction

    @property
    def compute(self):
        return self.fp + self.bp


def stage_loads(plan, net, cluster):
    bounds = plan.boundaries()
    w = LayerPrefix(l.weight_bytes for l in net.layers)
    a = LayerPrefix(l.out_activation_bytes for l in net.layers)
    loads = []
    for n in range(plan.N):
        t = cluster.accelerators[n].accel_type
        fp = LayerPrefix(l.fp_time[t] for l in net.layers)
        bp = LayerPrefix(l.bp_time[t] for l in net.layers)
        p, q = bounds[n], bounds[n + 1]
        loads.append(StageLoad(fp=fp.between(p, q), bp=bp.between(p, q),
                               weight=w.between(p, q), activation=a.between(p, q)))
    return loads


def cut_activation(net, p):
    """Bytes per sample crossing a boundary at position ``p``.

    A whole-layer cut after layer ``l`` carries that layer's output. A cut
    inside layer ``l`` is charged the full output of layer ``l``.
    """
    p = Fraction(p)
    idx = math.ceil(p) - 1
    return net.layers[idx].out_activation_bytes


def cut_activations(plan, net):
    return [cut_activation(net, p) for p in plan.cuts()]


def ceil_div(num, den):
    """Ceiling of ``num / den`` for non-negative rationals."""
    q = Fraction(num) / Fraction(den)
    return math.ceil(q)


# --------------------------------------------------------------------------
# export

def _frac_text(x):
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


def _frac_parse(text, loc):
    if not isinstance(text, str):
        raise SchemaError(f"expected a rational string such as '1/2', got {text!r}", loc)
    try:
        value = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise SchemaError(f"not a rational: {text!r}", loc)
    return value


def plan_to_dict(plan):
    return {
        "stages": [
            {
                "accelerator": s.accelerator_id,
                "layers": [s.lo, s.hi],
                "leading_fraction": _frac_text(s.leading_fraction),
                "trailing_fraction": _frac_text(s.trailing_fraction),
            }
            for s in plan.stages
        ]
    }


def plan_from_dict(doc, strict=True):
    if not isinstance(doc, dict) or "stages" not in doc:
        raise SchemaError("expected an object with a 'stages' list")
    if strict and set(doc) - {"stages"}:
        raise SchemaError(f"unknown field(s) {sorted(set(doc) - {'stages'})}")
    stages_doc = doc["stages"]
    if not isinstance(stages_doc, list) or not stages_doc:
        raise SchemaError("expected a non-empty list", "stages")
    keys = {"accelerator", "layers", "leading_fraction", "trailing_fraction"}
    stages = []
    for idx, s in enumerate(stages_doc):
        loc = f"stages[{idx}]"
        if not isinstance(s, dict):
            raise SchemaError("expected an object", loc)
        missing = {"accelerator", "layers"} - set(s)
        if missing:
            raise SchemaError(f"missing field(s) {sorted(missing)}", loc)
        if strict and set(s) - keys:
            raise SchemaError(f"unknown field(s) {sorted(set(s) - keys)}", loc)
        layers = s["layers"]
        if (not isinstance(layers, list) or len(layers) != 2
                or not all(isinstance(v, int) and not isinstance(v, bool) for v in layers)):
            raise SchemaError("expected [lo, hi] integers", f"{loc}.layers")
        if not isinstance(s["accelerator"], str):
            raise SchemaError("expected a string", f"{loc}.accelerator")
        stages.append(StageAssignment(
            accelerator_id=s["accelerator"],
            lo=layers[0],
            hi=layers[1],
            leading_fraction=_frac_parse(s.get("leading_fraction", "1/1"), f"{loc}.leading_fraction"),
            trailing_fraction=_frac_parse(s.get("trailing_fraction", "1/1"), f"{loc}.trailing_fraction"),
        ))
    return PartitionPlan(stages=tuple(stages))


def dump_plan(plan):
    return canonical_json(plan_to_dict(plan))


def save_plan(plan, path):
    Path(path).write_text(dump_plan(plan))


def load_plan(path, strict=True):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read file ({exc.strerror})", str(path))
    except UnicodeDecodeError:
        raise ParseError("not UTF-8 text", str(path))
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{exc.msg} at line {exc.lineno} column {exc.colno}", str(path))
    return plan_from_dict(doc, strict)
