"""Network and cluster descriptions: domain types, strict JSON ingestion,
canonical serialization and synthetic fixture generators.

All times are integer microseconds and all sizes integer bytes. Layer times
and activation sizes describe one sample; a micro-batch of size ``mu`` costs
``mu`` times as much (see ``micro_batch_size`` arguments elsewhere). Link
bandwidths may be fractional and are kept as exact ``Fraction`` values.
"""

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .errors import ParseError, SchemaError
from .schedule import ExecutionMode, ScheduleKind


@dataclass(frozen=True)
class LayerProfile:
    name: str
    fp_time: Mapping[str, int]
    bp_time: Mapping[str, int]
    weight_bytes: int
    out_activation_bytes: int

    def time_on(self, accel_type):
        return self.fp_time[accel_type] + self.bp_time[accel_type]


@dataclass(frozen=True)
class NetworkProfile:
    name: str
    layers: tuple

    @property
    def L(self):
        return len(self.layers)

    @property
    def accel_types(self):
        return tuple(sorted(self.layers[0].fp_time)) if self.layers else ()

    def total_time(self, accel_type):
        """FP+BP time of one sample through the whole network on ``accel_type``."""
        return sum(layer.time_on(accel_type) for layer in self.layers)


@dataclass(frozen=True)
class AcceleratorSpec:
    id: str
    accel_type: str
    mem_capacity_bytes: int
    min_micro_batch: Mapping[ScheduleKind, int] = field(default_factory=dict)

    def min_micro(self, kind):
        return self.min_micro_batch.get(kind, 1)


@dataclass(frozen=True)
class ClusterSpec:
    accelerators: tuple
    links: tuple
    execution_mode: ExecutionMode

    @property
    def N(self):
        return len(self.accelerators)

    def accelerator(self, stage):
        return self.accelerators[stage]


@dataclass(frozen=True)
class TrainingConfig:
    mini_batch_size: int
    micro_batch_candidates: Optional[tuple] = None
    dp_baseline_us: Optional[int] = None

    def __post_init__(self):
        if not _is_int(self.mini_batch_size) or self.mini_batch_size < 1:
            raise SchemaError("must be a positive integer", "mini_batch_size")
        for m in self.micro_batch_candidates or ():
            if not _is_int(m) or m < 1:
                raise SchemaError(f"micro-batch count {m!r} must be a positive integer",
                                  "micro_batch_candidates")
            if self.mini_batch_size % m:
                raise SchemaError(f"micro-batch count {m} does not divide mini-batch "
                                  f"size {self.mini_batch_size}", "micro_batch_candidates")


# --------------------------------------------------------------------------
# validation helpers

def _is_int(value):
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _check_keys(doc, allowed, required, loc, strict):
    if not isinstance(doc, dict):
        raise SchemaError(f"expected an object, got {type(doc).__name__}", loc)
    for key in required:
        if key not in doc:
            raise SchemaError(f"missing field {key!r}", loc)
    if strict:
        unknown = sorted(set(doc) - set(allowed))
        if unknown:
            raise SchemaError(f"unknown field(s) {', '.join(map(repr, unknown))}", loc)


def _join(loc, key):
    return f"{loc}.{key}" if loc else key


def _get_str(doc, key, loc):
    value = doc[key]
    if not isinstance(value, str) or not value:
        raise SchemaError("expected a non-empty string", _join(loc, key))
    return value


def _get_int(doc, key, loc, minimum):
    value = doc[key]
    if not _is_int(value):
        raise SchemaError(f"expected an integer, got {value!r}", _join(loc, key))
    if value < minimum:
        raise SchemaError(f"must be >= {minimum}, got {value}", _join(loc, key))
    return value


def _get_time_map(doc, key, loc):
    where = _join(loc, key)
    value = doc[key]
    if not isinstance(value, dict) or not value:
        raise SchemaError("expected a non-empty object of accelerator-type -> microseconds",
                          where)
    out = {}
    for accel_type in sorted(value):
        t = value[accel_type]
        if not _is_int(t):
            raise SchemaError(f"expected an integer time, got {t!r}", _join(where, accel_type))
        if t < 1:
            raise SchemaError(f"non-positive time {t}", _join(where, accel_type))
        out[accel_type] = t
    return out


def _decode(data, source):
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"not UTF-8 text ({exc.reason} at byte {exc.start})", source)
    try:
        return json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{exc.msg} at line {exc.lineno} column {exc.colno}", source)
    except RecursionError:
        raise ParseError("document nested too deeply", source)


def _read(path):
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read file ({exc.strerror})", str(path))


# --------------------------------------------------------------------------
# network files

_LAYER_KEYS = ("name", "fp_us", "bp_us", "weight_bytes", "out_activation_bytes")


def network_from_dict(doc, strict=True):
    _check_keys(doc, ("name", "layers"), ("name", "layers"), "", strict)
    name = _get_str(doc, "name", "")
    layers_doc = doc["layers"]
    if not isinstance(layers_doc, list):
        raise SchemaError("expected a list of layers", "layers")
    if not layers_doc:
        raise SchemaError("network must have at least one layer (L >= 1)", "layers")
    layers = []
    types = None
    for idx, layer in enumerate(layers_doc):
        loc = f"layers[{idx}]"
        _check_keys(layer, _LAYER_KEYS, _LAYER_KEYS, loc, strict)
        fp = _get_time_map(layer, "fp_us", loc)
        bp = _get_time_map(layer, "bp_us", loc)
        if set(fp) != set(bp):
            raise SchemaError("fp_us and bp_us must list the same accelerator types", loc)
        if types is None:
            types = set(fp)
        elif set(fp) != types:
            raise SchemaError("every layer must be profiled on the same accelerator types", loc)
        layers.append(LayerProfile(
            name=_get_str(layer, "name", loc),
            fp_time=fp,
            bp_time=bp,
            weight_bytes=_get_int(layer, "weight_bytes", loc, 0),
            out_activation_bytes=_get_int(layer, "out_activation_bytes", loc, 0),
        ))
    return NetworkProfile(name=name, layers=tuple(layers))


def network_to_dict(net):
    return {
        "name": net.name,
        "layers": [
            {
                "name": layer.name,
                "fp_us": dict(sorted(layer.fp_time.items())),
                "bp_us": dict(sorted(layer.bp_time.items())),
                "weight_bytes": layer.weight_bytes,
                "out_activation_bytes": layer.out_activation_bytes,
            }
            for layer in net.layers
        ],
    }


def parse_network(data, strict=True, source=None):
    doc = _decode(data, source)
    try:
        return network_from_dict(doc, strict)
    except SchemaError as exc:
        if source and exc.location is not None:
            exc.args = (f"{source}: {exc.args[0]}",)
        raise


def load_network(path, strict=True):
    return parse_network(_read(path), strict, str(path))


def dump_network(net):
    return canonical_json(network_to_dict(net))


def save_network(net, path):
    Path(path).write_text(dump_network(net))


# --------------------------------------------------------------------------
# cluster files

_ACCEL_KEYS = ("id", "type", "mem_capacity_bytes", "min_micro_batch")
_CLUSTER_KEYS = ("execution_mode", "accelerators", "link_bandwidth_bytes_per_us")


def _bandwidth(value, loc):
    if not _is_number(value):
        raise SchemaError(f"expected a number, got {value!r}", loc)
    if isinstance(value, float) and value != value:
        raise SchemaError("bandwidth is NaN", loc)
    if value == float("inf"):
        raise SchemaError("bandwidth must be finite", loc)
    bw = Fraction(value) if isinstance(value, int) else Fraction(repr(value))
    if bw <= 0:
        raise SchemaError(f"bandwidth must be > 0, got {value}", loc)
    return bw


def cluster_from_dict(doc, strict=True):
    _check_keys(doc, _CLUSTER_KEYS, _CLUSTER_KEYS, "", strict)
    mode_text = doc["execution_mode"]
    try:
        mode = ExecutionMode(mode_text)
    except ValueError:
        raise SchemaError(f"expected 'sync' or 'async', got {mode_text!r}", "execution_mode")
    accels_doc = doc["accelerators"]
    if not isinstance(accels_doc, list) or not accels_doc:
        raise SchemaError("expected a non-empty list of accelerators (N >= 1)", "accelerators")
    accels = []
    seen = set()
    for idx, acc in enumerate(accels_doc):
        loc = f"accelerators[{idx}]"
        _check_keys(acc, _ACCEL_KEYS, ("id", "type", "mem_capacity_bytes"), loc, strict)
        acc_id = _get_str(acc, "id", loc)
        if acc_id in seen:
            raise SchemaError(f"duplicate accelerator id {acc_id!r}", loc)
        seen.add(acc_id)
        mmb_doc = acc.get("min_micro_batch", {})
        if not isinstance(mmb_doc, dict):
            raise SchemaError("expected an object of schedule -> size", _join(loc, "min_micro_batch"))
        mmb = {}
        for key in sorted(mmb_doc):
            where = _join(_join(loc, "min_micro_batch"), key)
            try:
                kind = ScheduleKind.parse(key)
            except ValueError as exc:
                raise SchemaError(str(exc), where)
            mmb[kind] = _get_int(mmb_doc, key, _join(loc, "min_micro_batch"), 1)
        accels.append(AcceleratorSpec(
            id=acc_id,
            accel_type=_get_str(acc, "type", loc),
            mem_capacity_bytes=_get_int(acc, "mem_capacity_bytes", loc, 1),
            min_micro_batch=mmb,
        ))
    links_doc = doc["link_bandwidth_bytes_per_us"]
    if not isinstance(links_doc, list):
        raise SchemaError("expected a list of bandwidths", "link_bandwidth_bytes_per_us")
    if len(links_doc) != len(accels) - 1:
        raise SchemaError(f"expected N-1 links ({len(accels) - 1}), got {len(links_doc)}",
                          "link_bandwidth_bytes_per_us")
    links = tuple(_bandwidth(bw, f"link_bandwidth_bytes_per_us[{k}]")
                  for k, bw in enumerate(links_doc))
    return ClusterSpec(accelerators=tuple(accels), links=links, execution_mode=mode)


def _number_out(value):
    value = Fraction(value)
    return int(value) if value.denominator == 1 else float(value)


def cluster_to_dict(cluster):
    return {
        "execution_mode": cluster.execution_mode.value,
        "accelerators": [
            {
                "id": acc.id,
                "type": acc.accel_type,
                "mem_capacity_bytes": acc.mem_capacity_bytes,
                "min_micro_batch": {k.value: v for k, v in
                                    sorted(acc.min_micro_batch.items(), key=lambda kv: kv[0].value)},
            }
            for acc in cluster.accelerators
        ],
        "link_bandwidth_bytes_per_us": [_number_out(bw) for bw in cluster.links],
    }


def parse_cluster(data, strict=True, source=None):
    doc = _decode(data, source)
    try:
        return cluster_from_dict(doc, strict)
    except SchemaError as exc:
        if source and exc.location is not None:
            exc.args = (f"{source}: {exc.args[0]}",)
        raise


def load_cluster(path, strict=True):
    return parse_cluster(_read(path), strict, str(path))


def dump_cluster(cluster):
    return canonical_json(cluster_to_dict(cluster))


def save_cluster(cluster, path):
    Path(path).write_text(dump_cluster(cluster))


def check_compatible(net, cluster):
    """Every accelerator type used by ``cluster`` must be profiled in ``net``."""
    for idx, acc in enumerate(cluster.accelerators):
        for lidx, layer in enumerate(net.layers):
            if acc.accel_type not in layer.fp_time or acc.accel_type not in layer.bp_time:
                raise SchemaError(
                    f"accelerator {acc.id!r} has type {acc.accel_type!r} which is not "
                    f"profiled for layer {layer.name!r}", f"layers[{lidx}]")


def canonical_json(doc):
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# --------------------------------------------------------------------------
# synthetic fixtures

def synth_uniform_network(L, fp, bp, w, a, accel_types=("acc",), name="uniform"):
    """``L`` identical layers with the same times on every listed accelerator type."""
    if L < 1 or fp < 1 or bp < 1:
        raise ValueError("need L >= 1, fp >= 1 and bp >= 1")
    if w < 0 or a < 0:
        raise ValueError("byte sizes must be non-negative")
    layers = tuple(
        LayerProfile(
            name=f"layer{idx + 1}",
            fp_time={t: fp for t in accel_types},
            bp_time={t: bp for t in accel_types},
            weight_bytes=w,
            out_activation_bytes=a,
        )
        for idx in range(L)
    )
    return NetworkProfile(name=name, layers=layers)


def make_network(fp, bp, weights=None, activations=None, name="net"):
    """Build a network from per-layer lists.

    ``fp``/``bp`` are either lists of ints (single type ``"acc"``) or dicts
    mapping accelerator type to a list of ints.
    """
    if not isinstance(fp, dict):
        fp, bp = {"acc": list(fp)}, {"acc": list(bp)}
    types = sorted(fp)
    L = len(fp[types[0]])
    weights = list(weights) if weights is not None else [0] * L
    activations = list(activations) if activations is not None else [0] * L
    layers = tuple(
        LayerProfile(
            name=f"layer{i + 1}",
            fp_time={t: fp[t][i] for t in types},
            bp_time={t: bp[t][i] for t in types},
            weight_bytes=weights[i],
            out_activation_bytes=activations[i],
        )
        for i in range(L)
    )
    return NetworkProfile(name=name, layers=layers)


def synth_chain_cluster(N, mode=ExecutionMode.ASYNC, accel_types: Sequence[str] = ("acc",),
                        mem_capacity_bytes=1 << 40, bandwidth=1, min_micro_batch=None):
    """A daisy chain of ``N`` accelerators; ``accel_types`` cycles if shorter than ``N``.

    ``bandwidth`` is a single value or a list of ``N-1`` values; ``mem_capacity_bytes``
    likewise a single value or a per-accelerator list.
    """
    mode = ExecutionMode(mode)
    bws = list(bandwidth) if isinstance(bandwidth, (list, tuple)) else [bandwidth] * (N - 1)
    mems = (list(mem_capacity_bytes) if isinstance(mem_capacity_bytes, (list, tuple))
            else [mem_capacity_bytes] * N)
    accels = tuple(
        AcceleratorSpec(
            id=f"acc{n + 1}",
            accel_type=accel_types[n % len(accel_types)],
            mem_capacity_bytes=mems[n],
            min_micro_batch=dict(min_micro_batch or {}),
        )
        for n in range(N)
    )
    return ClusterSpec(accelerators=accels, links=tuple(Fraction(b) for b in bws),
                       execution_mode=mode)
