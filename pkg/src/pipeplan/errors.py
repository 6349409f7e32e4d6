"""Exception hierarchy shared by every module."""


class PipeplanError(Exception):
    """Base class for all errors raised by pipeplan."""


class ParseError(PipeplanError):
    """Input bytes are not a well-formed JSON document."""

    def __init__(self, message, source=None):
        self.source = source
        prefix = f"{source}: " if source else ""
        super().__init__(f"{prefix}{message}")


class SchemaError(PipeplanError):
    """A document parsed but violates the schema or a domain invariant.

    ``location`` is a dotted path such as ``layers[3].fp_us.v100`` so that
    diagnostics point at the offending record.
    """

    def __init__(self, message, location=None):
        self.location = location
        self.detail = message
        text = f"{location}: {message}" if location else message
        super().__init__(text)


class IncompatibleSchedule(PipeplanError):
    """Schedule kind does not match the cluster execution mode."""


class InvalidPlan(PipeplanError):
    """Partition plan violates coverage, contiguity or fraction rules."""


class InfeasibleShape(PipeplanError):
    """Fewer partitionable units than accelerators."""


class Infeasible(PipeplanError):
    """No contiguous plan satisfies the resource constraints."""

    def __init__(self, reason, detail=""):
        self.reason = reason
        self.detail = detail
        super().__init__(f"infeasible: {reason}" + (f" ({detail})" if detail else ""))


class NoFeasiblePlan(PipeplanError):
    """Every (schedule, micro-batch count) candidate was rejected."""

    def __init__(self, rejected):
        self.rejected = list(rejected)
        reasons = sorted({r.reason for r in self.rejected})
        super().__init__("no feasible plan; rejection reasons: " + ", ".join(reasons))
