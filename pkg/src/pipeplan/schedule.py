import enum


class ExecutionMode(str, enum.Enum):
    SYNC = "sync"
    ASYNC = "async"


class ScheduleKind(str, enum.Enum):
    """The four intra-batch pipeline schedules.

    Values are the names used in files, reports and on the command line.
    """

    ONE_F_ONE_B_AS = "1F1B-AS"
    FBP_AS = "FBP-AS"
    ONE_F_ONE_B_SNO = "1F1B-SNO"
    ONE_F_ONE_B_SO = "1F1B-SO"

    @property
    def mode(self):
        if self in (ScheduleKind.ONE_F_ONE_B_AS, ScheduleKind.FBP_AS):
            return ExecutionMode.ASYNC
        return ExecutionMode.SYNC

    @property
    def is_async(self):
        return self.mode is ExecutionMode.ASYNC

    @property
    def buffer_multiplier(self):
        """Activation buffers per downstream stage: 2 for FBP-AS and 1F1B-SO."""
        return 2 if self in (ScheduleKind.FBP_AS, ScheduleKind.ONE_F_ONE_B_SO) else 1

    @classmethod
    def parse(cls, text):
        key = text.strip().upper().replace("_", "-")
        for kind in cls:
            if kind.value.upper() == key:
                return kind
        raise ValueError(f"unknown schedule {text!r}; expected one of "
                         + ", ".join(k.value for k in cls))

    def __str__(self):
        return self.value


ALL_KINDS = tuple(ScheduleKind)
