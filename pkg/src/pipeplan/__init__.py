"""Pipeline-parallel training planner for chains of accelerators."""

__version__ = "0.1.0"

from .cost_models import (CostEstimate, bandwidth_demand, bubble_fraction, estimate,
                          features_memory, minibatch_time, weights_memory)
from .errors import (IncompatibleSchedule, Infeasible, InfeasibleShape, InvalidPlan,
                     NoFeasiblePlan, ParseError, PipeplanError, SchemaError)
from .explorer import ExplorationResult, candidate_Ms, explore, feasible_kinds
from .partitioner import (CoarseNetwork, balance_partition, coarsen_by_comm,
                          detect_comm_bottleneck, ideal_stage_time, inter_layer_partition,
                          intra_layer_refine, memory_fine_tune)
from .plan import PartitionPlan, StageAssignment, load_plan, save_plan, validate_plan
from .profiles import (AcceleratorSpec, ClusterSpec, LayerProfile, NetworkProfile, TrainingConfig,
                       load_cluster, load_network, synth_chain_cluster, synth_uniform_network)
from .schedule import ExecutionMode, ScheduleKind
from .simulator import Event, EventKind, Timeline, export_gantt, memory_highwater, simulate
