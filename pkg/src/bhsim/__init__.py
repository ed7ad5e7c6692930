from .adversary import (
    Action,
    BehaviorSpec,
    BlackHole,
    CooperativeBlackHole,
    GrayHole,
    Honest,
    OnOff,
    Turncoat,
)
from .cluster import ClusterManager, EnergyCosts, elect_head
from .config import ScenarioConfig, dump_config, load_config, parse_config
from .errors import (
    BhsimError,
    BookkeepingError,
    ConfigValidationError,
    LogParseError,
    NoEligibleHeadError,
    SweepRunError,
)
from .metrics import EventLogRecord, MetricsReport, oracle_replay, read_log, recount
from .sim.engine import Simulator, run
from .trust import FaultTolerance, TrustTable, compute_tf, drops_to_detection

__all__ = [
    "Action",
    "BehaviorSpec",
    "BhsimError",
    "BlackHole",
    "BookkeepingError",
    "ClusterManager",
    "ConfigValidationError",
    "CooperativeBlackHole",
    "EnergyCosts",
    "EventLogRecord",
    "FaultTolerance",
    "GrayHole",
    "Honest",
    "LogParseError",
    "MetricsReport",
    "NoEligibleHeadError",
    "OnOff",
    "ScenarioConfig",
    "Simulator",
    "SweepRunError",
    "TrustTable",
    "Turncoat",
    "compute_tf",
    "drops_to_detection",
    "dump_config",
    "elect_head",
    "load_config",
    "oracle_replay",
    "parse_config",
    "read_log",
    "recount",
    "run",
]
