"""healsim: epoch-driven simulation and analysis of self-healing trade-offs.

A crash-fault network where every node gossips a bounded partial view,
monitors other nodes through descriptor staleness, aggregates everyone's
data records, and optionally corrects detected faults by rolling the failed
supplier's contribution back out of the aggregates. The package profiles
the false-positive/false-negative cost of those decisions and calibrates
predictors of the resulting aggregation error.
"""

from .faultmodel import (
    CostSummary,
    CostWeights,
    FaultPlan,
    PairRecord,
    PairState,
    RecoveryModel,
    Scenario,
    classify_scenario,
    pair_state_at,
    relative_costs,
    scenario_frequencies,
    tolerance_is_costless,
    total_cost,
)
from .gossip import Descriptor, GossipConfig, PeerSampling, freshest_seen
from .simkernel import FaultProfileSpec, SimConfig, SimTrace, build_fault_plan, run

__version__ = "0.1.0"

__all__ = [
    "CostSummary",
    "CostWeights",
    "Descriptor",
    "FaultPlan",
    "FaultProfileSpec",
    "GossipConfig",
    "PairRecord",
    "PairState",
    "PeerSampling",
    "RecoveryModel",
    "Scenario",
    "SimConfig",
    "SimTrace",
    "build_fault_plan",
    "classify_scenario",
    "freshest_seen",
    "pair_state_at",
    "relative_costs",
    "run",
    "scenario_frequencies",
    "tolerance_is_costless",
    "total_cost",
]
