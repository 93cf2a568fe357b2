"""Trajectories, timing, violation counting and edge connectors."""

from .cem import CemBudget, optimize_edge_stochastic
from .connectors import (
    CHEAP_BUDGET,
    CONNECTORS,
    FULL_BUDGET,
    Connector,
    DeterministicConnector,
    SamplingConnector,
    TwoStageConnector,
    evaluate_edge_deterministic,
    make_connector,
    two_stage_connect,
)
from .profiles import (
    EdgeResult,
    PiecewiseTrajectory,
    SplineTrajectory,
    StaticTrajectory,
    Trajectory,
    TrapezoidSegment,
    count_violations,
    sample_times,
    trapezoid_duration,
    trapezoid_times,
)
from .rrt import RrtConfig, sampling_connect

__all__ = [
    "CHEAP_BUDGET",
    "CONNECTORS",
    "FULL_BUDGET",
    "CemBudget",
    "Connector",
    "DeterministicConnector",
    "EdgeResult",
    "PiecewiseTrajectory",
    "RrtConfig",
    "SamplingConnector",
    "SplineTrajectory",
    "StaticTrajectory",
    "Trajectory",
    "TrapezoidSegment",
    "TwoStageConnector",
    "count_violations",
    "evaluate_edge_deterministic",
    "make_connector",
    "optimize_edge_stochastic",
    "sample_times",
    "sampling_connect",
    "trapezoid_duration",
    "trapezoid_times",
    "two_stage_connect",
]
