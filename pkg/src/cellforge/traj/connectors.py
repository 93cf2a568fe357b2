"""Edge connectors: the three ways of turning (q_s, target) into a timed,
checked motion. All share the call signature

    connector(comp, q_s, target, scenario, payload, rng) -> EdgeResult
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..model import Composition, UnwrappedTarget
from ..world import Payload, Scenario
from .cem import CemBudget, optimize_edge_stochastic
from .profiles import EdgeResult, StaticTrajectory, TrapezoidSegment, count_violations
from .rrt import RrtConfig, sampling_connect

CHEAP_BUDGET = CemBudget(n_iter=10, population=32)
FULL_BUDGET = CemBudget(n_iter=100, population=64)


def evaluate_edge_deterministic(
    comp: Composition,
    q_s,
    target: UnwrappedTarget,
    s: Scenario,
    payload: Payload | None = None,
) -> EdgeResult:
    """Synchronized trapezoid from q_s to the target; feasible iff no sample collides."""
    t0 = time.perf_counter()
    q_s = np.asarray(q_s, dtype=float)
    if not np.array_equal(q_s, target.origin):
        raise ValueError("target is not measured from q_s")
    if np.array_equal(q_s, target.q_abs):
        traj = StaticTrajectory(q_s)
    else:
        traj = TrapezoidSegment(q_s, target.q_abs, comp.v_max, comp.a_max)
    n_c = count_violations(traj, comp, s, payload)
    wall = time.perf_counter() - t0
    if n_c:
        return EdgeResult.infeasible(traj, n_c, wall)
    return EdgeResult(True, traj.duration, traj, 0, wall)


def two_stage_connect(
    comp: Composition,
    q_s,
    target: UnwrappedTarget,
    s: Scenario,
    payload: Payload | None = None,
    budgets: tuple[CemBudget, CemBudget] = (CHEAP_BUDGET, FULL_BUDGET),
    rng: np.random.Generator | None = None,
) -> EdgeResult:
    """A cheap search decides feasibility; a fresh, larger one refines the cost."""
    t0 = time.perf_counter()
    cheap, full = budgets
    rng = rng if rng is not None else np.random.default_rng()
    first = optimize_edge_stochastic(comp, q_s, target, s, payload, cheap, rng)
    if not first.feasible or first.cost == 0.0:
        first.info = dict(first.info, stages=1)
        first.wall_time = time.perf_counter() - t0
        return first
    second = optimize_edge_stochastic(comp, q_s, target, s, payload, full, rng)
    best = second if second.feasible and second.cost < first.cost else first
    best.info = dict(best.info, stages=2, stage1_cost=first.cost, stage2_cost=second.cost)
    best.wall_time = time.perf_counter() - t0
    return best


class Connector:
    """Callable edge connector with a report-friendly name."""

    name = "abstract"
    stochastic = False

    def __call__(self, comp, q_s, target, s, payload=None, rng=None) -> EdgeResult:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"name": self.name}


class DeterministicConnector(Connector):
    name = "deterministic"

    def __call__(self, comp, q_s, target, s, payload=None, rng=None):
        return evaluate_edge_deterministic(comp, q_s, target, s, payload)


@dataclass
class TwoStageConnector(Connector):
    cheap: CemBudget = CHEAP_BUDGET
    full: CemBudget = FULL_BUDGET
    name = "two_stage"
    stochastic = True

    def __call__(self, comp, q_s, target, s, payload=None, rng=None):
        return two_stage_connect(comp, q_s, target, s, payload, (self.cheap, self.full), rng)

    def to_dict(self):
        return {"name": self.name, "cheap": vars(self.cheap), "full": vars(self.full)}


@dataclass
class SamplingConnector(Connector):
    cfg: RrtConfig = field(default_factory=RrtConfig)
    name = "sampling"
    stochastic = True

    def __call__(self, comp, q_s, target, s, payload=None, rng=None):
        return sampling_connect(comp, q_s, target, s, payload, self.cfg, rng)

    def to_dict(self):
        return {"name": self.name, **vars(self.cfg)}


CONNECTORS = ("deterministic", "two_stage", "sampling")


def make_connector(name: str, options: dict | None = None) -> Connector:
    """Builds a connector from its name and an optional options mapping
    ({"cheap": {...}, "full": {...}} or RrtConfig fields)."""
    options = dict(options or {})
    if name == "deterministic":
        return DeterministicConnector()
    if name == "two_stage":
        cheap = CemBudget(**{**vars(CHEAP_BUDGET), **options.get("cheap", {})})
        full = CemBudget(**{**vars(FULL_BUDGET), **options.get("full", {})})
        return TwoStageConnector(cheap, full)
    if name == "sampling":
        return SamplingConnector(RrtConfig(**options))
    raise ValueError(f"unknown connector {name!r}; expected one of {', '.join(CONNECTORS)}")
