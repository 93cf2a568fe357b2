"""Composition search: enumerate module sequences, discard them with filters
of increasing cost, plan motions for the survivors and keep the fastest.

Grammar: a composition starts with a joint, never has two links in a row,
has at most ``max_modules`` modules and at most ``max_motors`` joints.
Enumeration is length-lexicographic over the library order (joints first,
then links).
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from .model import Composition, IkConfig, ModuleSpec, joint, link
from .planners import PlanOutcome, _IkCache, build_graph, run_planner
from .seeding import stable_seed
from .traj import make_connector
from .world import Scenario, TaskSequence, task_sequence

LIBRARY_SCHEMA = "cellforge-library/1"

PLANNER_CHOICES = {
    "near_optimal": ("near_optimal", "deterministic"),
    "astar": ("astar", "deterministic"),
    "greedy_spline": ("greedy", "two_stage"),
    "greedy_sampler": ("greedy", "sampling"),
}

FATES = ("min_motors", "reach", "payload", "infeasible", "feasible")


@dataclass(frozen=True)
class ModuleLibrary:
    joint_specs: tuple
    link_specs: tuple
    max_modules: int = 6
    max_motors: int = 3
    min_motors: int = 1

    def __post_init__(self):
        object.__setattr__(self, "joint_specs", tuple(self.joint_specs))
        object.__setattr__(self, "link_specs", tuple(self.link_specs))
        if any(not m.is_joint for m in self.joint_specs) or any(m.is_joint for m in self.link_specs):
            raise ValueError("joint_specs must hold joints and link_specs links")
        ids = [m.id for m in self.modules]
        if len(set(ids)) != len(ids):
            raise ValueError("module ids must be unique")
        if any("-" in i for i in ids):
            raise ValueError("module ids cannot contain '-'")
        if self.max_modules < 0 or self.max_motors < 0:
            raise ValueError("limits must be >= 0")
        if self.max_motors > self.max_modules:
            raise ValueError("max_motors cannot exceed max_modules")
        if self.min_motors < 1:
            raise ValueError("min_motors must be >= 1")

    @property
    def modules(self) -> tuple:
        return self.joint_specs + self.link_specs

    def to_dict(self) -> dict:
        return {
            "schema": LIBRARY_SCHEMA,
            "modules": [m.to_dict() for m in self.modules],
            "max_modules": self.max_modules,
            "max_motors": self.max_motors,
            "min_motors": self.min_motors,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModuleLibrary":
        if not isinstance(d, dict):
            raise ValueError("a module library is a JSON object")
        if d.get("schema", LIBRARY_SCHEMA) != LIBRARY_SCHEMA:
            raise ValueError(f"unsupported library schema {d.get('schema')!r}")
        mods = [ModuleSpec.from_dict(m) for m in d["modules"]]
        return cls(
            tuple(m for m in mods if m.is_joint),
            tuple(m for m in mods if not m.is_joint),
            int(d.get("max_modules", 6)),
            int(d.get("max_motors", 3)),
            int(d.get("min_motors", 1)),
        )

    @classmethod
    def load(cls, path: str | Path) -> "ModuleLibrary":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def default_library() -> ModuleLibrary:
    """A small built-in library: two motor types and three link lengths."""
    return ModuleLibrary(
        (joint("JF", 2.5, 5.0, 30.0, 0.6), joint("JS", 1.5, 3.0, 80.0, 1.0)),
        (link("L3", 0.3, 0.4), link("L4", 0.4, 0.5), link("L5", 0.5, 0.6)),
        max_modules=6,
        max_motors=3,
        min_motors=3,
    )


def enumerate_compositions(lib: ModuleLibrary) -> Iterator[Composition]:
    alphabet = lib.modules

    def grow(prefix, remaining, motors):
        if remaining == 0:
            yield Composition(tuple(prefix))
            return
        for m in alphabet:
            if m.is_joint:
                if motors >= lib.max_motors:
                    continue
                yield from grow(prefix + [m], remaining - 1, motors + 1)
            elif not prefix[-1].is_joint:
                continue
            else:
                yield from grow(prefix + [m], remaining - 1, motors)

    for length in range(1, lib.max_modules + 1):
        for first in lib.joint_specs:
            if lib.max_motors < 1:
                return
            yield from grow([first], length - 1, 1)


# -- filters ----------------------------------------------------------------------


def filter_min_motors(c: Composition, min_motors: int) -> bool:
    return c.n_q >= min_motors


def filter_reach(c: Composition, P: TaskSequence, s: Scenario, ik_cfg: IkConfig = IkConfig(), cache=None) -> bool:
    """Every pose has at least one collision-free IK solution (holding the
    box the sequence prescribes there). Reach bound checked first."""
    if c.reach < max(p.distance_from_origin() for p in P.poses):
        return False
    cache = cache or _IkCache(c, s, ik_cfg, torque_check=False)
    return all(len(cache.nodes(p, P.payload(i))) > 0 for i, p in enumerate(P.poses))


def filter_payload(c: Composition, P: TaskSequence, s: Scenario, ik_cfg: IkConfig = IkConfig(), cache=None) -> bool:
    """Every loaded pose has a collision-free IK solution whose static
    torques stay within the motor limits."""
    cache = cache or _IkCache(c, s, ik_cfg, torque_check=True)
    for i, p in enumerate(P.poses):
        pl = P.payload(i)
        if pl is not None and pl.mass > 0 and len(cache.nodes(p, pl)) == 0:
            return False
    return True


# -- pipeline -------------------------------------------------------------------------


@dataclass
class CompositionResult:
    index: int
    composition_id: str
    fate: str
    cost: float
    wall_time: float
    outcome: PlanOutcome | None = None


@dataclass
class EliminationTrace:
    counts: dict
    best_index: int | None
    best: Composition | None
    best_cost: float
    best_outcome: PlanOutcome | None
    results: list = field(default_factory=list)
    planner: str = ""
    connector: str = ""

    def to_dict(self, embed_trajectory: bool = False) -> dict:
        return {
            "planner": self.planner,
            "connector": self.connector,
            "counts": self.counts,
            "best": None
            if self.best is None
            else {
                "index": self.best_index,
                "composition": self.best.id,
                "modules": [m.to_dict() for m in self.best.modules],
                "cost": self.best_cost,
                "plan": self.best_outcome.to_dict(embed_trajectory),
            },
            "timing": {"composition_wall_times": [r.wall_time for r in self.results]},
        }


def evaluate_composition(
    index: int,
    comp: Composition,
    s: Scenario,
    min_motors: int,
    planner: str,
    connector: str,
    master_seed: int,
    ik_cfg: IkConfig = IkConfig(),
    use_filters: bool = True,
    connector_options: dict | None = None,
) -> CompositionResult:
    """Filters then motion planning for one composition, seeded by its id."""
    t0 = time.perf_counter()
    P = task_sequence(s)

    def done(fate, cost=math.inf, outcome=None):
        return CompositionResult(index, comp.id, fate, cost, time.perf_counter() - t0, outcome)

    if use_filters:
        if not filter_min_motors(comp, min_motors):
            return done("min_motors")
        if not filter_reach(comp, P, s, ik_cfg):
            return done("reach")
        if not filter_payload(comp, P, s, ik_cfg):
            return done("payload")
    rng = np.random.default_rng(stable_seed(master_seed, comp.id))
    graph = build_graph(comp, P, s, ik_cfg) if planner != "greedy" else None
    con = make_connector(connector, (connector_options or {}).get(connector))
    out = run_planner(planner, comp, P, s, con, rng, ik_cfg, graph)
    return done("feasible" if out.feasible else "infeasible", out.cost, out)


def _task(args):
    return evaluate_composition(*args)


def optimize_composition(
    s: Scenario,
    lib: ModuleLibrary,
    planner_choice: str = "near_optimal",
    master_seed: int = 0,
    map_fn: Callable = map,
    ik_cfg: IkConfig = IkConfig(),
    connector: str | None = None,
    use_filters: bool = True,
    connector_options: dict | None = None,
) -> EliminationTrace:
    """Fastest composition for the scenario; ties go to the earlier one."""
    if planner_choice not in PLANNER_CHOICES:
        raise ValueError(f"unknown planner {planner_choice!r}; expected one of {', '.join(PLANNER_CHOICES)}")
    planner, default_connector = PLANNER_CHOICES[planner_choice]
    connector = connector or default_connector
    comps = list(enumerate_compositions(lib))
    tasks = [
        (i, c, s, lib.min_motors, planner, connector, master_seed, ik_cfg, use_filters, connector_options)
        for i, c in enumerate(comps)
    ]
    results = sorted(map_fn(_task, tasks), key=lambda r: r.index)

    fates = [r.fate for r in results]
    n = len(results)
    after_min = n - fates.count("min_motors")
    after_reach = after_min - fates.count("reach")
    after_payload = after_reach - fates.count("payload")
    counts = {
        "generated": n,
        "after_min_motors": after_min,
        "after_reach": after_reach,
        "after_payload": after_payload,
        "evaluated": after_payload,
        "feasible": fates.count("feasible"),
    }
    feasible = [r for r in results if r.fate == "feasible"]
    if not feasible:
        return EliminationTrace(counts, None, None, math.inf, None, results, planner_choice, connector)
    win = min(feasible, key=lambda r: (r.cost, r.index))
    return EliminationTrace(counts, win.index, comps[win.index], win.cost, win.outcome, results, planner_choice, connector)


def results_rows(trace: EliminationTrace) -> list[dict]:
    return [
        {
            "index": r.index,
            "composition": r.composition_id,
            "fate": r.fate,
            "cost": r.cost,
            "wall_time": r.wall_time,
        }
        for r in trace.results
    ]
