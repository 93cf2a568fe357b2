"""Motion-level planners over the layered graph of IK solutions.

Layer i holds the collision-free IK solutions of task pose i. An edge
(u, v) between consecutive layers can be travelled in 2**n_q ways (each
joint turns either way round); its cost is the best way's connector cost.

* ``plan_near_optimal``: Dijkstra from a virtual source into layer 0,
  evaluating edges lazily when their tail node is settled.
* ``plan_astar``: same search ordered by g + h, h a velocity bound to the
  closest final-layer node.
* ``plan_greedy``: commit to the first feasible connection, nearest first.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .model import TWO_PI, Composition, IkConfig, Pose2, UnwrappedTarget, inverse_kinematics, static_payload_torques, wrap
from .seeding import draw_base, edge_rng
from .traj import Connector, EdgeResult, make_connector, trapezoid_duration
from .world import Payload, Scenario, TaskSequence, collision_mask

PLANNERS = ("near_optimal", "astar", "greedy")
GREEDY_METRICS = ("euclidean", "time")


def extend(q_s, q_e) -> list[UnwrappedTarget]:
    """All 2**n_q unwrapped targets reaching q_e from q_s.

    Per joint: the short way d = wrap(q_e - q_s) and the long way
    d - 2*pi*sgn(d), with sgn(0) = +1. Order follows itertools.product
    with the short way first.
    """
    q_s = np.asarray(q_s, dtype=float)
    q_e = np.asarray(q_e, dtype=float)
    if q_s.shape != q_e.shape:
        raise ValueError("joint vectors differ in length")
    d = wrap(q_e - q_s)
    alt = d - TWO_PI * np.where(d >= 0, 1.0, -1.0)
    options = [(q_s[i] + d[i], q_s[i] + alt[i]) for i in range(len(d))]
    return [UnwrappedTarget(np.array(c), q_s) for c in itertools.product(*options)]


def heuristic(u, v, v_max) -> float:
    """Lower bound on the travel time between u and v over all ways."""
    d = np.abs(wrap(np.asarray(v, dtype=float) - np.asarray(u, dtype=float)))
    return float(np.max(d / np.asarray(v_max, dtype=float))) if d.size else 0.0


@dataclass
class EdgeChoice:
    result: EdgeResult
    target: UnwrappedTarget | None
    way: int
    calls: int = 0


def best_way_cost(connector, comp, u, v, s, payload=None, rng=None) -> EdgeChoice:
    """Evaluates every way from u to v; keeps the cheapest (ties: lower way index).

    ``rng`` is a Generator shared by all ways, or a callable way -> Generator.

    Every connector's cost is bounded below by the trapezoid time of its
    displacement, so with per-way generators the ways are visited in order
    of that bound and skipped once they cannot win; the returned choice is
    the same as evaluating all of them.
    """
    targets = extend(u, v)
    if callable(rng):
        bounds = [trapezoid_duration(t.delta, comp.v_max, comp.a_max) for t in targets]
        order = sorted(range(len(targets)), key=lambda k: (bounds[k], k))
    else:
        bounds = [0.0] * len(targets)
        order = range(len(targets))
    best = None
    calls = 0
    for k in order:
        if best is not None and (bounds[k], k) > (best.result.cost, best.way):
            continue
        tgt = targets[k]
        g = rng(k) if callable(rng) else rng
        res = connector(comp, tgt.origin, tgt, s, payload, g)
        calls += 1
        if res.feasible and (best is None or (res.cost, k) < (best.result.cost, best.way)):
            best = EdgeChoice(res, tgt, k)
    if best is None:
        return EdgeChoice(EdgeResult.infeasible(None, None), None, -1, calls)
    best.calls = calls
    return best


# -- graph ----------------------------------------------------------------------


def _admissible_nodes(comp, sols, s, payload, torque_check):
    if not sols:
        return np.empty((0, comp.n_q))
    Q = np.array(sols)
    keep = ~collision_mask(comp, Q, s, payload)
    if torque_check and payload is not None and payload.mass > 0:
        for k in np.flatnonzero(keep):
            if np.any(static_payload_torques(comp, Q[k], payload.mass) > comp.tau_max):
                keep[k] = False
    return Q[keep]


@dataclass
class MotionGraph:
    """Per-pose IK layers; ``payloads[i]`` is carried into and at pose i."""

    layers: list
    payloads: list

    @classmethod
    def from_layers(cls, layers, payloads=None) -> "MotionGraph":
        layers = [np.atleast_2d(np.asarray(L, dtype=float)) for L in layers]
        return cls(layers, list(payloads) if payloads is not None else [None] * len(layers))

    @property
    def n_p(self) -> int:
        return len(self.layers)

    @property
    def feasible(self) -> bool:
        return all(len(L) > 0 for L in self.layers)

    @property
    def n_nodes(self) -> int:
        return sum(len(L) for L in self.layers)

    @property
    def n_edges(self) -> int:
        return sum(len(a) * len(b) for a, b in zip(self.layers[:-1], self.layers[1:]))


class _IkCache:
    def __init__(self, comp, s, ik_cfg, torque_check):
        self.comp, self.s, self.cfg, self.torque_check = comp, s, ik_cfg, torque_check
        self._memo = {}

    def nodes(self, pose: Pose2, payload: Payload | None) -> np.ndarray:
        key = (pose.x, pose.y, pose.phi, payload)
        if key not in self._memo:
            sols = inverse_kinematics(self.comp, pose, self.cfg)
            self._memo[key] = _admissible_nodes(self.comp, sols, self.s, payload, self.torque_check)
        return self._memo[key]


def build_graph(
    comp: Composition,
    P: TaskSequence,
    s: Scenario,
    ik_cfg: IkConfig = IkConfig(),
    torque_check: bool = True,
) -> MotionGraph:
    """IK layers filtered to collision-free (and, when carrying, torque-feasible) nodes."""
    if P.n_p < 1:
        raise ValueError("need at least one task pose")
    cache = _IkCache(comp, s, ik_cfg, torque_check)
    payloads = [P.payload(i) for i in range(P.n_p)]
    return MotionGraph([cache.nodes(p, pl) for p, pl in zip(P.poses, payloads)], payloads)


# -- outcomes -----------------------------------------------------------------


@dataclass
class PlanStats:
    nodes: int = 0
    edges_evaluated: int = 0
    connector_calls: int = 0
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {"nodes": self.nodes, "edges_evaluated": self.edges_evaluated, "connector_calls": self.connector_calls}


@dataclass
class Segment:
    target: UnwrappedTarget
    result: EdgeResult


@dataclass
class PlanOutcome:
    cost: float
    plan: list | None
    stats: PlanStats = field(default_factory=PlanStats)
    start: np.ndarray | None = None
    planner: str = ""

    def __post_init__(self):
        if math.isfinite(self.cost) != (self.plan is not None):
            raise ValueError("a finite cost needs a plan and vice versa")

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.cost)

    def trajectory(self):
        """The whole motion as one piecewise trajectory (None when infeasible or empty)."""
        from .traj import PiecewiseTrajectory

        if not self.plan:
            return None
        return PiecewiseTrajectory([seg.result.trajectory for seg in self.plan])

    def to_dict(self, embed_trajectory: bool = False) -> dict:
        """JSON-ready dict. Wall-clock values live under "timing" only."""
        segs = None
        if self.plan is not None:
            segs = []
            for seg in self.plan:
                d = seg.result.to_dict(embed_trajectory)
                d["target"] = seg.target.to_dict()
                segs.append(d)
        timing = {"wall_time": self.stats.wall_time}
        if self.plan:
            timing["edge_wall_times"] = [seg.result.wall_time for seg in self.plan]
        return {
            "planner": self.planner,
            "cost": self.cost if self.feasible else None,
            "feasible": self.feasible,
            "start": None if self.start is None else self.start.tolist(),
            "segments": segs,
            "stats": self.stats.to_dict(),
            "timing": timing,
        }


def _infeasible(stats, t0, planner):
    stats.wall_time = time.perf_counter() - t0
    return PlanOutcome(math.inf, None, stats, None, planner)


def _as_connector(connector) -> Connector:
    return make_connector(connector) if isinstance(connector, str) else connector


# -- graph search -----------------------------------------------------------------


def _search(comp, graph: MotionGraph, s, connector, rng, use_heuristic: bool, name: str) -> PlanOutcome:
    t0 = time.perf_counter()
    connector = _as_connector(connector)
    stats = PlanStats(nodes=graph.n_nodes)
    if not graph.feasible:
        return _infeasible(stats, t0, name)
    base = draw_base(rng)
    last = graph.n_p - 1
    final = graph.layers[last]

    def h(layer, idx):
        if not use_heuristic or layer == last:
            return 0.0
        d = np.abs(wrap(final - graph.layers[layer][idx]))
        return float(np.min(np.max(d / comp.v_max, axis=1)))

    edges: dict = {}
    g = {}
    parent = {}
    heap = []
    for i in range(len(graph.layers[0])):
        g[(0, i)] = 0.0
        heapq.heappush(heap, (h(0, i), 0, i))
    settled = set()
    goal = None
    while heap:
        _, neg_layer, i = heapq.heappop(heap)
        layer = -neg_layer
        node = (layer, i)
        if node in settled:
            continue
        settled.add(node)
        if layer == last:
            goal = node
            break
        nxt = layer + 1
        payload = graph.payloads[nxt]
        for j in range(len(graph.layers[nxt])):
            if (nxt, j) in settled:
                continue
            key = (layer, i, j)
            ch = edges.get(key)
            if ch is None:
                ch = best_way_cost(
                    connector,
                    comp,
                    graph.layers[layer][i],
                    graph.layers[nxt][j],
                    s,
                    payload,
                    lambda way, k=(nxt, i, j): edge_rng(base, k[0], k[1], k[2], way),
                )
                edges[key] = ch
                stats.edges_evaluated += 1
                stats.connector_calls += ch.calls
            if not ch.result.feasible:
                continue
            cand = g[node] + ch.result.cost
            if cand < g.get((nxt, j), math.inf):
                g[(nxt, j)] = cand
                parent[(nxt, j)] = (node, key)
                heapq.heappush(heap, (cand + h(nxt, j), -nxt, j))
    if goal is None:
        return _infeasible(stats, t0, name)

    plan = []
    node = goal
    while node in parent:
        prev, key = parent[node]
        ch = edges[key]
        plan.append(Segment(ch.target, ch.result))
        node = prev
    plan.reverse()
    stats.wall_time = time.perf_counter() - t0
    start = graph.layers[0][node[1]].copy()
    return PlanOutcome(g[goal], plan, stats, start, name)


def _graph_for(comp, P, s, ik_cfg, graph):
    return graph if graph is not None else build_graph(comp, P, s, ik_cfg)


def plan_near_optimal(comp, P, s, connector="deterministic", rng=None, ik_cfg=IkConfig(), graph=None) -> PlanOutcome:
    """Optimal cost over all start configurations, layer paths and ways."""
    t0 = time.perf_counter()
    graph = _graph_for(comp, P, s, ik_cfg, graph)
    out = _search(comp, graph, s, connector, rng, False, "near_optimal")
    out.stats.wall_time = time.perf_counter() - t0
    return out


def plan_astar(comp, P, s, connector="deterministic", rng=None, ik_cfg=IkConfig(), graph=None) -> PlanOutcome:
    t0 = time.perf_counter()
    graph = _graph_for(comp, P, s, ik_cfg, graph)
    out = _search(comp, graph, s, connector, rng, True, "astar")
    out.stats.wall_time = time.perf_counter() - t0
    return out


# -- greedy -------------------------------------------------------------------------


def _min_norm_index(Q: np.ndarray) -> int:
    keys = [(float(np.linalg.norm(q)), tuple(q)) for q in Q]
    return min(range(len(Q)), key=lambda k: keys[k])


def plan_greedy(
    comp,
    P,
    s,
    connector="two_stage",
    rng=None,
    ik_cfg=IkConfig(),
    graph=None,
    metric: str = "euclidean",
) -> PlanOutcome:
    """Start at the smallest-norm IK solution; for each next pose try the
    candidate targets nearest first and keep the first feasible one."""
    t0 = time.perf_counter()
    if metric not in GREEDY_METRICS:
        raise ValueError(f"unknown greedy metric {metric!r}")
    connector = _as_connector(connector)
    stats = PlanStats()
    if graph is not None:
        layer_of = lambda i: graph.layers[i]  # noqa: E731
        payload_of = lambda i: graph.payloads[i]  # noqa: E731
        n_p = graph.n_p
    else:
        cache = _IkCache(comp, s, ik_cfg, True)
        layer_of = lambda i: cache.nodes(P.poses[i], P.payload(i))  # noqa: E731
        payload_of = P.payload
        n_p = P.n_p
    base = draw_base(rng)

    first = layer_of(0)
    stats.nodes += len(first)
    if len(first) == 0:
        return _infeasible(stats, t0, "greedy")
    u = _min_norm_index(first)
    q_s = first[u]
    start = q_s.copy()
    plan = []
    total = 0.0
    for i in range(1, n_p):
        Q = layer_of(i)
        stats.nodes += len(Q)
        cands = []
        for j, v in enumerate(Q):
            for way, tgt in enumerate(extend(q_s, v)):
                if metric == "euclidean":
                    dist = float(np.linalg.norm(tgt.delta))
                else:
                    dist = float(np.max(np.abs(tgt.delta) / comp.v_max))
                cands.append((dist, tuple(tgt.q_abs), j, way, tgt))
        cands.sort(key=lambda c: c[:4])
        accepted = None
        tried = set()
        for _, _, j, way, tgt in cands:
            stats.connector_calls += 1
            tried.add(j)
            res = connector(comp, q_s, tgt, s, payload_of(i), edge_rng(base, i, u, j, way))
            if res.feasible:
                accepted = (j, tgt, res)
                break
        stats.edges_evaluated += len(tried)
        if accepted is None:
            return _infeasible(stats, t0, "greedy")
        j, tgt, res = accepted
        plan.append(Segment(tgt, res))
        total += res.cost
        u, q_s = j, Q[j]
    stats.wall_time = time.perf_counter() - t0
    return PlanOutcome(total, plan, stats, start, "greedy")


def run_planner(name: str, comp, P, s, connector, rng=None, ik_cfg=IkConfig(), graph=None, **kw) -> PlanOutcome:
    if name in ("near_optimal", "dijkstra"):
        return plan_near_optimal(comp, P, s, connector, rng, ik_cfg, graph)
    if name == "astar":
        return plan_astar(comp, P, s, connector, rng, ik_cfg, graph)
    if name == "greedy":
        return plan_greedy(comp, P, s, connector, rng, ik_cfg, graph, **kw)
    raise ValueError(f"unknown planner {name!r}; expected one of {', '.join(PLANNERS)}")
