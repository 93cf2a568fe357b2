"""Budgeted bidirectional RRT (RRT-Connect) between two joint states.

The search runs inside the box spanned by start and goal (each joint stays
between its origin and target value), so the rotation direction chosen by
the unwrapped target is respected. Paths are shortcut-smoothed and timed
segment by segment with rest-to-rest trapezoids.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from ..model import Composition, UnwrappedTarget
from ..world import Payload, Scenario, collision_mask
from .profiles import EdgeResult, PiecewiseTrajectory, StaticTrajectory, TrapezoidSegment, count_violations


@dataclass(frozen=True)
class RrtConfig:
    time_budget: float = 0.5
    max_iterations: int = 2000
    step: float = 0.3
    goal_bias: float = 0.1
    resolution: float = 0.05
    shortcut_passes: int = 50

    def __post_init__(self):
        if not self.time_budget > 0:
            raise ValueError("time_budget must be > 0")
        if self.max_iterations < 1 or self.step <= 0 or self.resolution <= 0:
            raise ValueError("iterations, step and resolution must be positive")
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ValueError("goal_bias must lie in [0, 1]")


class _Checker:
    def __init__(self, comp, s, payload, resolution):
        self.comp = comp
        self.s = s
        self.payload = payload
        self.resolution = resolution
        self.calls = 0

    def states_free(self, Q) -> np.ndarray:
        return ~collision_mask(self.comp, Q, self.s, self.payload)

    def segment_free(self, a, b) -> bool:
        """Checks the motion actually executed between a and b (a timed
        trapezoid segment, which stays close to the chord)."""
        self.calls += 1
        span = float(np.abs(b - a).max())
        if span == 0.0:
            return bool(self.states_free(a[None])[0])
        seg = TrapezoidSegment(a, b, self.comp.v_max, self.comp.a_max)
        k = max(2, math.ceil(span / self.resolution) + 1)
        q = seg.evaluate(np.linspace(0.0, seg.duration, k))[0]
        return not collision_mask(self.comp, q, self.s, self.payload).any()


class _Tree:
    def __init__(self, root, cap):
        self.nodes = np.empty((cap + 1, len(root)))
        self.parent = np.full(cap + 1, -1, dtype=int)
        self.nodes[0] = root
        self.size = 1

    def nearest(self, q) -> int:
        d = np.abs(self.nodes[: self.size] - q).max(axis=1)
        return int(np.argmin(d))

    def add(self, q, parent) -> int:
        i = self.size
        self.nodes[i] = q
        self.parent[i] = parent
        self.size += 1
        return i

    def path_to_root(self, i) -> list:
        out = []
        while i >= 0:
            out.append(self.nodes[i].copy())
            i = self.parent[i]
        return out


def _steer(a, b, step):
    d = b - a
    span = np.abs(d).max()
    if span <= step:
        return b.copy(), True
    return a + d * (step / span), False


def _extend(tree, q, chk, step):
    """Returns (status, index): status in {'reached', 'advanced', 'trapped'}."""
    near = tree.nearest(q)
    new, reached = _steer(tree.nodes[near], q, step)
    if not chk.segment_free(tree.nodes[near], new):
        return "trapped", -1
    i = tree.add(new, near)
    return ("reached" if reached else "advanced"), i


def _connect(tree, q, chk, step):
    while True:
        status, i = _extend(tree, q, chk, step)
        if status != "advanced":
            return status, i


def rrt_connect(q_s, q_t, chk: _Checker, cfg: RrtConfig, rng: np.random.Generator, deadline: float):
    """Collision-free waypoint list from q_s to q_t, or None on budget exhaustion."""
    lo, hi = np.minimum(q_s, q_t), np.maximum(q_s, q_t)
    ta, tb = _Tree(q_s, cfg.max_iterations * 64), _Tree(q_t, cfg.max_iterations * 64)
    a_is_start = True
    for it in range(cfg.max_iterations):
        if time.perf_counter() > deadline:
            return None, it
        goal = tb.nodes[0]
        q_rand = goal.copy() if rng.random() < cfg.goal_bias else rng.uniform(lo, hi)
        status, i = _extend(ta, q_rand, chk, cfg.step)
        if status != "trapped":
            status_b, j = _connect(tb, ta.nodes[i], chk, cfg.step)
            if status_b == "reached":
                pa = ta.path_to_root(i)[::-1]
                pb = tb.path_to_root(j)[1:]
                path = pa + pb
                return (path if a_is_start else path[::-1]), it + 1
        ta, tb = tb, ta
        a_is_start = not a_is_start
    return None, cfg.max_iterations


def shortcut(path: list, chk: _Checker, passes: int, rng: np.random.Generator) -> list:
    path = list(path)
    for _ in range(passes):
        if len(path) <= 2:
            break
        i, j = sorted(rng.choice(len(path), size=2, replace=False))
        if j - i < 2:
            continue
        if chk.segment_free(path[i], path[j]):
            path = path[: i + 1] + path[j:]
    return path


def _timed(path, comp) -> PiecewiseTrajectory:
    segs = [TrapezoidSegment(a, b, comp.v_max, comp.a_max) for a, b in zip(path[:-1], path[1:])]
    return PiecewiseTrajectory(segs)


def sampling_connect(
    comp: Composition,
    q_s,
    target: UnwrappedTarget,
    s: Scenario,
    payload: Payload | None = None,
    cfg: RrtConfig = RrtConfig(),
    rng: np.random.Generator | None = None,
) -> EdgeResult:
    t0 = time.perf_counter()
    q_s = np.asarray(q_s, dtype=float)
    if not np.array_equal(q_s, target.origin):
        raise ValueError("target is not measured from q_s")
    q_t = target.q_abs
    rng = rng if rng is not None else np.random.default_rng()
    chk = _Checker(comp, s, payload, cfg.resolution)

    if np.array_equal(q_s, q_t):
        traj = StaticTrajectory(q_s)
        n_c = count_violations(traj, comp, s, payload)
        if n_c:
            return EdgeResult.infeasible(traj, n_c, time.perf_counter() - t0, iterations=0)
        return EdgeResult(True, 0.0, traj, 0, time.perf_counter() - t0, {"iterations": 0})

    # The chord first: when it is free the search has nothing to improve.
    direct = TrapezoidSegment(q_s, q_t, comp.v_max, comp.a_max)
    if count_violations(direct, comp, s, payload) == 0:
        traj = PiecewiseTrajectory([direct])
        return EdgeResult(True, traj.duration, traj, 0, time.perf_counter() - t0, {"iterations": 0, "waypoints": 2})

    if not chk.states_free(np.stack([q_s, q_t])).all():
        return EdgeResult.infeasible(None, None, time.perf_counter() - t0, iterations=0, reason="endpoint in collision")

    path, iters = rrt_connect(q_s, q_t, chk, cfg, rng, t0 + cfg.time_budget)
    if path is None:
        reason = "time budget" if iters < cfg.max_iterations else "iteration cap"
        return EdgeResult.infeasible(None, None, time.perf_counter() - t0, iterations=iters, reason=reason)

    info = {"iterations": iters}
    for candidate in (shortcut(path, chk, cfg.shortcut_passes, rng), path):
        traj = _timed(candidate, comp)
        n_c = count_violations(traj, comp, s, payload)
        if n_c == 0:
            info["waypoints"] = len(candidate)
            return EdgeResult(True, traj.duration, traj, 0, time.perf_counter() - t0, info)
    return EdgeResult.infeasible(traj, n_c, time.perf_counter() - t0, reason="replay check", **info)
