"""Cross-entropy search over via points of a clamped cubic spline.

A candidate is a set of interior via points (joint values) plus their
normalized times. The spline is defined on s in [0, 1] with zero end
slopes; each candidate is then uniformly time-scaled to the shortest
duration that respects the joint velocity and acceleration limits, and
scored with ``duration + 100 * (number of colliding samples)``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .._kernels import spline_values_kernel
from ..model import Composition, UnwrappedTarget
from ..world import Payload, Scenario, collision_mask
from .profiles import (
    SAMPLE_DIVISIONS,
    SAMPLE_FLOOR,
    EdgeResult,
    SplineTrajectory,
    StaticTrajectory,
    TrapezoidSegment,
    count_violations,
)

VIOLATION_WEIGHT = 100.0


@dataclass(frozen=True)
class CemBudget:
    n_iter: int = 100
    population: int = 64
    n_via: int = 3
    elite_frac: float = 0.125
    smoothing: float = 0.7
    via_std: float = 0.3
    via_std_rel: float = 0.15
    timing_std: float = 0.4

    def __post_init__(self):
        if self.n_iter < 1 or self.population < 2 or self.n_via < 1:
            raise ValueError("budget must be positive (population >= 2)")


# -- batched clamped cubic splines -----------------------------------------


def clamped_second_derivatives(knots: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Knot second derivatives M for clamped splines, batched.

    ``knots``: (N, K) increasing; ``y``: (N, K, n). Returns (N, K, n).
    """
    N, K = knots.shape
    h = np.diff(knots, axis=1)  # (N, K-1)
    slope = np.diff(y, axis=1) / h[:, :, None]  # (N, K-1, n)
    A = np.zeros((N, K, K))
    rhs = np.empty_like(y)
    idx = np.arange(N)
    A[idx, 0, 0] = 2 * h[:, 0]
    A[idx, 0, 1] = h[:, 0]
    rhs[:, 0] = 6 * slope[:, 0]
    for k in range(1, K - 1):
        A[idx, k, k - 1] = h[:, k - 1]
        A[idx, k, k] = 2 * (h[:, k - 1] + h[:, k])
        A[idx, k, k + 1] = h[:, k]
        rhs[:, k] = 6 * (slope[:, k] - slope[:, k - 1])
    A[idx, K - 1, K - 2] = h[:, -1]
    A[idx, K - 1, K - 1] = 2 * h[:, -1]
    rhs[:, K - 1] = -6 * slope[:, -1]
    return np.linalg.solve(A, rhs)


def spline_extremes(knots, y, M) -> tuple[np.ndarray, np.ndarray]:
    """Exact max |Q'| and max |Q''| per joint over [0, 1]; both (N, n)."""
    h = np.diff(knots, axis=1)[:, :, None]
    M0, M1 = M[:, :-1], M[:, 1:]
    b = np.diff(y, axis=1) / h - h * (2 * M0 + M1) / 6  # Q' at left knot of each piece
    max_acc = np.abs(M).max(axis=1)
    # Q' is quadratic per piece; interior extremum where Q'' = M0 + (M1-M0) u/h = 0
    dM = M1 - M0
    with np.errstate(divide="ignore", invalid="ignore"):
        u = -M0 * h / dM
    inside = (dM != 0) & (u > 0) & (u < h)
    u = np.where(inside, u, 0.0)
    q1_star = b + M0 * u + dM / (2 * h) * u * u
    max_vel = np.maximum(np.abs(b).max(axis=1), np.where(inside, np.abs(q1_star), 0.0).max(axis=1))
    return max_vel, max_acc


def spline_values(knots, y, M, s: np.ndarray) -> np.ndarray:
    """Positions at normalized instants ``s`` (S,) for every spline; (N, S, n)."""
    N, K = knots.shape
    piece = np.clip((s[None, :, None] >= knots[:, None, 1:-1]).sum(axis=2), 0, K - 2)  # (N, S)
    rows = np.arange(N)[:, None]
    s0 = knots[rows, piece]
    hh = knots[rows, piece + 1] - s0
    u = (s[None, :] - s0)[:, :, None]
    hh = hh[:, :, None]
    y0 = y[rows, piece]
    y1 = y[rows, piece + 1]
    m0 = M[rows, piece]
    m1 = M[rows, piece + 1]
    b = (y1 - y0) / hh - hh * (2 * m0 + m1) / 6
    return y0 + b * u + 0.5 * m0 * u * u + (m1 - m0) / (6 * hh) * u**3


# -- search --------------------------------------------------------------------


class _Problem:
    def __init__(self, comp, q_s, q_t, scenario, payload, n_via):
        self.comp = comp
        self.q_s = q_s
        self.q_t = q_t
        self.scenario = scenario
        self.payload = payload
        self.n_via = n_via
        self.n_q = len(q_s)
        # Search is centred on the synchronized trapezoid sampled at uniform
        # times, which already sits close to the free-space optimum.
        seg = TrapezoidSegment(q_s, q_t, comp.v_max, comp.a_max)
        frac = np.arange(1, n_via + 1) / (n_via + 1)
        self.chord = seg.evaluate(frac * seg.duration)[0]  # (n_via, n)

    def decode(self, z: np.ndarray):
        N = z.shape[0]
        nv, n = self.n_via, self.n_q
        via = self.chord[None] + z[:, : nv * n].reshape(N, nv, n)
        w = np.clip(z[:, nv * n :], -4.0, 4.0)
        w = np.exp(w - w.max(axis=1, keepdims=True))
        knots = np.concatenate([np.zeros((N, 1)), np.cumsum(w, axis=1) / w.sum(axis=1, keepdims=True)], axis=1)
        knots[:, -1] = 1.0
        y = np.concatenate(
            [np.broadcast_to(self.q_s, (N, 1, n)), via, np.broadcast_to(self.q_t, (N, 1, n))], axis=1
        )
        return knots, y

    def evaluate(self, z: np.ndarray):
        knots, y = self.decode(z)
        M = clamped_second_derivatives(knots, y)
        vmax, amax = spline_extremes(knots, y, M)
        comp = self.comp
        T = np.maximum(vmax / comp.v_max, np.sqrt(amax / comp.a_max)).max(axis=1)
        n_c = np.zeros(len(z), dtype=int)
        m = np.maximum(1, np.ceil(T / np.maximum(T / SAMPLE_DIVISIONS, SAMPLE_FLOOR) - 1e-9)).astype(int)
        for mm in np.unique(m):
            sel = np.flatnonzero(m == mm)
            s = np.linspace(0.0, 1.0, mm + 1)
            Q = spline_values_kernel(knots[sel], y[sel], M[sel], s)
            hit = collision_mask(self.comp, Q.reshape(-1, self.n_q), self.scenario, self.payload)
            n_c[sel] = hit.reshape(len(sel), -1).sum(axis=1)
        return T, n_c, knots, y


def optimize_edge_stochastic(
    comp: Composition,
    q_s,
    target: UnwrappedTarget,
    s: Scenario,
    payload: Payload | None = None,
    budget: CemBudget = CemBudget(),
    rng: np.random.Generator | None = None,
) -> EdgeResult:
    """Best clamped-spline motion found by cross-entropy search."""
    t0 = time.perf_counter()
    q_s = np.asarray(q_s, dtype=float)
    if not np.array_equal(q_s, target.origin):
        raise ValueError("target is not measured from q_s")
    q_t = target.q_abs
    if np.array_equal(q_s, q_t):
        traj = StaticTrajectory(q_s)
        n_c = count_violations(traj, comp, s, payload)
        if n_c:
            return EdgeResult.infeasible(traj, n_c, time.perf_counter() - t0, iterations=0)
        return EdgeResult(True, 0.0, traj, 0, time.perf_counter() - t0, {"iterations": 0})
    rng = rng if rng is not None else np.random.default_rng()

    prob = _Problem(comp, q_s, q_t, s, payload, budget.n_via)
    n, nv = prob.n_q, budget.n_via
    dim = nv * n + nv + 1
    mean = np.zeros(dim)
    std = np.concatenate(
        [np.tile(budget.via_std + budget.via_std_rel * np.abs(q_t - q_s), nv), np.full(nv + 1, budget.timing_std)]
    )
    n_elite = max(2, int(round(budget.population * budget.elite_frac)))
    best_z, best_c, best_T, best_nc = None, math.inf, math.inf, None

    for _ in range(budget.n_iter):
        z = mean + std * rng.standard_normal((budget.population, dim))
        z[0] = mean
        if best_z is not None:
            z[1] = best_z
        T, n_c, _, _ = prob.evaluate(z)
        cost = T + VIOLATION_WEIGHT * n_c
        order = np.argsort(cost, kind="stable")
        if cost[order[0]] < best_c:
            best_c = float(cost[order[0]])
            best_z = z[order[0]].copy()
            best_T, best_nc = float(T[order[0]]), int(n_c[order[0]])
        elite = z[order[:n_elite]]
        a = budget.smoothing
        mean = a * elite.mean(axis=0) + (1 - a) * mean
        std = a * elite.std(axis=0) + (1 - a) * std

    knots, y = prob.decode(best_z[None])
    traj = SplineTrajectory(knots[0] * best_T, y[0])
    n_c = count_violations(traj, comp, s, payload)
    info = {"iterations": budget.n_iter, "population": budget.population, "search_cost": best_c, "search_n_c": best_nc}
    wall = time.perf_counter() - t0
    if n_c:
        return EdgeResult.infeasible(traj, n_c, wall, **info)
    return EdgeResult(True, traj.duration, traj, 0, wall, info)
