"""Joint-space trajectories, trapezoidal timing and violation counting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from ..model import Composition
from ..world import Payload, Scenario, collision_mask

# Violation sampling: T/200, never finer than 1 ms.
SAMPLE_DIVISIONS = 200
SAMPLE_FLOOR = 1e-3
LIMIT_SLACK = 1e-9


def trapezoid_times(delta, v_max, a_max) -> np.ndarray:
    """Per-joint rest-to-rest minimum time under velocity and acceleration limits."""
    d = np.abs(np.asarray(delta, dtype=float))
    v = np.broadcast_to(np.asarray(v_max, dtype=float), d.shape)
    a = np.broadcast_to(np.asarray(a_max, dtype=float), d.shape)
    if np.any(v <= 0) or np.any(a <= 0):
        raise ValueError("velocity and acceleration limits must be > 0")
    with np.errstate(invalid="ignore", divide="ignore"):
        cruise = d / v + v / a
        tri = 2.0 * np.sqrt(d / a)
    t = np.where(d >= v * v / a, cruise, tri)
    return np.where(d == 0.0, 0.0, t)


def trapezoid_duration(delta, v_max, a_max) -> float:
    """Synchronized duration: the slowest joint's trapezoid/triangle time."""
    t = trapezoid_times(delta, v_max, a_max)
    return float(t.max()) if t.size else 0.0


def sample_times(duration: float, delta: float | None = None) -> np.ndarray:
    """Uniform sample instants covering [0, duration], spacing at most ``delta``.

    The default spacing is duration/200 with a 1 ms floor.
    """
    if duration <= 0:
        return np.zeros(1)
    if delta is None:
        delta = max(duration / SAMPLE_DIVISIONS, SAMPLE_FLOOR)
    if delta <= 0:
        raise ValueError("sampling resolution must be > 0")
    m = max(1, math.ceil(duration / delta - 1e-9))
    return np.linspace(0.0, duration, m + 1)


class Trajectory:
    """Timed motion in unwrapped joint space."""

    duration: float
    start: np.ndarray
    end: np.ndarray

    def evaluate(self, t) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        raise NotImplementedError

    def sample(self, delta: float | None = None):
        t = sample_times(self.duration, delta)
        return (t,) + self.evaluate(t)

    def to_csv(self, path: str | Path, delta: float | None = None) -> None:
        t, q, qd, qdd = self.sample(delta)
        n = q.shape[1]
        header = ["t"] + [f"q{i}" for i in range(n)] + [f"qd{i}" for i in range(n)] + [f"qdd{i}" for i in range(n)]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(len(t)):
                w.writerow([repr(float(t[k]))] + [repr(float(v)) for v in (*q[k], *qd[k], *qdd[k])])


class StaticTrajectory(Trajectory):
    def __init__(self, q):
        self.start = self.end = np.asarray(q, dtype=float)
        self.duration = 0.0

    def evaluate(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        q = np.broadcast_to(self.start, (len(t), len(self.start))).copy()
        z = np.zeros_like(q)
        return q, z, z.copy()


class TrapezoidSegment(Trajectory):
    """Rest-to-rest motion with every joint on its own trapezoid, all
    stretched to a common duration (the slowest joint's minimum by default).

    Stretched joints keep their acceleration limit and cruise slower, so
    the joint-space path stays within the box spanned by the endpoints.
    """

    def __init__(self, q0, q1, v_max, a_max, duration: float | None = None):
        self.start = np.asarray(q0, dtype=float)
        self.end = np.asarray(q1, dtype=float)
        d = self.end - self.start
        v = np.broadcast_to(np.asarray(v_max, dtype=float), d.shape)
        a = np.broadcast_to(np.asarray(a_max, dtype=float), d.shape)
        t_min = trapezoid_duration(d, v, a)
        T = t_min if duration is None else float(duration)
        if T < t_min - 1e-12:
            raise ValueError("duration below the time-optimal bound")
        self.duration = T
        dist = np.abs(d)
        moving = dist > 0
        self._sign = np.sign(d)
        self._a = np.where(moving, a, 0.0)
        if T > 0:
            with np.errstate(invalid="ignore", divide="ignore"):
                disc = np.maximum(T * T - 4.0 * dist / a, 0.0)
                vc = 0.5 * a * (T - np.sqrt(disc))
            self._vc = np.where(moving, np.minimum(vc, v), 0.0)
            self._ta = np.where(moving, self._vc / np.where(moving, a, 1.0), 0.0)
        else:
            self._vc = np.zeros_like(d)
            self._ta = np.zeros_like(d)

    def evaluate(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))[:, None]
        T = self.duration
        a, vc, ta, sgn = self._a, self._vc, self._ta, self._sign
        tau = T - t
        acc_phase = t < ta
        dec_phase = tau < ta
        pos = np.where(
            acc_phase,
            0.5 * a * t * t,
            np.where(dec_phase, np.abs(self.end - self.start) - 0.5 * a * tau * tau, 0.5 * a * ta * ta + vc * (t - ta)),
        )
        vel = np.where(acc_phase, a * t, np.where(dec_phase, a * tau, vc))
        acc = np.where(acc_phase, a, np.where(dec_phase, -a, 0.0))
        q = self.start + sgn * pos
        if T > 0:
            q = np.where(t >= T, self.end, q)
        return q, sgn * vel, sgn * acc


class SplineTrajectory(Trajectory):
    """Clamped cubic spline through ``values`` at ``knots`` (seconds)."""

    def __init__(self, knots, values):
        knots = np.asarray(knots, dtype=float)
        values = np.asarray(values, dtype=float)
        self._spline = CubicSpline(knots, values, bc_type="clamped", axis=0)
        self.knots = knots
        self.values = values
        self.start = values[0]
        self.end = values[-1]
        self.duration = float(knots[-1] - knots[0])
        self._t0 = float(knots[0])

    def evaluate(self, t):
        t = np.clip(np.atleast_1d(np.asarray(t, dtype=float)) + self._t0, self.knots[0], self.knots[-1])
        return self._spline(t), self._spline(t, 1), self._spline(t, 2)


class PiecewiseTrajectory(Trajectory):
    def __init__(self, segments: Sequence[Trajectory]):
        if not segments:
            raise ValueError("need at least one segment")
        self.segments = list(segments)
        self._ends = np.cumsum([s.duration for s in self.segments])
        self.duration = float(self._ends[-1])
        self.start = self.segments[0].start
        self.end = self.segments[-1].end

    @property
    def waypoints(self) -> np.ndarray:
        return np.array([self.start] + [s.end for s in self.segments])

    def evaluate(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = np.minimum(np.searchsorted(self._ends, t, side="left"), len(self.segments) - 1)
        n = len(self.start)
        q = np.empty((len(t), n))
        qd = np.empty((len(t), n))
        qdd = np.empty((len(t), n))
        starts = np.concatenate([[0.0], self._ends[:-1]])
        for k in np.unique(idx):
            sel = idx == k
            q[sel], qd[sel], qdd[sel] = self.segments[k].evaluate(t[sel] - starts[k])
        return q, qd, qdd


def limit_violations(qd: np.ndarray, qdd: np.ndarray, comp: Composition) -> np.ndarray:
    over_v = np.abs(qd) > comp.v_max * (1 + LIMIT_SLACK) + LIMIT_SLACK
    over_a = np.abs(qdd) > comp.a_max * (1 + LIMIT_SLACK) + LIMIT_SLACK
    return np.any(over_v | over_a, axis=1)


def count_violations(
    traj: Trajectory,
    comp: Composition,
    s: Scenario,
    payload: Payload | None = None,
    delta: float | None = None,
) -> int:
    """Number of sampled instants that collide or break a joint limit."""
    t = sample_times(traj.duration, delta)
    q, qd, qdd = traj.evaluate(t)
    bad = collision_mask(comp, q, s, payload) | limit_violations(qd, qdd, comp)
    return int(bad.sum())


@dataclass
class EdgeResult:
    feasible: bool
    cost: float
    trajectory: Trajectory | None
    n_c: int | None
    wall_time: float = 0.0
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.feasible != math.isfinite(self.cost):
            raise ValueError("feasible results need a finite cost and vice versa")
        if self.feasible and self.n_c != 0:
            raise ValueError("a feasible result cannot carry violations")

    @classmethod
    def infeasible(cls, trajectory=None, n_c=None, wall_time=0.0, **info) -> "EdgeResult":
        return cls(False, math.inf, trajectory, n_c, wall_time, info)

    def to_dict(self, embed_trajectory: bool = False) -> dict:
        d = {
            "feasible": self.feasible,
            "cost": self.cost if self.feasible else None,
            "n_c": self.n_c,
            "info": self.info,
        }
        if embed_trajectory and self.trajectory is not None:
            t, q, qd, qdd = self.trajectory.sample()
            d["trajectory"] = {"t": t.tolist(), "q": q.tolist(), "qd": qd.tolist(), "qdd": qdd.tolist()}
        return d
