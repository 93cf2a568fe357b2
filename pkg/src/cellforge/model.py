"""Planar modular serial-arm model.

A composition is an ordered list of joint and link modules. Joints are
revolute with unlimited travel; links are rigid segments that extend the
chain along the current heading. Gravity acts along -y.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import qmc

GRAVITY = 9.81
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ModuleSpec:
    id: str
    kind: str
    v_max: float | None = None
    a_max: float | None = None
    tau_max: float | None = None
    length: float | None = None
    mass: float = 0.0

    def __post_init__(self):
        if self.kind == "joint":
            for name in ("v_max", "a_max", "tau_max"):
                value = getattr(self, name)
                if value is None or not math.isfinite(value) or value <= 0:
                    raise ValueError(f"joint module {self.id!r}: {name} must be finite and > 0")
            if self.length is not None:
                raise ValueError(f"joint module {self.id!r} cannot have a length")
        elif self.kind == "link":
            if self.length is None or not math.isfinite(self.length) or self.length <= 0:
                raise ValueError(f"link module {self.id!r}: length must be finite and > 0")
            if any(getattr(self, n) is not None for n in ("v_max", "a_max", "tau_max")):
                raise ValueError(f"link module {self.id!r} cannot carry joint limits")
        else:
            raise ValueError(f"unknown module kind {self.kind!r}")
        if not math.isfinite(self.mass) or self.mass < 0:
            raise ValueError(f"module {self.id!r}: mass must be finite and >= 0")

    @property
    def is_joint(self) -> bool:
        return self.kind == "joint"

    def to_dict(self) -> dict:
        d = {"id": self.id, "kind": self.kind}
        if self.is_joint:
            d.update(v_max=self.v_max, a_max=self.a_max, tau_max=self.tau_max)
        else:
            d["length"] = self.length
        d["mass"] = self.mass
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModuleSpec":
        return cls(
            id=str(d["id"]),
            kind=d["kind"],
            v_max=d.get("v_max"),
            a_max=d.get("a_max"),
            tau_max=d.get("tau_max"),
            length=d.get("length"),
            mass=float(d.get("mass", 0.0)),
        )


def joint(id: str, v_max: float, a_max: float, tau_max: float, mass: float = 0.0) -> ModuleSpec:
    return ModuleSpec(id=id, kind="joint", v_max=v_max, a_max=a_max, tau_max=tau_max, mass=mass)


def link(id: str, length: float, mass: float = 0.0) -> ModuleSpec:
    return ModuleSpec(id=id, kind="link", length=length, mass=mass)


@dataclass(frozen=True, eq=False)
class Composition:
    """Ordered modules of a serial arm, base first.

    Derived arrays are cached on construction; the composition is immutable.
    """

    modules: tuple[ModuleSpec, ...]
    n_q: int = field(init=False)
    v_max: np.ndarray = field(init=False, repr=False)
    a_max: np.ndarray = field(init=False, repr=False)
    tau_max: np.ndarray = field(init=False, repr=False)
    link_lengths: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        modules = tuple(self.modules)
        object.__setattr__(self, "modules", modules)
        if not modules or not modules[0].is_joint:
            raise ValueError("a composition must start with a joint module")
        joints = [m for m in modules if m.is_joint]
        n_q = len(joints)
        object.__setattr__(self, "n_q", n_q)
        object.__setattr__(self, "v_max", np.array([m.v_max for m in joints], dtype=float))
        object.__setattr__(self, "a_max", np.array([m.a_max for m in joints], dtype=float))
        object.__setattr__(self, "tau_max", np.array([m.tau_max for m in joints], dtype=float))

        # Each link belongs to the closest joint before it.
        owner, lengths, lmass = [], [], []
        jmass, jlinks_before = [], []
        j = -1
        for m in modules:
            if m.is_joint:
                j += 1
                jmass.append(m.mass)
                jlinks_before.append(len(lengths))
            else:
                owner.append(j)
                lengths.append(m.length)
                lmass.append(m.mass)
        seg = np.zeros(n_q)
        for o, length in zip(owner, lengths):
            seg[o] += length
        object.__setattr__(self, "link_lengths", seg)
        object.__setattr__(self, "_link_owner", np.array(owner, dtype=int))
        object.__setattr__(self, "_link_len", np.array(lengths, dtype=float))
        object.__setattr__(self, "_link_mass", np.array(lmass, dtype=float))
        object.__setattr__(self, "_joint_mass", np.array(jmass, dtype=float))
        object.__setattr__(self, "_joint_links_before", np.array(jlinks_before, dtype=int))

    @property
    def id(self) -> str:
        return "-".join(m.id for m in self.modules)

    @property
    def reach(self) -> float:
        return float(self.link_lengths.sum())

    @property
    def n_links(self) -> int:
        return len(self._link_len)

    def __eq__(self, other):
        return isinstance(other, Composition) and self.modules == other.modules

    def __hash__(self):
        return hash(self.modules)

    def __repr__(self):
        return f"Composition({self.id!r}, n_q={self.n_q})"

    def _check_q(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape[-1] != self.n_q:
            raise ValueError(f"expected {self.n_q} joint values, got {q.shape[-1]}")
        return q

    def link_segments(self, Q) -> tuple[np.ndarray, np.ndarray]:
        """Start and end points of every link module for a batch of configurations.

        ``Q`` has shape (N, n_q); both outputs have shape (N, n_links, 2).
        """
        Q = self._check_q(np.atleast_2d(Q))
        phi = np.cumsum(Q, axis=1)[:, self._link_owner]
        vec = np.stack([np.cos(phi), np.sin(phi)], axis=-1) * self._link_len[None, :, None]
        ends = np.cumsum(vec, axis=1)
        starts = ends - vec
        return starts, ends

    def joint_origins(self, Q) -> np.ndarray:
        Q = np.atleast_2d(Q)
        _, ends = self.link_segments(Q)
        pts = np.concatenate([np.zeros((Q.shape[0], 1, 2)), ends], axis=1)
        return pts[:, self._joint_links_before, :]


def from_ids(ids: Iterable[str], library: dict[str, ModuleSpec] | Sequence[ModuleSpec]) -> Composition:
    if not isinstance(library, dict):
        library = {m.id: m for m in library}
    try:
        return Composition(tuple(library[i] for i in ids))
    except KeyError as exc:
        raise ValueError(f"unknown module id {exc.args[0]!r}") from None


def load_library(path: str | Path) -> list[ModuleSpec]:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data.get("modules", [])
    return [ModuleSpec.from_dict(d) for d in data]


def dump_library(modules: Sequence[ModuleSpec], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([m.to_dict() for m in modules], fh, indent=2)
        fh.write("\n")


# -- angles -----------------------------------------------------------------


def wrap(a):
    """Wrap angles into (-pi, pi]; works on scalars and arrays."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a, TWO_PI)
    w = np.where(w > math.pi, w - TWO_PI, w)
    # mod maps -pi to pi already; guard exact -pi from rounding
    w = np.where(w <= -math.pi, w + TWO_PI, w)
    return w if w.ndim else float(w)


def canonicalize(q_raw) -> np.ndarray:
    q = np.atleast_1d(np.asarray(q_raw, dtype=float))
    if not np.all(np.isfinite(q)):
        raise ValueError("joint values must be finite")
    return np.atleast_1d(wrap(q))


@dataclass(frozen=True)
class Pose2:
    x: float
    y: float
    phi: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.phi)):
            raise ValueError("pose coordinates must be finite")
        object.__setattr__(self, "phi", float(wrap(self.phi)))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.phi])

    def distance_from_origin(self) -> float:
        return math.hypot(self.x, self.y)

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "phi": self.phi}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose2":
        return cls(float(d["x"]), float(d["y"]), float(d["phi"]))


# -- kinematics ---------------------------------------------------------------


def _fk_batch(comp: Composition, Q: np.ndarray) -> np.ndarray:
    phi = np.cumsum(Q, axis=1)
    c, s = np.cos(phi), np.sin(phi)
    L = comp.link_lengths
    return np.stack([c @ L, s @ L, phi[:, -1]], axis=1)


def _jac_batch(comp: Composition, Q: np.ndarray) -> np.ndarray:
    phi = np.cumsum(Q, axis=1)
    L = comp.link_lengths
    lx = L * np.cos(phi)
    ly = L * np.sin(phi)
    # column j collects all segments distal to joint j
    rx = np.cumsum(lx[:, ::-1], axis=1)[:, ::-1]
    ry = np.cumsum(ly[:, ::-1], axis=1)[:, ::-1]
    J = np.empty((Q.shape[0], 3, comp.n_q))
    J[:, 0, :] = -ry
    J[:, 1, :] = rx
    J[:, 2, :] = 1.0
    return J


def forward_kinematics(comp: Composition, q) -> Pose2:
    q = comp._check_q(q)
    if q.ndim != 1:
        raise ValueError("forward_kinematics takes a single configuration")
    x, y, phi = _fk_batch(comp, q[None, :])[0]
    return Pose2(float(x), float(y), float(phi))


def tool_frames(comp: Composition, Q) -> np.ndarray:
    """(N, 3) array of tip x, y and unwrapped heading for a batch of configs."""
    Q = comp._check_q(np.atleast_2d(Q))
    return _fk_batch(comp, Q)


def jacobian(comp: Composition, q) -> np.ndarray:
    q = comp._check_q(q)
    if q.ndim != 1:
        raise ValueError("jacobian takes a single configuration")
    return _jac_batch(comp, q[None, :])[0]


@dataclass(frozen=True)
class IkConfig:
    n_starts: int = 32
    eps_pos: float = 1e-4
    eps_ang: float = 1e-4
    max_iter: int = 200
    dedup_radius: float = 1e-3
    max_step: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        if self.eps_pos <= 0 or self.eps_ang <= 0 or self.max_iter < 1:
            raise ValueError("tolerances and iteration count must be positive")


def ik_starts(n_q: int, cfg: IkConfig) -> np.ndarray:
    sampler = qmc.Halton(d=n_q, scramble=True, seed=cfg.seed)
    u = sampler.random(cfg.n_starts)
    return math.pi - TWO_PI * u  # maps [0, 1) onto (-pi, pi]


def inverse_kinematics(comp: Composition, target: Pose2, cfg: IkConfig = IkConfig()) -> list[np.ndarray]:
    """All distinct canonical solutions reaching ``target`` within tolerance.

    Multi-start damped least squares; the damping shrinks with the residual
    so that starts converging onto singular solutions still terminate.
    """
    if target.distance_from_origin() > comp.reach + cfg.eps_pos:
        return []
    Q = ik_starts(comp.n_q, cfg)
    goal = target.as_array()
    for _ in range(cfg.max_iter):
        pose = _fk_batch(comp, Q)
        err = goal - pose
        err[:, 2] = wrap(err[:, 2])
        norm = np.linalg.norm(err, axis=1)
        active = norm > 1e-13
        if not active.any():
            break
        J = _jac_batch(comp, Q[active])
        U, S, Vt = np.linalg.svd(J, full_matrices=False)
        lam2 = norm[active] ** 2 + 1e-14
        gain = S / (S**2 + lam2[:, None])
        step = np.einsum("nji,nj,nkj,nk->ni", Vt, gain, U, err[active])
        size = np.linalg.norm(step, axis=1)
        scale = np.minimum(1.0, cfg.max_step / np.maximum(size, 1e-300))
        Q[active] += step * scale[:, None]

    pose = _fk_batch(comp, Q)
    pos_err = np.hypot(pose[:, 0] - goal[0], pose[:, 1] - goal[1])
    ang_err = np.abs(wrap(pose[:, 2] - goal[2]))
    ok = (pos_err <= cfg.eps_pos) & (ang_err <= cfg.eps_ang)

    solutions: list[np.ndarray] = []
    for q in Q[ok]:
        q = canonicalize(q)
        if any(np.all(np.abs(wrap(q - s)) < cfg.dedup_radius) for s in solutions):
            continue
        solutions.append(q)
    solutions.sort(key=tuple)
    return solutions


def static_payload_torques(comp: Composition, q, payload_mass: float = 0.0) -> np.ndarray:
    """Magnitude of the gravity moment about every joint axis.

    Link masses sit at link midpoints, joint masses at joint origins and the
    payload at the tip.
    """
    if payload_mass < 0:
        raise ValueError("payload mass must be >= 0")
    q = comp._check_q(q)
    starts, ends = comp.link_segments(q[None, :])
    starts, ends = starts[0], ends[0]
    origins = comp.joint_origins(q[None, :])[0]
    tip_x = ends[-1, 0] if comp.n_links else origins[-1, 0]
    mids_x = 0.5 * (starts[:, 0] + ends[:, 0])

    torques = np.empty(comp.n_q)
    for i in range(comp.n_q):
        xi = origins[i, 0]
        distal_links = comp._link_owner >= i
        moment = np.sum(comp._link_mass[distal_links] * (mids_x[distal_links] - xi))
        moment += np.sum(comp._joint_mass[i + 1 :] * (origins[i + 1 :, 0] - xi))
        moment += payload_mass * (tip_x - xi)
        torques[i] = abs(moment) * GRAVITY
    return torques


@dataclass(frozen=True, eq=False)
class UnwrappedTarget:
    """Absolute joint goal measured from ``origin``; the sign of each
    component of ``q_abs - origin`` fixes the rotation direction."""

    q_abs: np.ndarray
    origin: np.ndarray

    def __post_init__(self):
        q_abs = np.asarray(self.q_abs, dtype=float)
        origin = np.asarray(self.origin, dtype=float)
        if q_abs.shape != origin.shape:
            raise ValueError("target and origin lengths differ")
        if np.any(np.abs(q_abs - origin) > TWO_PI + 1e-9):
            raise ValueError("an unwrapped target may move each joint at most 2*pi")
        object.__setattr__(self, "q_abs", q_abs)
        object.__setattr__(self, "origin", origin)

    @property
    def delta(self) -> np.ndarray:
        return self.q_abs - self.origin

    @property
    def canonical(self) -> np.ndarray:
        return canonicalize(self.q_abs)

    def __eq__(self, other):
        return (
            isinstance(other, UnwrappedTarget)
            and np.array_equal(self.q_abs, other.q_abs)
            and np.array_equal(self.origin, other.origin)
        )

    def __hash__(self):
        return hash((self.q_abs.tobytes(), self.origin.tobytes()))

    def to_dict(self) -> dict:
        return {"q_abs": self.q_abs.tolist(), "origin": self.origin.tolist()}
