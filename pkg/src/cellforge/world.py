"""Palletization scenarios: data model, seeded generator and collision checks.

The world is a vertical plane with the robot base at the origin. The
conveyor and the pallet are rectangles whose top edge carries the task
poses; the tool approaches them pointing down.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from . import geometry
from ._kernels import collision_kernel
from .model import Composition, Pose2

SCHEMA = "cellforge-scenario/1"
MAX_BOXES = 4
LINK_RADIUS = 0.05
# Task poses sit on region edges; links may graze this deep into a region.
REGION_MARGIN = 0.02
TOOL_DOWN = -math.pi / 2


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Disc:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("disc radius must be > 0")

    def to_dict(self) -> dict:
        return {"shape": "disc", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Rect:
    min: tuple[float, float]
    max: tuple[float, float]

    def __post_init__(self):
        if not (self.min[0] < self.max[0] and self.min[1] < self.max[1]):
            raise ValueError("rectangle min must be < max componentwise")

    def contains(self, x: float, y: float, tol: float = 1e-9) -> bool:
        return (self.min[0] - tol <= x <= self.max[0] + tol) and (self.min[1] - tol <= y <= self.max[1] + tol)

    def overlaps(self, other: "Rect") -> bool:
        return not (
            self.max[0] <= other.min[0]
            or other.max[0] <= self.min[0]
            or self.max[1] <= other.min[1]
            or other.max[1] <= self.min[1]
        )

    def to_dict(self) -> dict:
        return {"shape": "rect", "min": list(self.min), "max": list(self.max)}


Obstacle = Union[Disc, Rect]


def obstacle_from_dict(d: dict) -> Obstacle:
    if d["shape"] == "disc":
        return Disc(tuple(d["center"]), float(d["radius"]))
    if d["shape"] == "rect":
        return Rect(tuple(d["min"]), tuple(d["max"]))
    raise ValueError(f"unknown obstacle shape {d['shape']!r}")


@dataclass(frozen=True)
class Box:
    size: tuple[float, float]
    mass: float


@dataclass(frozen=True)
class Payload:
    """A box held at the tool: mass in kg, footprint (width, height) in m."""

    mass: float
    size: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class Scenario:
    obstacles: tuple
    conveyor_region: Rect
    pallet_region: Rect
    boxes: tuple
    pick_pose: Pose2
    place_poses: tuple
    seed: int = 0
    complexity: str = "simple"

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "place_poses", tuple(self.place_poses))
        if self.complexity not in ("simple", "complex"):
            raise ValueError(f"unknown complexity {self.complexity!r}")
        if not 1 <= len(self.boxes) <= MAX_BOXES:
            raise ValueError(f"scenario needs 1..{MAX_BOXES} boxes, got {len(self.boxes)}")
        if len(self.boxes) != len(self.place_poses):
            raise ValueError("number of boxes and place poses differ")
        if self.conveyor_region.overlaps(self.pallet_region):
            raise ValueError("conveyor and pallet regions overlap")
        for region in (self.conveyor_region, self.pallet_region):
            if region.contains(0.0, 0.0, tol=0.0):
                raise ValueError("a region covers the robot base")
        if not self.conveyor_region.contains(self.pick_pose.x, self.pick_pose.y):
            raise ValueError("pick pose outside the conveyor region")
        for p in self.place_poses:
            if not self.pallet_region.contains(p.x, p.y):
                raise ValueError("place pose outside the pallet region")

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "seed": self.seed,
            "complexity": self.complexity,
            "obstacles": [o.to_dict() for o in self.obstacles],
            "conveyor_region": self.conveyor_region.to_dict(),
            "pallet_region": self.pallet_region.to_dict(),
            "boxes": [{"size": list(b.size), "mass": b.mass} for b in self.boxes],
            "pick_pose": self.pick_pose.to_dict(),
            "place_poses": [p.to_dict() for p in self.place_poses],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        if d.get("schema") != SCHEMA:
            raise ValueError(f"unsupported scenario schema {d.get('schema')!r}")
        return cls(
            obstacles=tuple(obstacle_from_dict(o) for o in d["obstacles"]),
            conveyor_region=Rect(tuple(d["conveyor_region"]["min"]), tuple(d["conveyor_region"]["max"])),
            pallet_region=Rect(tuple(d["pallet_region"]["min"]), tuple(d["pallet_region"]["max"])),
            boxes=tuple(Box(tuple(b["size"]), float(b["mass"])) for b in d["boxes"]),
            pick_pose=Pose2.from_dict(d["pick_pose"]),
            place_poses=tuple(Pose2.from_dict(p) for p in d["place_poses"]),
            seed=int(d["seed"]),
            complexity=d["complexity"],
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def with_obstacles(self, obstacles: Sequence[Obstacle]) -> "Scenario":
        return replace(self, obstacles=tuple(obstacles))


def free_space(obstacles: Sequence[Obstacle] = (), far: float = 100.0) -> Scenario:
    """A scenario whose conveyor and pallet sit far away from any arm."""
    pick = Pose2(far, 0.0, TOOL_DOWN)
    place = Pose2(-far, 0.0, TOOL_DOWN)
    return Scenario(
        obstacles=tuple(obstacles),
        conveyor_region=Rect((far - 1.0, -1.0), (far + 1.0, 0.0)),
        pallet_region=Rect((-far - 1.0, -1.0), (-far + 1.0, 0.0)),
        boxes=(Box((0.1, 0.1), 0.0),),
        pick_pose=pick,
        place_poses=(place,),
    )


@dataclass(frozen=True)
class GeneratorParams:
    complexity: str = "simple"
    box_count: tuple[int, int] = (1, 4)
    box_width: tuple[float, float] = (0.08, 0.2)
    box_height: tuple[float, float] = (0.08, 0.2)
    box_mass: tuple[float, float] = (0.5, 4.0)
    conveyor_x: tuple[float, float] = (0.45, 0.75)
    conveyor_width: tuple[float, float] = (0.25, 0.4)
    pallet_x: tuple[float, float] = (-0.75, -0.45)
    pallet_width: tuple[float, float] = (0.3, 0.5)
    surface_y: tuple[float, float] = (-0.35, 0.05)
    region_depth: float = 0.3
    obstacle_count: tuple[int, int] = (1, 3)
    obstacle_radius: tuple[float, float] = (0.04, 0.08)
    obstacle_distance: tuple[float, float] = (0.3, 0.6)
    base_clearance: float = 0.15
    max_attempts: int = 1000

    def __post_init__(self):
        if self.complexity not in ("simple", "complex"):
            raise ValueError(f"unknown complexity {self.complexity!r}")
        lo, hi = self.box_count
        if not 1 <= lo <= hi <= MAX_BOXES:
            raise ValueError(f"box_count must satisfy 1 <= lo <= hi <= {MAX_BOXES}")
        for name in ("box_width", "box_height", "box_mass", "conveyor_width", "pallet_width", "obstacle_radius"):
            a, b = getattr(self, name)
            if not 0 <= a <= b:
                raise ValueError(f"{name} must be an ordered non-negative range")
        olo, ohi = self.obstacle_count
        if not 0 <= olo <= ohi:
            raise ValueError("obstacle_count must be an ordered non-negative range")
        dlo, dhi = self.obstacle_distance
        if not 0 <= dlo <= dhi <= 0.6:
            raise ValueError("pillars must stay within 0.6 m of the base")

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorParams":
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**kw)


def _uniform(rng: np.random.Generator, bounds) -> float:
    lo, hi = bounds
    return float(rng.uniform(lo, hi)) if hi > lo else float(lo)


def _region(rng, x_range, width_range, params) -> Rect:
    cx = _uniform(rng, x_range)
    w = _uniform(rng, width_range)
    top = _uniform(rng, params.surface_y)
    return Rect((cx - w / 2, top - params.region_depth), (cx + w / 2, top))


def _disc_rect_gap(d: Disc, r: Rect) -> float:
    return float(geometry.point_aabb_distance(np.array(d.center), np.array(r.min), np.array(r.max))) - d.radius


def generate_scenario(seed: int, params: GeneratorParams = GeneratorParams()) -> Scenario:
    """Deterministic random scenario for ``(seed, params)``."""
    rng = np.random.default_rng(seed)
    margin = params.base_clearance

    for _ in range(params.max_attempts):
        conveyor = _region(rng, params.conveyor_x, params.conveyor_width, params)
        pallet = _region(rng, params.pallet_x, params.pallet_width, params)
        base = Rect((-margin, -margin), (margin, margin))
        if not (conveyor.overlaps(pallet) or conveyor.overlaps(base) or pallet.overlaps(base)):
            break
    else:
        raise GenerationError("could not place conveyor and pallet without overlap")

    n_boxes = int(rng.integers(params.box_count[0], params.box_count[1] + 1))
    boxes = []
    places = []
    for _ in range(n_boxes):
        w = _uniform(rng, params.box_width)
        h = _uniform(rng, params.box_height)
        boxes.append(Box((w, h), _uniform(rng, params.box_mass)))
        lo = pallet.min[0] + min(w / 2, (pallet.max[0] - pallet.min[0]) / 2)
        hi = pallet.max[0] - min(w / 2, (pallet.max[0] - pallet.min[0]) / 2)
        places.append(Pose2(_uniform(rng, (lo, hi)), pallet.max[1], TOOL_DOWN))
    pick = Pose2(0.5 * (conveyor.min[0] + conveyor.max[0]), conveyor.max[1], TOOL_DOWN)

    obstacles = []
    if params.complexity == "complex":
        n_obs = int(rng.integers(params.obstacle_count[0], params.obstacle_count[1] + 1))
        task_points = [(pick.x, pick.y)] + [(p.x, p.y) for p in places]
        for _ in range(n_obs):
            for _ in range(params.max_attempts):
                dist = _uniform(rng, params.obstacle_distance)
                ang = float(rng.uniform(-math.pi, math.pi))
                radius = _uniform(rng, params.obstacle_radius)
                disc = Disc((dist * math.cos(ang), dist * math.sin(ang)), radius)
                if dist < radius + margin:
                    continue
                if min(_disc_rect_gap(disc, r) for r in (conveyor, pallet)) < LINK_RADIUS:
                    continue
                if any(math.dist(disc.center, tp) < radius + margin for tp in task_points):
                    continue
                obstacles.append(disc)
                break
            else:
                raise GenerationError("could not place a pillar near the base")

    return Scenario(
        obstacles=tuple(obstacles),
        conveyor_region=conveyor,
        pallet_region=pallet,
        boxes=tuple(boxes),
        pick_pose=pick,
        place_poses=tuple(places),
        seed=int(seed),
        complexity=params.complexity,
    )


@dataclass(frozen=True)
class TaskSequence:
    poses: tuple
    payload_mask: tuple
    box_sizes: tuple = field(default=())

    def __post_init__(self):
        if len(self.poses) != len(self.payload_mask):
            raise ValueError("poses and payload mask lengths differ")
        if not self.box_sizes:
            object.__setattr__(self, "box_sizes", tuple((0.0, 0.0) for _ in self.poses))

    @property
    def n_p(self) -> int:
        return len(self.poses)

    def payload(self, i: int) -> Payload | None:
        """Payload held while moving into and standing at pose ``i``."""
        if self.payload_mask[i] <= 0:
            return None
        return Payload(self.payload_mask[i], self.box_sizes[i])

    def truncated(self, n: int) -> "TaskSequence":
        return TaskSequence(self.poses[:n], self.payload_mask[:n], self.box_sizes[:n])


def task_sequence(s: Scenario) -> TaskSequence:
    poses, mask, sizes = [], [], []
    for box, place in zip(s.boxes, s.place_poses):
        poses += [s.pick_pose, place]
        mask += [0.0, box.mass]
        sizes += [(0.0, 0.0), tuple(box.size)]
    return TaskSequence(tuple(poses), tuple(mask), tuple(sizes))


class _Geometry:
    """Obstacle arrays cached per scenario for the batched collision test."""

    def __init__(self, s: Scenario):
        discs = [o for o in s.obstacles if isinstance(o, Disc)]
        rects = [o for o in s.obstacles if isinstance(o, Rect)]
        self.disc_c = np.array([d.center for d in discs], dtype=float).reshape(-1, 2)
        self.disc_r = np.array([d.radius for d in discs], dtype=float)
        self.rect_lo = np.array([r.min for r in rects], dtype=float).reshape(-1, 2)
        self.rect_hi = np.array([r.max for r in rects], dtype=float).reshape(-1, 2)
        regions = [s.conveyor_region, s.pallet_region]
        lo = np.array([r.min for r in regions], dtype=float) + REGION_MARGIN
        hi = np.array([r.max for r in regions], dtype=float) - REGION_MARGIN
        keep = np.all(lo < hi, axis=1)
        self.region_lo, self.region_hi = lo[keep], hi[keep]


_GEOM_CACHE: dict[int, tuple[Scenario, _Geometry]] = {}


def _geometry_of(s: Scenario) -> _Geometry:
    hit = _GEOM_CACHE.get(id(s))
    if hit is not None and hit[0] is s:
        return hit[1]
    g = _Geometry(s)
    if len(_GEOM_CACHE) > 64:
        _GEOM_CACHE.clear()
    _GEOM_CACHE[id(s)] = (s, g)
    return g


def collision_mask(
    comp: Composition,
    Q,
    s: Scenario,
    payload: Payload | None = None,
    r_link: float = LINK_RADIUS,
) -> np.ndarray:
    """Boolean (N,) array: which configurations in the (N, n_q) batch collide."""
    Q = np.ascontiguousarray(np.atleast_2d(np.asarray(Q, dtype=float)))
    if Q.shape[1] != comp.n_q:
        raise ValueError(f"expected {comp.n_q} joint values, got {Q.shape[1]}")
    g = _geometry_of(s)
    box_w, box_h = payload.size if payload is not None else (0.0, 0.0)
    return collision_kernel(
        Q,
        comp._link_owner,
        comp._link_len,
        g.disc_c,
        g.disc_r,
        g.rect_lo,
        g.rect_hi,
        g.region_lo,
        g.region_hi,
        float(r_link),
        float(box_w),
        float(box_h),
    )


def collision_mask_reference(
    comp: Composition,
    Q,
    s: Scenario,
    payload: Payload | None = None,
    r_link: float = LINK_RADIUS,
) -> np.ndarray:
    """Pure-numpy twin of :func:`collision_mask`, slower but easy to audit."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    g = _geometry_of(s)
    hit = np.zeros(Q.shape[0], dtype=bool)
    a, b = comp.link_segments(Q)  # (N, L, 2)
    if a.shape[1]:
        A = a[:, :, None, :]
        B = b[:, :, None, :]
        if len(g.disc_r):
            d = geometry.point_segment_distance(g.disc_c[None, None], A, B)
            hit |= np.any(d < g.disc_r + r_link, axis=(1, 2))
        if len(g.rect_lo):
            d = geometry.segment_aabb_distance(A, B, g.rect_lo[None, None], g.rect_hi[None, None])
            hit |= np.any(d < r_link, axis=(1, 2))
        if len(g.region_lo):
            inter = geometry.segment_intersects_aabb(A, B, g.region_lo[None, None], g.region_hi[None, None])
            hit |= np.any(inter, axis=(1, 2))

    if payload is not None and payload.size[0] > 0 and payload.size[1] > 0 and s.obstacles:
        phi = np.cumsum(Q, axis=1)[:, -1]
        tip = b[:, -1, :] if a.shape[1] else np.zeros((Q.shape[0], 2))
        axis = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        width, length = payload.size
        if len(g.disc_r):
            d = geometry.obb_disc_distance(tip[:, None], axis[:, None], length, width, g.disc_c[None])
            hit |= np.any(d < g.disc_r, axis=1)
        if len(g.rect_lo):
            corners = geometry.obb_corners(tip, axis, length, width)
            hit |= np.any(geometry.obb_overlaps_aabb(corners[:, None], g.rect_lo[None], g.rect_hi[None]), axis=1)
    return hit


def collides(comp: Composition, q, s: Scenario, payload: Payload | None = None, r_link: float = LINK_RADIUS) -> bool:
    q = np.asarray(q, dtype=float)
    if q.ndim != 1:
        raise ValueError("collides takes a single configuration; use collision_mask for batches")
    return bool(collision_mask(comp, q[None, :], s, payload, r_link)[0])
