"""Shared test utilities."""

import itertools
import math

import numpy as np

from cellforge.model import Composition, UnwrappedTarget, joint, link
from cellforge.planners import MotionGraph
from cellforge.traj import evaluate_edge_deterministic
from cellforge.world import Disc, collision_mask, free_space

# lines printed at the end of the run by the acceptance suite
ACCEPTANCE_LINES: list[str] = []


def random_composition(rng: np.random.Generator, n_q: int) -> Composition:
    mods = []
    for i in range(n_q):
        mods.append(joint(f"J{i}", rng.uniform(0.5, 3.0), rng.uniform(0.5, 5.0), 100.0, rng.uniform(0, 1)))
        if rng.random() < 0.85:
            mods.append(link(f"L{i}", rng.uniform(0.1, 0.6), rng.uniform(0, 1)))
    if not any(not m.is_joint for m in mods):
        mods.append(link("tip", 0.3))
    return Composition(tuple(mods))


def canonical_offsets(q_s, q_e):
    """Per joint: the short signed turn in (-pi, pi] and the opposite full
    turn. Written independently of the planners' own routine."""
    out = []
    for a, b in zip(q_s, q_e):
        d = math.fmod(b - a, 2 * math.pi)
        if d > math.pi:
            d -= 2 * math.pi
        elif d <= -math.pi:
            d += 2 * math.pi
        out.append((d, d - 2 * math.pi if d >= 0 else d + 2 * math.pi))
    return out


def oracle_instance(seed: int):
    """A small planning instance: composition, synthetic IK layers of
    collision-free configurations and a cluttered free-space scenario."""
    rng = np.random.default_rng(seed)
    n_q = int(rng.integers(1, 3))
    comp = random_composition(rng, n_q)
    obs = [Disc(tuple(rng.uniform(-1.0, 1.0, 2)), float(rng.uniform(0.05, 0.2))) for _ in range(int(rng.integers(0, 4)))]
    s = free_space(obs)
    n_p = int(rng.integers(1, 4))
    layers = []
    for _ in range(n_p):
        Q = rng.uniform(-math.pi, math.pi, (int(rng.integers(1, 4)), n_q))
        free = Q[~collision_mask(comp, Q, s)]
        layers.append(free if len(free) else Q[:0])
    return comp, MotionGraph.from_layers(layers), s


def brute_force(comp, graph, s) -> float:
    """Minimum over every node-per-layer and way-per-edge assignment."""
    if not graph.feasible:
        return math.inf
    memo = {}

    def edge(layer, i, j, way):
        key = (layer, i, j, way)
        if key not in memo:
            u = graph.layers[layer][i]
            v = graph.layers[layer + 1][j]
            offs = canonical_offsets(u, v)
            d = np.array([offs[k][(way >> k) & 1] for k in range(len(u))])
            res = evaluate_edge_deterministic(comp, u, UnwrappedTarget(u + d, u), s, graph.payloads[layer + 1])
            memo[key] = res.cost
        return memo[key]

    n_ways = 2**comp.n_q
    best = math.inf
    for nodes in itertools.product(*(range(len(L)) for L in graph.layers)):
        for ways in itertools.product(range(n_ways), repeat=graph.n_p - 1):
            total = sum(edge(k, nodes[k], nodes[k + 1], ways[k]) for k in range(graph.n_p - 1))
            best = min(best, total)
    return best


def drop_timing(obj):
    """Copy of a JSON-like document without any "timing" entries."""
    if isinstance(obj, dict):
        return {k: drop_timing(v) for k, v in obj.items() if k != "timing"}
    if isinstance(obj, list):
        return [drop_timing(v) for v in obj]
    return obj
