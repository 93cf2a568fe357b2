import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import brute_force, canonical_offsets, oracle_instance, random_composition

from cellforge.model import Composition, IkConfig, Pose2, UnwrappedTarget, forward_kinematics, joint, link, wrap
from cellforge.planners import (
    MotionGraph,
    best_way_cost,
    build_graph,
    extend,
    heuristic,
    plan_astar,
    plan_greedy,
    plan_near_optimal,
    run_planner,
)
from cellforge.seeding import edge_rng
from cellforge.traj import DeterministicConnector, TwoStageConnector, CemBudget, evaluate_edge_deterministic
from cellforge.world import Box, Disc, Payload, Rect, Scenario, TaskSequence, collides, free_space, task_sequence

ARM = Composition((joint("A", 1.0, 1.0, 10.0), link("a", 1.0)))
FAST = Composition((joint("A", 1.0, 1e6, 10.0), link("a", 1.0)))
DET = DeterministicConnector()
CHEAP = TwoStageConnector(CemBudget(n_iter=4, population=12), CemBudget(n_iter=8, population=16))


def caged():
    return free_space([Disc((0.8 * math.cos(a), 0.8 * math.sin(a)), 0.1) for a in (0.3, -0.3)])


# -- extend / heuristic ------------------------------------------------------------


def test_extend_examples():
    ts = extend([0.0], [math.pi / 2])
    assert [t.q_abs[0] for t in ts] == pytest.approx([math.pi / 2, math.pi / 2 - 2 * math.pi])
    assert len(extend([0.0, 0.0], [1.0, 2.0])) == 4
    ts = extend([0.0], [0.0])
    assert [t.q_abs[0] for t in ts] == pytest.approx([0.0, -2 * math.pi])
    with pytest.raises(ValueError):
        extend([0.0], [0.0, 1.0])


def test_extend_properties_on_1000_cases():
    rng = np.random.default_rng(20)
    for _ in range(1000):
        n = int(rng.integers(1, 5))
        q_s = rng.uniform(-4, 4, n)
        q_e = rng.uniform(-math.pi, math.pi, n)
        ts = extend(q_s, q_e)
        assert len(ts) == 2**n
        assert len({tuple(t.q_abs) for t in ts}) == 2**n
        offs = canonical_offsets(q_s, q_e)
        for t in ts:
            assert np.all(np.abs(t.delta) <= 2 * math.pi + 1e-12)
            np.testing.assert_allclose(np.cos(t.q_abs), np.cos(q_e), atol=1e-9)
            np.testing.assert_allclose(np.sin(t.q_abs), np.sin(q_e), atol=1e-9)
            for k in range(n):
                assert min(abs(t.delta[k] - o) for o in offs[k]) < 1e-9


def test_heuristic_examples():
    assert heuristic([0.3, 0.2], [0.3, 0.2], [1.0, 1.0]) == 0.0
    assert heuristic([0.0, 0.0], [1.0, -2.0], [1.0, 1.0]) == pytest.approx(2.0)
    assert heuristic([0.0], [3.0], [2.0]) == pytest.approx(1.5)


def test_heuristic_admissible_on_1000_pairs():
    rng = np.random.default_rng(21)
    s = free_space()
    for _ in range(1000):
        comp = random_composition(rng, int(rng.integers(1, 4)))
        u = rng.uniform(-math.pi, math.pi, comp.n_q)
        v = rng.uniform(-math.pi, math.pi, comp.n_q)
        ch = best_way_cost(DET, comp, u, v, s)
        assert heuristic(u, v, comp.v_max) <= ch.result.cost + 1e-12


# -- best_way_cost ---------------------------------------------------------------------


def test_best_way_cost_examples():
    s = free_space()
    ch = best_way_cost(DET, FAST, [0.0], [3.0], s)
    assert ch.way == 0 and ch.target.q_abs[0] == pytest.approx(3.0)
    assert ch.result.cost == pytest.approx(3.0, abs=1e-5)
    # an obstacle on the short way's sweep only
    blocked = free_space([Disc((0.7 * math.cos(math.pi / 4), 0.7 * math.sin(math.pi / 4)), 0.05)])
    ch = best_way_cost(DET, ARM, [0.0], [math.pi / 2], blocked)
    assert ch.way == 1 and ch.result.feasible
    assert ch.target.q_abs[0] == pytest.approx(-1.5 * math.pi)
    ch = best_way_cost(DET, ARM, [0.4], [0.4], s)
    assert ch.result.cost == 0.0 and ch.way == 0
    ch = best_way_cost(DET, ARM, [0.0], [math.pi / 2], caged())
    assert not ch.result.feasible and ch.target is None and ch.calls == 2


@settings(max_examples=15)
@given(st.integers(0, 2**31 - 1))
def test_pruned_best_way_equals_exhaustive(seed):
    rng = np.random.default_rng(seed)
    comp = random_composition(rng, 2)
    s = free_space([Disc(tuple(rng.uniform(-0.8, 0.8, 2)), 0.12)])
    u = rng.uniform(-math.pi, math.pi, 2)
    v = rng.uniform(-math.pi, math.pi, 2)
    streams = lambda way: edge_rng(seed, 1, 0, 0, way)  # noqa: E731
    ch = best_way_cost(CHEAP, comp, u, v, s, None, streams)
    results = [CHEAP(comp, t.origin, t, s, None, streams(k)) for k, t in enumerate(extend(u, v))]
    feasible = [(r.cost, k) for k, r in enumerate(results) if r.feasible]
    if not feasible:
        assert not ch.result.feasible
    else:
        cost, way = min(feasible)
        assert (ch.result.cost, ch.way) == (cost, way)
    assert ch.calls <= 4


# -- graph ------------------------------------------------------------------------


def test_build_graph_examples(two_link):
    s = free_space()
    pose = forward_kinematics(two_link, [0.3, 0.6])
    P1 = TaskSequence((pose,), (0.0,))
    g = build_graph(two_link, P1, s)
    assert g.n_p == 1 and g.n_edges == 0 and g.n_nodes == 1
    g = MotionGraph.from_layers([np.zeros((2, 1)), np.ones((3, 1))])
    assert g.n_edges == 6 and g.n_nodes == 5
    far = TaskSequence((pose, Pose2(5.0, 0.0, 0.0)), (0.0, 1.0))
    g = build_graph(two_link, far, s)
    assert not g.feasible
    assert plan_near_optimal(two_link, far, s).cost == math.inf
    with pytest.raises(ValueError):
        build_graph(two_link, TaskSequence((), ()), s)


def test_build_graph_layers_are_admissible_ik_solutions(arm3):
    s = Scenario(
        (Disc((0.0, 0.55), 0.06),),
        Rect((0.4, -0.6), (0.8, -0.3)),
        Rect((-0.8, -0.6), (-0.4, -0.3)),
        (Box((0.1, 0.1), 2.0),),
        Pose2(0.6, -0.3, -math.pi / 2),
        (Pose2(-0.6, -0.3, -math.pi / 2),),
    )
    P = task_sequence(s)
    g = build_graph(arm3, P, s)
    assert g.feasible
    for pose, layer, pl in zip(P.poses, g.layers, g.payloads):
        for q in layer:
            fk = forward_kinematics(arm3, q)
            assert math.hypot(fk.x - pose.x, fk.y - pose.y) < 1e-4
            assert abs(wrap(fk.phi - pose.phi)) < 1e-4
            assert not collides(arm3, q, s, pl)
    assert g.payloads[1] == Payload(2.0, (0.1, 0.1))


def test_torque_filter_drops_weak_arms():
    weak = Composition((joint("W", 1.0, 1.0, 1.0), link("a", 0.5), joint("V", 1.0, 1.0, 1.0), link("b", 0.5)))
    pose = forward_kinematics(weak, [0.4, -0.8])
    P = TaskSequence((pose, pose), (0.0, 5.0), ((0.0, 0.0), (0.05, 0.05)))
    assert len(build_graph(weak, P, free_space()).layers[1]) == 0
    assert len(build_graph(weak, P, free_space(), torque_check=False).layers[1]) > 0


# -- search ---------------------------------------------------------------------------


def test_near_optimal_examples():
    s = free_space()
    g = MotionGraph.from_layers([[[0.0]], [[2.0], [-2.0]]])
    out = plan_near_optimal(FAST, None, s, graph=g)
    assert out.cost == pytest.approx(2.0, abs=1e-5)
    assert out.cost == pytest.approx(brute_force(FAST, g, s), abs=1e-12)
    one = MotionGraph.from_layers([[[0.3], [1.0]]])
    for fn in (plan_near_optimal, plan_astar):
        out = fn(FAST, None, s, graph=one)
        assert out.cost == 0.0 and out.plan == []
    out = plan_greedy(FAST, None, s, DET, graph=one)
    assert out.cost == 0.0 and out.start[0] == 0.3


@pytest.mark.parametrize("seed", range(60))
def test_search_matches_brute_force(seed):
    comp, g, s = oracle_instance(seed)
    want = brute_force(comp, g, s)
    d = plan_near_optimal(comp, None, s, DET, graph=g)
    a = plan_astar(comp, None, s, DET, graph=g)
    gr = plan_greedy(comp, None, s, DET, graph=g)
    if math.isinf(want):
        assert math.isinf(d.cost) and math.isinf(a.cost) and math.isinf(gr.cost)
        return
    assert abs(d.cost - want) <= 1e-9
    assert abs(a.cost - want) <= 1e-9
    assert a.stats.edges_evaluated <= d.stats.edges_evaluated
    assert gr.cost >= d.cost - 1e-12
    assert d.cost == pytest.approx(sum(seg.result.cost for seg in d.plan), abs=1e-12)
    assert len(d.plan) == g.n_p - 1


def test_plan_segments_land_on_layer_nodes():
    for seed in range(30):
        comp, g, s = oracle_instance(seed)
        out = plan_near_optimal(comp, None, s, DET, graph=g)
        if not out.feasible:
            continue
        assert any(np.array_equal(out.start, n) for n in g.layers[0])
        q = out.start
        for i, seg in enumerate(out.plan, start=1):
            np.testing.assert_array_equal(seg.target.origin, q)
            # the motion ends on a node of the next layer, up to full turns
            hits = [n for n in g.layers[i] if np.abs(wrap(seg.target.q_abs - n)).max() < 1e-9]
            assert hits
            q = hits[0]


def test_dijkstra_edges_within_total():
    for seed in range(30):
        comp, g, s = oracle_instance(seed)
        out = plan_near_optimal(comp, None, s, DET, graph=g)
        assert out.stats.edges_evaluated <= g.n_edges
        assert out.stats.connector_calls <= g.n_edges * 2**comp.n_q


def test_greedy_blocked_and_call_bound():
    out = plan_greedy(ARM, None, caged(), DET, graph=MotionGraph.from_layers([[[0.0]], [[math.pi / 2]]]))
    assert out.cost == math.inf and out.plan is None
    assert out.stats.connector_calls == 2
    for seed in range(30):
        comp, g, s = oracle_instance(seed)
        out = plan_greedy(comp, None, s, DET, graph=g)
        most = max((len(L) for L in g.layers), default=0) * 2**comp.n_q
        assert out.stats.connector_calls <= max(g.n_p - 1, 0) * most


def test_greedy_tries_nearest_first():
    g = MotionGraph.from_layers([[[0.0]], [[2.5], [0.5]]])
    out = plan_greedy(ARM, None, free_space(), DET, graph=g)
    assert out.plan[0].target.q_abs[0] == pytest.approx(0.5)
    assert out.stats.connector_calls == 1
    # with a time-weighted metric the order follows |d| / v_max
    out = plan_greedy(ARM, None, free_space(), DET, graph=g, metric="time")
    assert out.plan[0].target.q_abs[0] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        plan_greedy(ARM, None, free_space(), DET, graph=g, metric="manhattan")


def test_greedy_start_is_min_norm():
    g = MotionGraph.from_layers([[[0.2, -3.0], [0.5, 0.5], [-0.5, 0.5]], [[1.0, 1.0]]])
    comp = Composition((joint("A", 1, 1, 10), link("a", 0.1), joint("B", 1, 1, 10), link("b", 0.1)))
    out = plan_greedy(comp, None, free_space(), DET, graph=g)
    np.testing.assert_array_equal(out.start, [-0.5, 0.5])


def test_stochastic_greedy_never_beats_reference():
    for seed in range(4):
        comp, g, s = oracle_instance(100 + seed)
        ref = plan_near_optimal(comp, None, s, CHEAP, np.random.default_rng(seed), graph=g)
        gr = plan_greedy(comp, None, s, CHEAP, np.random.default_rng(seed), graph=g)
        if gr.feasible:
            assert ref.feasible and gr.cost >= ref.cost - 1e-12


def test_planners_are_seed_deterministic():
    comp, g, s = oracle_instance(7)
    for name in ("near_optimal", "astar", "greedy"):
        a = run_planner(name, comp, None, s, CHEAP, np.random.default_rng(5), graph=g)
        b = run_planner(name, comp, None, s, CHEAP, np.random.default_rng(5), graph=g)
        assert a.cost == b.cost
        assert a.to_dict()["segments"] == b.to_dict()["segments"]
    with pytest.raises(ValueError):
        run_planner("bfs", comp, None, s, CHEAP)


def test_outcome_serialization(two_link):
    s = free_space()
    P = TaskSequence((forward_kinematics(two_link, [0.3, 0.6]), forward_kinematics(two_link, [1.2, -0.4])), (0.0, 0.0))
    out = plan_near_optimal(two_link, P, s, "deterministic", np.random.default_rng(0), IkConfig())
    d = out.to_dict()
    assert d["feasible"] and d["cost"] == out.cost
    assert set(d["stats"]) == {"nodes", "edges_evaluated", "connector_calls"}
    assert "wall_time" in d["timing"]
    assert "trajectory" in out.to_dict(embed_trajectory=True)["segments"][0]
    traj = out.trajectory()
    assert traj.duration == pytest.approx(out.cost)
    with pytest.raises(ValueError):
        type(out)(math.inf, [])


def test_greedy_builds_layers_lazily(two_link):
    s = free_space()
    a, b = forward_kinematics(two_link, [0.3, 0.6]), forward_kinematics(two_link, [1.2, -0.4])
    P = TaskSequence((a, b, a), (0.0, 0.0, 0.0))
    lazy = plan_greedy(two_link, P, s, DET)
    eager = plan_greedy(two_link, P, s, DET, graph=build_graph(two_link, P, s))
    assert lazy.feasible and lazy.cost == eager.cost


def test_payload_travels_with_edges():
    """A box too long to swing past a pillar forces the long way round."""
    arm = Composition((joint("A", 1.0, 1.0, 100.0), link("a", 0.5), joint("B", 1.0, 1.0, 100.0)))
    s = free_space([Disc((0.0, 1.0), 0.05)])
    g_free = MotionGraph.from_layers([[[0.0, 0.0]], [[math.pi, 0.0]]])
    g_load = MotionGraph.from_layers([[[0.0, 0.0]], [[math.pi, 0.0]]], [None, Payload(1.0, (0.1, 0.8))])
    bare = plan_near_optimal(arm, None, s, DET, graph=g_free)
    loaded = plan_near_optimal(arm, None, s, DET, graph=g_load)
    assert bare.feasible and loaded.feasible
    assert loaded.cost >= bare.cost
    direct = evaluate_edge_deterministic(arm, [0.0, 0.0], UnwrappedTarget(np.array([math.pi, 0.0]), np.zeros(2)), s, Payload(1.0, (0.1, 0.8)))
    assert not direct.feasible
