import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor

import pytest
from helpers import drop_timing

from cellforge.bilevel import (
    ModuleLibrary,
    default_library,
    enumerate_compositions,
    evaluate_composition,
    filter_min_motors,
    filter_payload,
    filter_reach,
    optimize_composition,
    results_rows,
)
from cellforge.model import GRAVITY, Composition, Pose2, joint, link
from cellforge.world import Box, Disc, Rect, Scenario, TaskSequence, free_space, task_sequence

JS = joint("JS", 1.5, 3.0, 80.0, 1.0)
JW = joint("JW", 2.5, 5.0, 4.0, 0.6)
L3 = link("L3", 0.3, 0.4)
L5 = link("L5", 0.5, 0.6)


def tiny_library():
    """26 compositions of at most three modules and two motors."""
    return ModuleLibrary((JS, JW), (L3, L5), max_modules=3, max_motors=2, min_motors=1)


def ring_scenario(mass=2.0, angle=0.6, radius=0.5):
    """Pick and place on a circle around the base, tool pointing down:
    reachable by a joint-link-joint arm whose link equals the radius."""
    pick = Pose2(radius * math.cos(-angle), radius * math.sin(-angle), -math.pi / 2)
    place = Pose2(-pick.x, pick.y, -math.pi / 2)
    return Scenario(
        (),
        Rect((pick.x - 0.15, pick.y - 0.3), (pick.x + 0.15, pick.y)),
        Rect((place.x - 0.15, place.y - 0.3), (place.x + 0.15, place.y)),
        (Box((0.1, 0.1), mass),),
        pick,
        (place,),
    )


def ids(lib):
    return [c.id for c in enumerate_compositions(lib)]


# -- enumeration ---------------------------------------------------------------------


def test_enumeration_examples():
    J, K, L = joint("J", 1, 1, 1), joint("K", 1, 1, 1), link("L", 0.3)
    assert ids(ModuleLibrary((J,), (L,), 2, 2)) == ["J", "J-J", "J-L"]
    assert ids(ModuleLibrary((J,), (L,), 2, 0)) == []
    two = ids(ModuleLibrary((J, K), (L,), 2, 2))
    assert two == ["J", "K", "J-J", "J-K", "J-L", "K-J", "K-K", "K-L"]


def test_enumeration_grammar_on_default_library():
    lib = default_library()
    comps = list(enumerate_compositions(lib))
    assert len(comps) == len({c.id for c in comps}) == 584
    lengths = [len(c.modules) for c in comps]
    assert lengths == sorted(lengths)
    for c in comps:
        mods = c.modules
        assert mods[0].is_joint
        assert len(mods) <= lib.max_modules and c.n_q <= lib.max_motors
        assert all(a.is_joint or b.is_joint for a, b in zip(mods, mods[1:]))


def test_library_validation_and_round_trip(tmp_path):
    with pytest.raises(ValueError):
        ModuleLibrary((L3,), (L5,))
    with pytest.raises(ValueError):
        ModuleLibrary((JS,), (L3,), max_modules=2, max_motors=3)
    with pytest.raises(ValueError):
        ModuleLibrary((JS,), (L3,), min_motors=0)
    with pytest.raises(ValueError):
        ModuleLibrary((JS, joint("JS", 1, 1, 1)), (L3,))
    with pytest.raises(ValueError):
        ModuleLibrary((joint("J-1", 1, 1, 1),), (L3,))
    lib = default_library()
    path = tmp_path / "lib.json"
    lib.save(path)
    assert ModuleLibrary.load(path) == lib
    assert json.loads(path.read_text())["schema"] == "cellforge-library/1"


# -- filters -----------------------------------------------------------------------


def test_min_motor_filter():
    four = Composition((JS, L3, JS, L3, JS, L3, JS))
    assert filter_min_motors(four, 4)
    assert not filter_min_motors(Composition((JS, L3, JS, L3, JS)), 4)
    assert filter_min_motors(Composition((JS,)), 1)


def test_reach_filter():
    s = ring_scenario()
    P = task_sequence(s)
    assert filter_reach(Composition((JS, L5, JS)), P, s)
    # the cheap bound: 0.3 m of links cannot reach 0.5 m
    short = Composition((JS, L3, JS))
    assert short.reach < 0.5 and not filter_reach(short, P, s)
    # reachable only through a pillar on the link
    mid = (0.25 * math.cos(-0.6), 0.25 * math.sin(-0.6))
    blocked = dataclasses.replace(ring_scenario(), obstacles=(Disc(mid, 0.05),))
    assert not filter_reach(Composition((JS, L5, JS)), P, blocked)


def test_payload_filter():
    arm = Composition((joint("A", 1.0, 1.0, 100.0), link("a", 0.5), joint("B", 1.0, 1.0, 100.0)))
    s = ring_scenario(mass=0.0)
    assert filter_payload(arm, task_sequence(s), s)
    # the tip sits 0.5 cos(0.6) m out from the base joint: m g x against tau_max
    lever = 0.5 * math.cos(0.6)
    heavy = ring_scenario(mass=3.0)
    need = 3.0 * GRAVITY * lever
    weak = Composition((joint("A", 1.0, 1.0, need * 0.99), link("a", 0.5), joint("B", 1.0, 1.0, 100.0)))
    strong = Composition((joint("A", 1.0, 1.0, need * 1.01), link("a", 0.5), joint("B", 1.0, 1.0, 100.0)))
    assert not filter_payload(weak, task_sequence(heavy), heavy)
    assert filter_payload(strong, task_sequence(heavy), heavy)


# -- pipeline -------------------------------------------------------------------------


@pytest.fixture(scope="module")
def tiny_traces():
    s = ring_scenario()
    lib = tiny_library()
    return (
        s,
        optimize_composition(s, lib, "near_optimal", 3),
        optimize_composition(s, lib, "near_optimal", 3, use_filters=False),
    )


def test_tiny_library_matches_exhaustive(tiny_traces):
    _, filtered, exhaustive = tiny_traces
    assert filtered.counts["generated"] == 26
    assert filtered.best is not None
    assert filtered.best.id == exhaustive.best.id
    assert filtered.best_cost == exhaustive.best_cost
    # ties go to the earlier composition: both feasible arms share the base joint's time
    feasible = [r for r in exhaustive.results if r.fate == "feasible"]
    assert len(feasible) == 2 and feasible[0].cost == feasible[1].cost
    assert filtered.best_index == feasible[0].index


def test_filters_are_sound(tiny_traces):
    _, filtered, exhaustive = tiny_traces
    fates = {r.fate for r in filtered.results}
    assert {"reach", "payload", "feasible"} <= fates
    for r, full in zip(filtered.results, exhaustive.results):
        assert r.composition_id == full.composition_id
        if r.fate in ("min_motors", "reach", "payload"):
            assert full.cost == math.inf
        else:
            assert r.cost == full.cost


def test_counts_never_increase(tiny_traces):
    _, filtered, _ = tiny_traces
    c = filtered.counts
    chain = [c["generated"], c["after_min_motors"], c["after_reach"], c["after_payload"], c["evaluated"], c["feasible"]]
    assert chain == sorted(chain, reverse=True)
    assert c == {"generated": 26, "after_min_motors": 26, "after_reach": 4, "after_payload": 2, "evaluated": 2, "feasible": 2}


def test_empty_survivors():
    far = ring_scenario(radius=3.0)
    trace = optimize_composition(far, tiny_library(), "near_optimal", 0)
    assert trace.best is None and trace.best_cost == math.inf
    assert trace.counts["after_reach"] == 0 and trace.counts["feasible"] == 0
    assert trace.to_dict()["best"] is None


def test_trace_is_deterministic_and_parallel_safe():
    s = ring_scenario()
    lib = tiny_library()
    a = optimize_composition(s, lib, "greedy_spline", 9)
    b = optimize_composition(s, lib, "greedy_spline", 9)
    with ProcessPoolExecutor(max_workers=2) as ex:
        c = optimize_composition(s, lib, "greedy_spline", 9, lambda fn, xs: ex.map(fn, xs))
    assert drop_timing(a.to_dict()) == drop_timing(b.to_dict()) == drop_timing(c.to_dict())
    assert [(r["composition"], r["fate"], r["cost"]) for r in results_rows(a)] == [
        (r["composition"], r["fate"], r["cost"]) for r in results_rows(c)
    ]


def test_evaluate_composition_fates():
    s = ring_scenario()
    r = evaluate_composition(0, Composition((JS, L5, JS)), s, 3, "near_optimal", "deterministic", 0)
    assert r.fate == "min_motors" and r.cost == math.inf
    r = evaluate_composition(0, Composition((JS, L5, JS)), s, 1, "astar", "deterministic", 0)
    assert r.fate == "feasible" and r.outcome.feasible


def test_unknown_planner_choice():
    with pytest.raises(ValueError):
        optimize_composition(free_space(), tiny_library(), "bfs")


def test_task_sequence_for_ring():
    P = task_sequence(ring_scenario())
    assert isinstance(P, TaskSequence) and P.n_p == 2
