from __future__ import annotations

import json
from fractions import Fraction
from random import Random

import pytest

from aqisim.harness import adversarial_lock_probe, generate
from aqisim.matching import (
    BipartiteGraph,
    MatchingError,
    SequencingError,
    bin_marginal_series,
    expand_binary,
    marginal_monotonicity_violations,
    max_weight_matching,
    run_online_matching,
)
from aqisim.model import tabulated
from aqisim.oracle import offline_optimal_binary
from conftest import simple_instance, unit_packet

F = Fraction


def graph(lefts, rights, weights, arrivals=None, locks=None) -> BipartiteGraph:
    return BipartiteGraph(
        left_order=list(lefts),
        right_order=list(rights),
        arrivals=arrivals or {a: F(i) for i, a in enumerate(lefts)},
        locks=locks or {b: F(len(lefts) + j) for j, b in enumerate(rights)},
        weights={k: F(v) for k, v in weights.items()},
    )


def brute_force_best(weights, lefts, rights, forced=()):
    """Independent oracle: enumerate every matching recursively."""
    forced_l = {a for a, _ in forced}
    forced_r = {b for _, b in forced}
    base = sum((F(weights[e]) for e in forced), F(0))
    best = base

    def rec(i, used, acc):
        nonlocal best
        if acc > best:
            best = acc
        if i == len(lefts):
            return
        a = lefts[i]
        rec(i + 1, used, acc)
        if a in forced_l:
            return
        for b in rights:
            if b in used or b in forced_r or (a, b) not in weights:
                continue
            used.add(b)
            rec(i + 1, used, acc + F(weights[(a, b)]))
            used.remove(b)

    rec(0, set(), base)
    return best


# --- exact solver ----------------------------------------------------------

def test_single_edge():
    g = graph(["a"], ["b"], {("a", "b"): 4})
    res = max_weight_matching(g)
    assert res.pairs == {"a": "b"} and res.weight == 4


def test_two_by_two_prefers_cross():
    g = graph(["a1", "a2"], ["b1", "b2"],
              {("a1", "b1"): 3, ("a1", "b2"): 5, ("a2", "b1"): 4, ("a2", "b2"): 1})
    res = max_weight_matching(g)
    assert res.weight == 9  # 5 + 4 beats 3 + 1 and every partial matching
    assert res.pairs == {"a1": "b2", "a2": "b1"}


def test_forced_edge_constrains_the_optimum():
    g = graph(["a1", "a2"], ["b1", "b2"],
              {("a1", "b1"): 3, ("a1", "b2"): 5, ("a2", "b1"): 4, ("a2", "b2"): 1})
    res = max_weight_matching(g, forced=(("a1", "b1"),))
    assert res.weight == 4  # 3 + 1
    assert res.pairs == {"a1": "b1", "a2": "b2"}


def test_forced_edges_sharing_a_node_are_infeasible():
    g = graph(["a1", "a2"], ["b1"], {("a1", "b1"): 1, ("a2", "b1"): 1})
    with pytest.raises(MatchingError, match="infeasible"):
        max_weight_matching(g, forced=(("a1", "b1"), ("a2", "b1")))
    with pytest.raises(MatchingError, match="not in the graph"):
        max_weight_matching(g, forced=(("a1", "zzz"),))


def test_negative_weights_rejected():
    with pytest.raises(MatchingError, match="negative"):
        graph(["a"], ["b"], {("a", "b"): -1})


def test_solver_agrees_with_brute_force():
    rng = Random(17)
    for _ in range(250):
        nl, nr = rng.randint(1, 4), rng.randint(1, 5)
        lefts = [f"a{i}" for i in range(nl)]
        rights = [f"b{j}" for j in range(nr)]
        weights = {}
        for a in lefts:
            for b in rights:
                if rng.random() < 0.7:
                    weights[(a, b)] = F(rng.randint(0, 12), rng.choice([1, 1, 2, 3]))
        g = graph(lefts, rights, weights)
        res = max_weight_matching(g)
        assert res.weight == brute_force_best(weights, lefts, rights)
        assert sum((weights[(a, b)] for a, b in res.pairs.items()), F(0)) == res.weight
        if weights:
            fa, fb = sorted(weights)[rng.randrange(len(weights))]
            res2 = max_weight_matching(g, forced=((fa, fb),))
            assert res2.weight == brute_force_best(weights, lefts, rights, forced=((fa, fb),))
            assert res2.pairs[fa] == fb


def test_canonical_matching_invariant_to_input_order():
    rng = Random(23)
    for _ in range(60):
        lefts = [f"a{i}" for i in range(3)]
        rights = [f"b{j}" for j in range(4)]
        weights = {(a, b): F(rng.randint(0, 5)) for a in lefts for b in rights}
        g1 = graph(lefts, rights, dict(weights))
        items = list(weights.items())
        rng.shuffle(items)
        g2 = graph(lefts, rights, dict(items))
        assert max_weight_matching(g1).pairs == max_weight_matching(g2).pairs


# --- online algorithm ------------------------------------------------------

def test_single_pair_run():
    g = graph(["a"], ["b"], {("a", "b"): 4}, arrivals={"a": F(0)}, locks={"b": F(1)})
    run = run_online_matching(g)
    assert run.weight == 4 and run.perm == {"b": ("a", F(4))}


def two_stage_scenario() -> BipartiteGraph:
    # a1 commits to the early-locking bin; a2 arrives between the locks
    return graph(
        ["a1", "a2"], ["b1", "b2"],
        {("a1", "b1"): 5, ("a1", "b2"): 3, ("a2", "b1"): 6, ("a2", "b2"): 6},
        arrivals={"a1": F(0), "a2": F(3, 2)},
        locks={"b1": F(1), "b2": F(2)},
    )


def test_two_stage_scenario_is_lossless():
    g = two_stage_scenario()
    run = run_online_matching(g)
    assert run.weight == 11  # 5 locked early, then 6
    offline = max_weight_matching(g)
    assert offline.weight == 11  # cross pairing only reaches 6 + 3 = 9
    assert run.weight / offline.weight == 1


def test_two_stage_marginal_series():
    run = run_online_matching(two_stage_scenario())
    # while unlocked, b1 is worth the matching's loss without it: 5 - 3 = 2
    assert bin_marginal_series(run, "b1") == [2, 5, 5, 5]
    assert bin_marginal_series(run, "b2") == [0, 0, 6, 6]
    assert marginal_monotonicity_violations(run) == []


def test_unknown_bin_in_series():
    run = run_online_matching(two_stage_scenario())
    with pytest.raises(MatchingError, match="unknown right node"):
        bin_marginal_series(run, "nope")


def test_never_competed_bin_has_zero_series():
    g = graph(["a"], ["b", "lonely"], {("a", "b"): 4},
              arrivals={"a": F(0)}, locks={"b": F(1), "lonely": F(2)})
    run = run_online_matching(g)
    assert bin_marginal_series(run, "lonely") == [0, 0, 0]
    # a bin locking unmatched keeps marginal 0 forever
    assert run.events[-1].marginals["lonely"] == 0


def test_probe_family_ratio_close_to_half():
    for w, eps in ((100, 1), (1000, 7), (50, F(1, 2))):
        g = adversarial_lock_probe(w, eps)
        run = run_online_matching(g)
        opt = max_weight_matching(g)
        assert run.weight == w
        assert opt.weight == 2 * F(w) - F(eps)
        ratio = run.weight / opt.weight
        assert F(1, 2) < ratio <= F(51, 100)
        assert marginal_monotonicity_violations(run) == []


def test_out_of_order_streams_rejected():
    g = two_stage_scenario()
    with pytest.raises(SequencingError):
        run_online_matching(g, arrivals=[(F(3, 2), "a2"), (F(0), "a1")])
    with pytest.raises(SequencingError):
        run_online_matching(g, locks=[(F(1), "b1")])  # missing b2


def test_arrival_gains_sum_to_final_weight():
    # every arrival's tentative-weight gain, summed, telescopes to the output
    for seed in range(25):
        inst = generate(5, 1, 4, seed, mode=("random", "adversarial-burst")[seed % 2])
        if not inst.packets:
            continue
        run = run_online_matching(expand_binary(inst).graph)
        gains = sum((ev.arrival_gain for ev in run.events if ev.kind == "arrival"), F(0))
        assert gains == run.weight


def test_arrival_gain_plus_locked_value_dominates_edges():
    # for every arrival and its offline partner: gain(a) + final(b) >= w(a, b)
    for seed in range(40):
        inst = generate(5, 1, 4, seed, mode=("random", "adversarial-lock")[seed % 2])
        if not inst.packets:
            continue
        expanded = expand_binary(inst)
        run = run_online_matching(expanded.graph)
        gains = {ev.subject[0]: ev.arrival_gain for ev in run.events if ev.kind == "arrival"}
        locked_value = {b: w for b, (_, w) in run.perm.items()}
        offline = offline_optimal_binary(inst)
        for a, b in offline.pairs.items():
            w = expanded.graph.weights.get((a, b))
            assert w is not None, "offline matching used a bin outside the online graph"
            assert gains[a] + locked_value.get(b, F(0)) >= w


def test_monotone_marginals_across_random_instances():
    for seed in range(40):
        inst = generate(5, 1, 4, seed, mode=("random", "adversarial-burst", "adversarial-lock")[seed % 3])
        run = run_online_matching(expand_binary(inst).graph)
        assert marginal_monotonicity_violations(run) == []


def test_stale_tentative_weight_matches_fresh_solve():
    # between arrivals the kept tentative matching stays optimal
    for seed in range(15):
        inst = generate(4, 1, 4, seed)
        g = expand_binary(inst).graph
        run = run_online_matching(g)
        locked = set()
        arrived = set()
        committed = set()
        events_by_step = []
        for ev in run.events:
            if ev.kind == "arrival":
                arrived.update(ev.subject)
            else:
                locked.update(ev.subject)
                committed = {a for b, (a, _) in run.perm.items() if b in locked}
            events_by_step.append((set(arrived), set(locked), set(committed), ev.temp_weight))
        for arrived_now, locked_now, committed_now, temp_weight in events_by_step:
            fresh = max_weight_matching(
                g, left_subset=arrived_now - committed_now,
                right_subset=set(g.right_order) - locked_now)
            assert fresh.weight == temp_weight


def test_trace_jsonl_is_parseable():
    run = run_online_matching(two_stage_scenario())
    lines = [json.loads(line) for line in run.trace_jsonl().splitlines()]
    assert [ln["kind"] for ln in lines] == ["arrival", "lock", "arrival", "lock"]
    assert lines[0]["rho"]["b1"] == 2
    assert lines[1]["perm_weight"] == 5


# --- expansion -------------------------------------------------------------

def test_expansion_single_packet():
    inst = simple_instance([unit_packet()], horizon=2, energy=[tabulated([0, 1, 3])])
    expanded = expand_binary(inst)
    assert list(expanded.minislots.values()) == [(0, 1), (1, 1), (2, 1)]
    assert expanded.graph.weights == {
        ("p0", "b0.1"): F(4), ("p0", "b1.1"): F(3), ("p0", "b2.1"): F(2),
    }
    assert expanded.graph.locks["b0.1"] == 0


def test_expansion_drops_strictly_negative_edges():
    # value 2 never covers the first marginal energy of 4: isolated packet
    inst = simple_instance([unit_packet(value=2)], horizon=1, energy=[tabulated([0, 4, 9])])
    expanded = expand_binary(inst)
    assert expanded.graph.weights == {}
    run = run_online_matching(expanded.graph)
    assert run.weight == 0 and run.perm == {}


def test_expansion_burst_positions_carry_marginal_energy():
    g_table = tabulated([0, 1, 3, 6])
    inst = simple_instance(
        [unit_packet(pid=f"p{i}", value=10) for i in range(3)],
        horizon=1, energy=[g_table],
    )
    expanded = expand_binary(inst)
    by_position = {
        i: expanded.graph.weights[("p0", f"b0.{i}")] for i in (1, 2, 3)
    }
    assert by_position == {1: 10 - 1, 2: 10 - 2, 3: 10 - 3}  # increments 1, 2, 3


def test_expansion_depth_grows_with_arrivals():
    inst = simple_instance(
        [unit_packet(pid="p0", arrival=0), unit_packet(pid="p1", arrival=2)],
        horizon=2,
    )
    expanded = expand_binary(inst)
    depth = {}
    for slot, position in expanded.minislots.values():
        depth[slot] = max(depth.get(slot, 0), position)
    assert depth == {0: 1, 1: 1, 2: 2}
    full = expand_binary(inst, full_depth=True)
    assert max(p for _, p in full.minislots.values()) == 2
    assert max_weight_matching(expanded.graph).weight == max_weight_matching(full.graph).weight


def test_expansion_rejects_multi_fragment_and_multi_server():
    from aqisim.model import Packet, linear as lin
    multi = simple_instance([Packet(id="p0", arrival=0, subpackets=2, weight=F(1),
                                    distortion=tabulated([0, 5, 8]), delay_cost=lin(1))],
                            horizon=2)
    with pytest.raises(Exception, match="unit packets"):
        expand_binary(multi)
    two_servers = simple_instance([unit_packet()], horizon=1, servers=2)
    with pytest.raises(Exception, match="single-server"):
        expand_binary(two_servers)
