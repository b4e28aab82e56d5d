from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path

import pytest

from aqisim.harness import generate
from aqisim.model import (
    Allocation,
    AllocationError,
    Bin,
    CostFamily,
    DISCARD,
    Instance,
    Packet,
    ParseError,
    SubpacketRef,
    allocation_in_index_order,
    check_allocation,
    linear,
    load_instance,
    shannon_energy,
    store_instance,
    tabulated,
    validate_instance,
)
from conftest import simple_instance, unit_packet

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


# --- cost families ---------------------------------------------------------

def test_cost_family_kinds():
    assert linear(2).value(3) == 6
    assert CostFamily("power", params=(Fraction(1), Fraction(2))).value(3) == 9
    assert shannon_energy().value(3) == 7  # 2**3 - 1
    sat = CostFamily("saturating", params=(Fraction(8), Fraction(2)))
    assert [sat.value(x) for x in range(4)] == [0, 4, 6, 7]
    assert tabulated([0, 5, 8]).increment(1) == 3


def test_cost_family_rejects_bad_shapes():
    with pytest.raises(ParseError):
        CostFamily("mystery", params=(Fraction(1),))
    with pytest.raises(ParseError):
        CostFamily("linear", params=())
    with pytest.raises(ParseError):
        CostFamily("power", params=(Fraction(1), Fraction(1, 2)))
    with pytest.raises(ParseError):
        CostFamily("tabulated")


def test_tabulated_out_of_range():
    fam = tabulated([0, 1])
    with pytest.raises(Exception, match="no value at 2"):
        fam.value(2)


# --- instance validation ---------------------------------------------------

def test_shannon_energy_instance_is_valid():
    inst = simple_instance([unit_packet()], energy=[shannon_energy()])
    assert validate_instance(inst).ok


def test_concave_table_is_valid():
    p = Packet(id="p0", arrival=0, subpackets=3, weight=Fraction(1),
               distortion=tabulated([0, 5, 8, 10]), delay_cost=linear(1))
    assert validate_instance(simple_instance([p], horizon=3)).ok


def test_increasing_increments_reported():
    p = Packet(id="p0", arrival=0, subpackets=2, weight=Fraction(1),
               distortion=tabulated([0, 3, 8]), delay_cost=linear(1))
    report = validate_instance(simple_instance([p], horizon=3))
    assert not report.ok
    assert any("increments increase at i=2" in msg for msg in report.problems)


def test_energy_must_start_at_zero_and_be_convex():
    report = validate_instance(simple_instance([unit_packet()], energy=[tabulated([1, 2])]))
    assert any("expected 0" in msg for msg in report.problems)
    two = [unit_packet(), unit_packet(pid="p1")]
    report = validate_instance(simple_instance(two, energy=[tabulated([0, 3, 4])]))
    assert any("not convex" in msg for msg in report.problems)


def test_arrival_beyond_horizon_reported():
    report = validate_instance(simple_instance([unit_packet(arrival=9)], horizon=2))
    assert any("beyond horizon" in msg for msg in report.problems)


def test_deadline_precedes_arrival_rejected():
    with pytest.raises(ParseError, match="deadline precedes arrival"):
        unit_packet(arrival=3, deadline=1)


# --- serialization ---------------------------------------------------------

def test_load_minimal_document():
    doc = {
        "horizon": 3,
        "energy": [{"kind": "linear", "params": [1]}],
        "packets": [{
            "id": "p0", "arrival": 0, "subpackets": 1, "weight": 1,
            "distortion": {"kind": "tabulated", "table": [0, 5]},
            "delay_cost": {"kind": "linear", "params": [1]},
        }],
    }
    inst = load_instance(json.dumps(doc))
    assert len(inst.packets) == 1
    assert inst.packets[0].utility(1) == 5


def test_parse_errors_carry_location():
    with pytest.raises(ParseError, match="packets\\[0\\]"):
        load_instance(json.dumps({
            "horizon": 1, "energy": [{"kind": "linear", "params": [1]}],
            "packets": [{"id": "p0"}],
        }))
    with pytest.raises(ParseError, match="floats are not exact"):
        load_instance(json.dumps({
            "horizon": 1, "energy": [{"kind": "linear", "params": [0.5]}],
            "packets": [],
        }))
    with pytest.raises(ParseError, match="unknown cost kind"):
        load_instance(json.dumps({
            "horizon": 1, "energy": [{"kind": "cubic", "params": [1]}],
            "packets": [],
        }))


def test_fixture_corpus_round_trips():
    docs = sorted(FIXTURES.glob("*.json"))
    assert docs, "fixture corpus missing"
    for path in docs:
        text = path.read_text()
        inst = load_instance(text)
        assert store_instance(inst) == text
        assert validate_instance(inst).ok


def test_worked_binary_fixture_has_three_packets():
    inst = load_instance((FIXTURES / "worked_binary.json").read_text())
    assert len(inst.packets) == 3
    assert inst.is_binary()


def test_generated_instances_round_trip():
    for seed in range(25):
        inst = generate(4, 3, 5, seed, deadline_prob=0.3)
        doc = store_instance(inst)
        assert store_instance(load_instance(doc)) == doc


def test_store_accepts_empty_packet_list():
    inst = simple_instance([], horizon=2)
    again = load_instance(store_instance(inst))
    assert again.packets == ()


def test_canonical_store_is_sorted_and_explicit():
    doc = json.loads(store_instance(simple_instance([unit_packet()])))
    assert list(doc) == sorted(doc)
    assert doc["packets"][0]["deadline"] is None  # explicit default


# --- allocations -----------------------------------------------------------

def test_allocation_rejects_double_assignment():
    alloc = Allocation()
    alloc.add(SubpacketRef("p0", 1), DISCARD)
    with pytest.raises(AllocationError):
        alloc.add(SubpacketRef("p0", 1), Bin(slot=0))


def test_check_allocation_enforces_causality(single_packet_instance):
    alloc = Allocation([(SubpacketRef("p0", 1), Bin(slot=0))])
    check_allocation(single_packet_instance, alloc)
    late = simple_instance([unit_packet(arrival=2)], horizon=2)
    with pytest.raises(AllocationError, match="before arrival"):
        check_allocation(late, alloc)
    with pytest.raises(AllocationError, match="unknown packet"):
        check_allocation(single_packet_instance,
                         Allocation([(SubpacketRef("zz", 1), Bin(slot=0))]))
    with pytest.raises(AllocationError, match="outside horizon"):
        check_allocation(single_packet_instance,
                         Allocation([(SubpacketRef("p0", 1), Bin(slot=9))]))


def test_index_order_helper():
    ordered = Allocation([
        (SubpacketRef("p0", 1), Bin(slot=0)),
        (SubpacketRef("p0", 2), Bin(slot=2)),
        (SubpacketRef("p0", 3), DISCARD),
    ])
    assert allocation_in_index_order(ordered)
    swapped = Allocation([
        (SubpacketRef("p0", 1), Bin(slot=2)),
        (SubpacketRef("p0", 2), Bin(slot=0)),
    ])
    assert not allocation_in_index_order(swapped)


def test_bin_id_round_trip():
    for b in (Bin(slot=3, server=1), Bin(slot=0), DISCARD):
        assert Bin.from_id(b.id) == b
