from __future__ import annotations

from fractions import Fraction

import pytest

from aqisim.model import CostFamily, Instance, Packet, linear, tabulated


def unit_packet(pid="p0", arrival=0, value=5, slope=1, weight=1, deadline=None) -> Packet:
    """One-fragment packet with tabulated utility [0, value] and linear lag."""
    return Packet(
        id=pid, arrival=arrival, subpackets=1, weight=Fraction(weight),
        distortion=tabulated([0, value]), delay_cost=linear(slope), deadline=deadline,
    )


def simple_instance(packets, horizon=2, energy=None, servers=1) -> Instance:
    return Instance(
        packets=tuple(packets), horizon=horizon, servers=servers,
        energy=tuple(energy) if energy else (linear(1),) * servers,
    )


@pytest.fixture
def single_packet_instance() -> Instance:
    # utility 5, lag slope 1, energy slope 1, slots 0..2
    return simple_instance([unit_packet()], horizon=2)


@pytest.fixture
def convex_energy() -> CostFamily:
    return tabulated([0, 1, 3, 6, 10, 15, 21])
