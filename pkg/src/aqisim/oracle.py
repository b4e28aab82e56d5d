"""Offline-optimal references: exhaustive branch-and-bound search for the
general problem, one full-graph matching for the unit-packet case, and the
ratio report comparing an online run against them.

The search enumerates, per packet, every in-order schedule of its fragments
(non-decreasing slots, any server, a discarded suffix) in ascending key
order; depth-first search with an admissible bound prunes, and only strict
improvements replace the incumbent, so the reported optimum is the
lexicographically smallest maximizer. All arithmetic is integer-scaled exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .model import (
    DISCARD,
    Allocation,
    AqiError,
    Bin,
    Instance,
    SubpacketRef,
    rational_to_json,
)
from .matching import MatchingResult, expand_binary, max_weight_matching
from .valuation import Valuation, _packet_term, evaluate

DEFAULT_BUDGET = 10_000_000

ZERO = Fraction(0)


class BudgetError(AqiError):
    """The exact search would exceed its node budget; never approximated."""


def _exact_int(x: Fraction) -> int:
    if x.denominator != 1:
        raise AqiError(f"value {x} escaped the integer scaling")
    return x.numerator


@dataclass
class OracleResult:
    allocation: Allocation
    valuation: Valuation
    nodes: int


def _packet_candidates(inst: Instance, p, scale: int):
    """All in-order schedules of one packet with their scaled values.

    A schedule is a tuple of (slot, server) pairs, slots non-decreasing,
    with discarded fragments as a trailing sentinel. Schedules whose value
    cannot pay the minimum energy of their transmissions are dropped: they
    are strictly dominated by discarding everything.
    """
    emin = min(inst.energy[s].increment(0) for s in range(inst.servers))
    horizon = inst.horizon
    out = []

    def value_of(entries) -> Fraction:
        if not entries:
            return ZERO
        last = max(slot for slot, _ in entries)
        return _packet_term(p, len(entries), max(last, p.arrival))

    def emit(entries):
        value = value_of(entries)
        if value - emin * len(entries) < 0:
            return
        out.append((tuple(entries), _exact_int(value * scale)))

    def extend(entries, min_slot, min_server):
        emit(entries)  # discard the remaining suffix
        if len(entries) == p.subpackets:
            return
        for slot in range(min_slot, horizon + 1):
            first_server = min_server if slot == min_slot else 0
            for server in range(first_server, inst.servers):
                entries.append((slot, server))
                extend(entries, slot, server)
                entries.pop()

    extend([], p.arrival, 0)
    # ascending by padded key: generation order is depth-first with the
    # discard suffix emitted before longer schedules, which is NOT ascending;
    # sort explicitly with discards ranked last.
    infinity = (1 << 62, 0)
    out.sort(key=lambda c: c[0] + (infinity,) * (p.subpackets - len(c[0])))
    return out


def _value_scale(inst: Instance) -> int:
    scale = 1
    total = inst.total_subpackets
    for s in range(inst.servers):
        for c in range(total + 1):
            scale = math.lcm(scale, inst.energy[s].value(c).denominator)
    for p in inst.packets:
        for count in range(p.subpackets + 1):
            scale = math.lcm(scale, p.utility(count).denominator)
        for lag in range(inst.horizon - p.arrival + 1):
            scale = math.lcm(scale, p.lag_cost(lag).denominator)
    return scale


def offline_optimal(inst: Instance, budget: int = DEFAULT_BUDGET) -> OracleResult:
    """Exact maximum-value allocation by pruned exhaustive search.

    Raises BudgetError once more than `budget` search nodes are expanded;
    the result is never silently approximate.
    """
    scale = _value_scale(inst)
    packets = sorted(inst.packets, key=lambda p: p.id)
    candidates = [_packet_candidates(inst, p, scale) for p in packets]
    total_sub = inst.total_subpackets
    # scaled marginal-energy tables per server; occupancy never exceeds total-1
    g_inc = [
        [_exact_int(inst.energy[s].increment(c) * scale) for c in range(total_sub)]
        for s in range(inst.servers)
    ]
    emin_scaled = min(g[0] for g in g_inc) if total_sub else 0
    suffix_best = [0] * (len(packets) + 1)
    for i in range(len(packets) - 1, -1, -1):
        best_net = max((v - emin_scaled * len(e) for e, v in candidates[i]), default=0)
        suffix_best[i] = suffix_best[i + 1] + max(best_net, 0)

    counts = [[0] * (inst.horizon + 1) for _ in range(inst.servers)]
    chosen: list[int] = [0] * len(packets)
    best_total: int | None = None
    best_choice: list[int] = []
    nodes = 0

    def dfs(i: int, partial: int):
        nonlocal nodes, best_total, best_choice
        if i == len(packets):
            if best_total is None or partial > best_total:
                best_total = partial
                best_choice = chosen.copy()
            return
        if best_total is not None and partial + suffix_best[i] <= best_total:
            return
        for ci, (entries, value) in enumerate(candidates[i]):
            nodes += 1
            if nodes > budget:
                raise BudgetError(
                    f"instance too large for exact oracle: more than {budget} nodes"
                )
            delta = value
            for slot, server in entries:
                delta -= g_inc[server][counts[server][slot]]
                counts[server][slot] += 1
            chosen[i] = ci
            dfs(i + 1, partial + delta)
            for slot, server in entries:
                counts[server][slot] -= 1

    dfs(0, 0)
    assert best_total is not None  # the all-discard assignment always exists

    alloc = Allocation()
    for i, p in enumerate(packets):
        entries, _ = candidates[i][best_choice[i]]
        for j, (slot, server) in enumerate(entries, start=1):
            alloc.add(SubpacketRef(p.id, j), Bin(slot=slot, server=server))
        for j in range(len(entries) + 1, p.subpackets + 1):
            alloc.add(SubpacketRef(p.id, j), DISCARD)
    val = evaluate(inst, alloc)
    if val.total != Fraction(best_total, scale):
        raise AqiError(
            f"oracle bookkeeping out of sync: search says {Fraction(best_total, scale)}, "
            f"evaluation says {val.total}"
        )
    return OracleResult(allocation=alloc, valuation=val, nodes=nodes)


def offline_optimal_binary(inst: Instance) -> MatchingResult:
    """Offline optimum of a unit-packet instance as one full-graph matching."""
    expanded = expand_binary(inst, full_depth=True)
    return max_weight_matching(expanded.graph)


@dataclass
class RatioReport:
    alg_value: Fraction
    opt_value: Fraction
    ratio: Fraction | None
    kind: str  # "ok" | "undefined" | "degenerate"
    violation: bool

    def to_json(self) -> dict:
        return {
            "alg_value": rational_to_json(self.alg_value),
            "opt_value": rational_to_json(self.opt_value),
            "ratio": None if self.ratio is None else rational_to_json(self.ratio),
            "ratio_float": None if self.ratio is None else float(self.ratio),
            "kind": self.kind,
            "violation": self.violation,
        }


def competitive_ratio(alg_value: Fraction, opt_value: Fraction) -> RatioReport:
    """Exact alg/opt ratio report; ratios below one half are flagged.

    A zero optimum leaves the ratio undefined; a negative optimum marks a
    degenerate comparison (the optimum can always discard everything for 0,
    so a negative value signals an oracle bug upstream).
    """
    if opt_value < 0:
        return RatioReport(alg_value, opt_value, None, "degenerate", violation=True)
    if opt_value == 0:
        return RatioReport(alg_value, opt_value, None, "undefined", violation=False)
    ratio = Fraction(alg_value, 1) / opt_value
    return RatioReport(alg_value, opt_value, ratio, "ok", violation=ratio < Fraction(1, 2))
