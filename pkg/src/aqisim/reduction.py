"""Reduction of the locking allocator to plain online greedy.

A frozen-increment twin of an instance keeps the same resources and bins but
drops locking: a (fragment, bin) pair whose bin would already be locked at
the fragment's arrival is frozen at marginal value 0; every other pair keeps
its exact marginal. Plain greedy on the twin, with ties resolved exactly like
the locking allocator, reproduces its run step by step; the twin's offline
maximum dominates the locking optimum. Both facts are checkable here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
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
from .greedy import arrival_order, pick_bin, run_online_greedy
from .oracle import DEFAULT_BUDGET, offline_optimal
from .valuation import evaluate, marginal_value

ZERO = Fraction(0)


@dataclass
class FrozenInstance:
    """Lock-free twin: same resources, bins and arrival order, frozen gains."""

    inst: Instance
    resources: list[SubpacketRef]
    arrivals: dict[SubpacketRef, int]
    bins: list[Bin]

    def gain(self, alloc: Allocation, ref: SubpacketRef, b: Bin) -> Fraction:
        """Frozen marginal: 0 once the bin outlives its lock for this fragment."""
        if self.arrivals[ref] > b.lock_time:
            return ZERO
        return marginal_value(self.inst, alloc, ref, b)


def build_frozen(inst: Instance) -> FrozenInstance:
    resources = arrival_order(inst)
    arrivals = {ref: inst.packet(ref.packet).arrival for ref in resources}
    bins = [
        Bin(slot=t, server=s)
        for t in range(inst.horizon + 1)
        for s in range(inst.servers)
    ]
    bins.append(DISCARD)
    return FrozenInstance(inst=inst, resources=resources, arrivals=arrivals, bins=bins)


def telescoped_value(frozen: FrozenInstance, alloc: Allocation) -> Fraction:
    """Value of an assignment as the sum of frozen marginals in arrival order."""
    order = {ref: i for i, ref in enumerate(frozen.resources)}
    entries = sorted(alloc.entries.items(), key=lambda e: order[e[0]])
    running = Allocation()
    total = ZERO
    for ref, b in entries:
        total += frozen.gain(running, ref, b)
        running.add(ref, b)
    return total


@dataclass
class FrozenStep:
    step: int
    ref: SubpacketRef
    chosen: Bin
    gain: Fraction


@dataclass
class FrozenRun:
    allocation: Allocation
    value: Fraction
    steps: list[FrozenStep] = field(default_factory=list)


def run_lockfree_greedy(frozen: FrozenInstance, perturb=None) -> FrozenRun:
    """Plain greedy over all bins of the frozen twin.

    Tie rule: a strictly positive maximum already forces a bin the fragment
    could still reach; at a zero maximum, candidates the fragment could not
    reach rank behind the discard bin. Within each class, earliest slot and
    lowest server win, matching the locking allocator's order. `perturb` may
    rewrite gains (fault injection for harness self-tests).
    """
    alloc = Allocation()
    steps: list[FrozenStep] = []
    total = ZERO
    for i, ref in enumerate(frozen.resources):
        reachable = [b for b in frozen.bins if frozen.arrivals[ref] <= b.lock_time and not b.is_discard]
        gated = [b for b in frozen.bins if frozen.arrivals[ref] > b.lock_time]
        ordered = reachable + [DISCARD] + gated
        options = []
        for b in ordered:
            g = frozen.gain(alloc, ref, b)
            if perturb is not None:
                g = perturb(i, ref, b, g)
            options.append((b, g))
        chosen, gain = pick_bin(options)
        alloc.add(ref, chosen)
        total += gain
        steps.append(FrozenStep(step=i, ref=ref, chosen=chosen, gain=gain))
    return FrozenRun(allocation=alloc, value=total, steps=steps)


def frozen_optimal(inst: Instance, budget: int = DEFAULT_BUDGET):
    """Offline maximum of the frozen twin's value.

    Assignments using unreachable (frozen-at-0) bins never help: they add
    nothing themselves and only crowd slots or raise fragment counts, so the
    maximizer can be searched over reachable schedules, where the telescoped
    value coincides with the plain allocation value. The search is therefore
    the exact oracle's, re-scored and re-verified through the telescoping.
    """
    frozen = build_frozen(inst)
    res = offline_optimal(inst, budget=budget)
    y = telescoped_value(frozen, res.allocation)
    if y != res.valuation.total:
        raise AqiError(
            f"telescoped value {y} disagrees with allocation value {res.valuation.total}"
        )
    return res.allocation, y


def exhaustive_frozen_max(inst: Instance, node_limit: int = 2_000_000):
    """Independent tiny-scale maximizer of the frozen value over ALL bins,
    including unreachable ones; exists to cross-check frozen_optimal's
    reachable-schedules argument, not for production use."""
    frozen = build_frozen(inst)
    refs = frozen.resources
    best: tuple[Fraction, Allocation] | None = None
    nodes = 0

    def dfs(i: int, alloc: Allocation, total: Fraction):
        nonlocal best, nodes
        nodes += 1
        if nodes > node_limit:
            raise AqiError("exhaustive frozen search exceeded its node limit")
        if i == len(refs):
            if best is None or total > best[0]:
                best = (total, alloc.copy())
            return
        ref = refs[i]
        for b in frozen.bins:
            g = frozen.gain(alloc, ref, b)
            alloc.add(ref, b)
            dfs(i + 1, alloc, total + g)
            del alloc.entries[ref]

    dfs(0, Allocation(), ZERO)
    assert best is not None
    return best[1], best[0]


@dataclass
class BridgeReport:
    """Offline bridge: locking optimum vs the frozen twin's optimum."""

    z_opt: Fraction
    y_opt_telescoped: Fraction
    y_frozen_opt: Fraction
    telescoping_ok: bool
    bridge_ok: bool

    @property
    def ok(self) -> bool:
        return self.telescoping_ok and self.bridge_ok

    def to_json(self) -> dict:
        return {
            "z_opt": rational_to_json(self.z_opt),
            "y_opt_telescoped": rational_to_json(self.y_opt_telescoped),
            "y_frozen_opt": rational_to_json(self.y_frozen_opt),
            "telescoping_ok": self.telescoping_ok,
            "bridge_ok": self.bridge_ok,
        }


def check_offline_bridge(inst: Instance, omega: Allocation | None = None,
                         budget: int = DEFAULT_BUDGET) -> BridgeReport:
    """Verify the locking optimum telescopes exactly and never beats the
    frozen twin's optimum."""
    if omega is None:
        omega = offline_optimal(inst, budget=budget).allocation
    frozen = build_frozen(inst)
    z = evaluate(inst, omega).total
    y = telescoped_value(frozen, omega)
    _, y_frozen = frozen_optimal(inst, budget=budget)
    return BridgeReport(
        z_opt=z,
        y_opt_telescoped=y,
        y_frozen_opt=y_frozen,
        telescoping_ok=(z == y),
        bridge_ok=(z <= y_frozen),
    )


@dataclass
class ChainReport:
    """The halving chain: greedy equals its frozen twin, which halves the
    frozen optimum, which dominates the locking optimum."""

    z_greedy: Fraction
    y_frozen_greedy: Fraction
    y_frozen_opt: Fraction
    z_opt: Fraction
    greedy_equal: bool
    steps_equal: bool
    frozen_half_ok: bool
    bridge_ok: bool
    step_mismatches: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.greedy_equal and self.steps_equal and self.frozen_half_ok and self.bridge_ok

    @property
    def composed_half_ok(self) -> bool:
        return 2 * self.z_greedy >= self.z_opt

    def to_json(self) -> dict:
        return {
            "z_greedy": rational_to_json(self.z_greedy),
            "y_frozen_greedy": rational_to_json(self.y_frozen_greedy),
            "y_frozen_opt": rational_to_json(self.y_frozen_opt),
            "z_opt": rational_to_json(self.z_opt),
            "links": {
                "greedy_equal": self.greedy_equal,
                "steps_equal": self.steps_equal,
                "frozen_half_ok": self.frozen_half_ok,
                "bridge_ok": self.bridge_ok,
                "composed_half_ok": self.composed_half_ok,
            },
            "step_mismatches": self.step_mismatches,
        }


def check_guarantee_chain(inst: Instance, budget: int = DEFAULT_BUDGET,
                          perturb=None) -> ChainReport:
    """Run every link of the halving argument on one instance, exactly."""
    greedy_run = run_online_greedy(inst)
    frozen = build_frozen(inst)
    frozen_run = run_lockfree_greedy(frozen, perturb=perturb)
    omega = offline_optimal(inst, budget=budget)
    _, y_frozen_opt = frozen_optimal(inst, budget=budget)

    mismatches = []
    for raw, fro in zip(greedy_run.state.steps, frozen_run.steps):
        if raw.ref != fro.ref or raw.chosen != fro.chosen:
            mismatches.append({
                "step": raw.step,
                "packet": raw.ref.packet,
                "index": raw.ref.index,
                "locking_bin": raw.chosen.id,
                "frozen_bin": fro.chosen.id,
            })
    z_greedy = greedy_run.valuation.total
    return ChainReport(
        z_greedy=z_greedy,
        y_frozen_greedy=frozen_run.value,
        y_frozen_opt=y_frozen_opt,
        z_opt=omega.valuation.total,
        greedy_equal=(z_greedy == frozen_run.value),
        steps_equal=not mismatches,
        frozen_half_ok=(2 * frozen_run.value >= y_frozen_opt),
        bridge_ok=(y_frozen_opt >= omega.valuation.total),
        step_mismatches=mismatches,
    )
