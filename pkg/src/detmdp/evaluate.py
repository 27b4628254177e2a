"""Policy evaluation in O(n) using the cycle/in-tree shape of a policy.

Values satisfy ``v_s = r_a + gamma_a * v_target(a)`` for the action ``a``
chosen at ``s``.  Flux is the discounted visitation mass when one unit is
injected at every state (or at a single state, for per-state flux).
Each transition is discounted by the discount of the action taken.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .core import MdpInstance, Policy, PolicyStructure, decompose_policy
from .numerics import EXACT, Numerics, Scalar


@dataclass(frozen=True)
class EvalResult:
    policy: Policy
    structure: PolicyStructure
    values: tuple[Scalar, ...]
    flux: tuple[Scalar, ...]
    gains: tuple[Scalar, ...]
    objective: Scalar


def _structure(inst, pi, structure):
    return structure if structure is not None else decompose_policy(inst, pi)


def value_vector(
    inst: MdpInstance,
    pi: Policy,
    numerics: Numerics = EXACT,
    structure: PolicyStructure | None = None,
) -> tuple[Scalar, ...]:
    st = _structure(inst, pi, structure)
    r = numerics.rewards(inst)
    g = numerics.discounts(inst)
    one = numerics.one()
    v: list[Scalar] = [numerics.zero()] * inst.n

    for cyc in st.cycles:
        acts = cyc.actions
        k = len(acts)
        # reward collected once around the cycle starting at states[0]
        around = numerics.zero()
        mult = one
        for a in acts:
            around += mult * r[a]
            mult *= g[a]
        head = around / (one - mult)
        v[cyc.states[0]] = head
        nxt = head
        for i in range(k - 1, 0, -1):
            a = acts[i]
            nxt = r[a] + g[a] * nxt
            v[cyc.states[i]] = nxt

    # path states depend on their successor, which is one step closer to a cycle
    choice = pi.choice
    targets = inst.targets
    for s in st.path_order:
        a = choice[s]
        v[s] = r[a] + g[a] * v[targets[a]]
    return tuple(v)


def _flux_from_sources(
    inst: MdpInstance,
    pi: Policy,
    st: PolicyStructure,
    sources: Sequence[Scalar],
    numerics: Numerics,
) -> tuple[Scalar, ...]:
    g = numerics.discounts(inst)
    one = numerics.one()
    choice = pi.choice
    targets = inst.targets
    inflow = list(sources)
    y: list[Scalar] = [numerics.zero()] * inst.n

    # farthest path states first so each in-tree is fully accumulated
    for s in reversed(st.path_order):
        a = choice[s]
        y[s] = inflow[s]
        inflow[targets[a]] += g[a] * y[s]

    for cyc in st.cycles:
        acts = cyc.actions
        states = cyc.states
        k = len(acts)
        # mass entering at states[j] reaches states[0] discounted by acts[j..k-1]
        acc = inflow[states[0]]
        mult = one
        for j in range(k - 1, 0, -1):
            mult *= g[acts[j]]
            acc += inflow[states[j]] * mult
        mult *= g[acts[0]]
        y[states[0]] = acc / (one - mult)
        for i in range(1, k):
            y[states[i]] = inflow[states[i]] + g[acts[i - 1]] * y[states[i - 1]]

    x: list[Scalar] = [numerics.zero()] * inst.m
    for s in range(inst.n):
        x[choice[s]] = y[s]
    return tuple(x)


def flux_vector(
    inst: MdpInstance,
    pi: Policy,
    numerics: Numerics = EXACT,
    structure: PolicyStructure | None = None,
) -> tuple[Scalar, ...]:
    st = _structure(inst, pi, structure)
    return _flux_from_sources(inst, pi, st, [numerics.one()] * inst.n, numerics)


def per_state_flux(
    inst: MdpInstance,
    pi: Policy,
    s: int,
    numerics: Numerics = EXACT,
    structure: PolicyStructure | None = None,
) -> tuple[Scalar, ...]:
    """Flux when the single unit of initial mass is placed on state ``s``."""
    if not (0 <= s < inst.n):
        raise IndexError(f"state {s} out of range")
    st = _structure(inst, pi, structure)
    src = [numerics.zero()] * inst.n
    src[s] = numerics.one()
    return _flux_from_sources(inst, pi, st, src, numerics)


def gain_vector(inst: MdpInstance, values: Sequence[Scalar], numerics: Numerics = EXACT) -> tuple[Scalar, ...]:
    r = numerics.rewards(inst)
    g = numerics.discounts(inst)
    return tuple(
        r[a.id] + g[a.id] * values[a.target] - values[a.source] for a in inst.actions
    )


def objective(
    inst: MdpInstance,
    pi: Policy,
    numerics: Numerics = EXACT,
    structure: PolicyStructure | None = None,
) -> Scalar:
    return sum(value_vector(inst, pi, numerics, structure), numerics.zero())


def best_gain(gains: Sequence[Scalar], threshold: Scalar = 0) -> tuple[int, Scalar] | None:
    """Highest gain and its action (smallest id on ties), or None if no gain exceeds ``threshold``."""
    best = None
    for a, val in enumerate(gains):
        if best is None or val > best[1]:
            best = (a, val)
    if best is None or best[1] <= threshold:
        return None
    return best


def evaluate(
    inst: MdpInstance,
    pi: Policy,
    numerics: Numerics = EXACT,
    structure: PolicyStructure | None = None,
) -> EvalResult:
    st = _structure(inst, pi, structure)
    values = value_vector(inst, pi, numerics, st)
    return EvalResult(
        policy=pi,
        structure=st,
        values=values,
        flux=flux_vector(inst, pi, numerics, st),
        gains=gain_vector(inst, values, numerics),
        objective=sum(values, numerics.zero()),
    )
