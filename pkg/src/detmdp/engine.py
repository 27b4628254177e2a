"""Highest-gain simplex over policies, plus a policy-iteration baseline.

A simplex pivot on the flux LP of a deterministic MDP is a single-state
switch: the action with the largest gain replaces the action its source
state currently uses.  Every pivot is logged as a :class:`PivotRecord`,
including which policy cycles it closed or broke.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterator

from .core import MdpInstance, Policy, PolicyStructure, apply_pivot, decompose_policy
from .evaluate import EvalResult, best_gain, evaluate
from .numerics import EXACT, Numerics, Scalar, fmt, from_json_number, to_json_number

OPTIMAL = "Optimal"
ITERATION_CAP = "IterationCap"

TRACE_FORMAT = "detmdp-trace/1"


class NumericBreakdown(RuntimeError):
    """Values fell between consecutive policies by more than the tolerance."""


@dataclass(frozen=True)
class CycleEvent:
    cycle: tuple[int, ...]
    gamma_c: Scalar
    dominating_action: int
    dominating_discount: Scalar


@dataclass(frozen=True)
class PivotRecord:
    iteration: int
    entering: int
    leaving: int
    state: int
    gain: Scalar
    objective_before: Scalar
    objective_after: Scalar
    values_before: tuple[Scalar, ...] | None
    values_after: tuple[Scalar, ...] | None
    cycle_created: CycleEvent | None
    cycles_broken: tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class PivotTrace:
    digest: str
    mode: str
    initial: Policy
    records: tuple[PivotRecord, ...]
    final: Policy
    final_values: tuple[Scalar, ...]
    termination: str
    seed: int | None = None

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def exact(self) -> bool:
        return self.mode == "exact"

    def policies(self) -> Iterator[Policy]:
        """Initial policy followed by the policy after each pivot."""
        choice = list(self.initial.choice)
        yield Policy(tuple(choice))
        for rec in self.records:
            choice[rec.state] = rec.entering
            yield Policy(tuple(choice))

    def to_jsonl(self) -> str:
        return dump_trace(self)


@dataclass(frozen=True)
class PolicyIterationTrace:
    policies: tuple[Policy, ...]
    objectives: tuple[Scalar, ...]
    termination: str

    @property
    def iterations(self) -> int:
        return len(self.policies) - 1

    @property
    def final(self) -> Policy:
        return self.policies[-1]


def default_iteration_cap(inst: MdpInstance) -> int:
    n, m = inst.n, inst.m
    log_term = (math.ceil(math.log(n)) + 1) ** 2
    if inst.uniform_discount:
        return 10 * n**3 * m**2 * log_term
    return 10 * n**5 * m**3 * log_term


def classify_event(
    inst: MdpInstance,
    before: PolicyStructure,
    after: PolicyStructure,
    entering: int,
    numerics: Numerics = EXACT,
) -> tuple[CycleEvent | None, tuple[tuple[int, ...], ...]]:
    """Cycle closed by ``entering`` (if any) and the cycles that disappeared."""
    created = None
    cyc = after.cycle_of_action(entering)
    if cyc is not None:
        created = CycleEvent(
            cycle=cyc.actions,
            gamma_c=numerics.convert(cyc.discount),
            dominating_action=cyc.dominating_action,
            dominating_discount=numerics.convert(cyc.dominating_discount),
        )
    still = after.canonical_cycles
    broken = tuple(c.actions for c in before.cycles if c.actions not in still)
    return created, broken


def _check_monotone(before: EvalResult, after: EvalResult, tol: Scalar, iteration: int) -> None:
    for s, (vb, va) in enumerate(zip(before.values, after.values)):
        if va < vb - (tol * (1 + abs(vb)) if tol else 0):
            raise NumericBreakdown(
                f"pivot {iteration}: value of state {s} fell from {fmt(vb)} to {fmt(va)}"
            )
    if not after.objective > before.objective:
        if tol and after.objective >= before.objective - tol * (1 + abs(before.objective)):
            return
        raise NumericBreakdown(
            f"pivot {iteration}: objective did not increase ({fmt(before.objective)} -> {fmt(after.objective)})"
        )


def _pivot(
    inst: MdpInstance,
    current: EvalResult,
    numerics: Numerics,
    iteration: int,
    keep_values: bool = True,
) -> tuple[PivotRecord, EvalResult] | None:
    tol = numerics.tolerance(inst)
    top = best_gain(current.gains, tol)
    if top is None:
        return None
    entering, delta = top
    new_pi, leaving = apply_pivot(inst, current.policy, entering)
    nxt = evaluate(inst, new_pi, numerics, decompose_policy(inst, new_pi))
    _check_monotone(current, nxt, tol, iteration)
    created, broken = classify_event(inst, current.structure, nxt.structure, entering, numerics)
    rec = PivotRecord(
        iteration=iteration,
        entering=entering,
        leaving=leaving,
        state=inst.actions[entering].source,
        gain=delta,
        objective_before=current.objective,
        objective_after=nxt.objective,
        values_before=current.values if keep_values else None,
        values_after=nxt.values if keep_values else None,
        cycle_created=created,
        cycles_broken=broken,
    )
    return rec, nxt


def pivot_step(
    inst: MdpInstance, pi: Policy, numerics: Numerics = EXACT, iteration: int = 1
) -> tuple[PivotRecord, Policy] | None:
    """One highest-gain pivot from ``pi``; ``None`` when no gain is positive."""
    out = _pivot(inst, evaluate(inst, pi, numerics), numerics, iteration)
    if out is None:
        return None
    rec, nxt = out
    return rec, nxt.policy


def run_simplex(
    inst: MdpInstance,
    initial: Policy | None = None,
    numerics: Numerics = EXACT,
    iteration_cap: int | None = None,
    keep_values: bool = True,
) -> PivotTrace:
    if initial is None:
        initial = inst.min_id_policy()
    inst.check_policy(initial)
    cap = default_iteration_cap(inst) if iteration_cap is None else iteration_cap
    if cap < 1:
        raise ValueError("iteration cap must be at least 1")

    current = evaluate(inst, initial, numerics)
    records: list[PivotRecord] = []
    termination = ITERATION_CAP
    while True:
        if len(records) >= cap:
            # one more look: a capped run that happens to be optimal is still optimal
            if best_gain(current.gains, numerics.tolerance(inst)) is None:
                termination = OPTIMAL
            break
        out = _pivot(inst, current, numerics, len(records) + 1, keep_values)
        if out is None:
            termination = OPTIMAL
            break
        rec, current = out
        records.append(rec)

    seed = inst.meta.get("seed") if isinstance(inst.meta.get("seed"), int) else None
    return PivotTrace(
        digest=inst.digest,
        mode=numerics.name,
        initial=initial,
        records=tuple(records),
        final=current.policy,
        final_values=current.values,
        termination=termination,
        seed=seed,
    )


def run_policy_iteration(
    inst: MdpInstance,
    initial: Policy | None = None,
    numerics: Numerics = EXACT,
    iteration_cap: int | None = None,
) -> PolicyIterationTrace:
    """Switch every improvable state to its own best-gain action each round."""
    if initial is None:
        initial = inst.min_id_policy()
    inst.check_policy(initial)
    cap = default_iteration_cap(inst) if iteration_cap is None else iteration_cap
    if cap < 1:
        raise ValueError("iteration cap must be at least 1")
    tol = numerics.tolerance(inst)

    ev = evaluate(inst, initial, numerics)
    policies = [initial]
    objectives = [ev.objective]
    termination = ITERATION_CAP
    while True:
        choice = list(ev.policy.choice)
        changed = False
        for s, ids in enumerate(inst.per_state):
            top = best_gain([ev.gains[a] for a in ids], tol)
            if top is not None:
                choice[s] = ids[top[0]]
                changed = True
        if not changed:
            termination = OPTIMAL
            break
        if len(policies) - 1 >= cap:
            break
        ev = evaluate(inst, Policy(tuple(choice)), numerics)
        policies.append(ev.policy)
        objectives.append(ev.objective)
    return PolicyIterationTrace(tuple(policies), tuple(objectives), termination)


# --- trace serialization (JSONL) -------------------------------------------


def _vec(values):
    return None if values is None else [to_json_number(v) for v in values]


def record_to_dict(rec: PivotRecord) -> dict:
    created = None
    if rec.cycle_created is not None:
        ev = rec.cycle_created
        created = {
            "cycle": list(ev.cycle),
            "gamma_c": to_json_number(ev.gamma_c),
            "dominating_action": ev.dominating_action,
            "dominating_discount": to_json_number(ev.dominating_discount),
        }
    return {
        "type": "pivot",
        "iteration": rec.iteration,
        "entering": rec.entering,
        "leaving": rec.leaving,
        "state": rec.state,
        "gain": to_json_number(rec.gain),
        "objective_before": to_json_number(rec.objective_before),
        "objective_after": to_json_number(rec.objective_after),
        "values_before": _vec(rec.values_before),
        "values_after": _vec(rec.values_after),
        "cycle_created": created,
        "cycles_broken": [list(c) for c in rec.cycles_broken],
    }


def record_from_dict(d: dict, exact: bool) -> PivotRecord:
    num = lambda v: from_json_number(v, exact)  # noqa: E731
    vec = lambda vs: None if vs is None else tuple(num(v) for v in vs)  # noqa: E731
    created = d.get("cycle_created")
    if created is not None:
        created = CycleEvent(
            cycle=tuple(int(a) for a in created["cycle"]),
            gamma_c=num(created["gamma_c"]),
            dominating_action=int(created["dominating_action"]),
            dominating_discount=num(created["dominating_discount"]),
        )
    return PivotRecord(
        iteration=int(d["iteration"]),
        entering=int(d["entering"]),
        leaving=int(d["leaving"]),
        state=int(d["state"]),
        gain=num(d["gain"]),
        objective_before=num(d["objective_before"]),
        objective_after=num(d["objective_after"]),
        values_before=vec(d.get("values_before")),
        values_after=vec(d.get("values_after")),
        cycle_created=created,
        cycles_broken=tuple(tuple(int(a) for a in c) for c in d.get("cycles_broken", ())),
    )


def dump_trace(trace: PivotTrace) -> str:
    lines = [
        {
            "type": "header",
            "format": TRACE_FORMAT,
            "digest": trace.digest,
            "mode": trace.mode,
            "seed": trace.seed,
            "initial_policy": list(trace.initial.choice),
        }
    ]
    lines.extend(record_to_dict(r) for r in trace.records)
    lines.append(
        {
            "type": "final",
            "termination": trace.termination,
            "iterations": trace.iterations,
            "final_policy": list(trace.final.choice),
            "final_values": _vec(trace.final_values),
        }
    )
    return "".join(json.dumps(obj, separators=(", ", ": ")) + "\n" for obj in lines)


class TraceFormatError(ValueError):
    pass


def parse_trace(text: str) -> PivotTrace:
    rows = [json.loads(line) for line in text.splitlines() if line.strip()]
    if not rows or rows[0].get("type") != "header":
        raise TraceFormatError("trace must start with a header line")
    head = rows[0]
    exact = head.get("mode") == "exact"
    pivots = [r for r in rows[1:] if r.get("type") == "pivot"]
    finals = [r for r in rows[1:] if r.get("type") == "final"]
    if len(finals) != 1:
        raise TraceFormatError("trace must end with exactly one final line")
    fin = finals[0]
    return PivotTrace(
        digest=head["digest"],
        mode=head["mode"],
        initial=Policy(tuple(head["initial_policy"])),
        records=tuple(record_from_dict(r, exact) for r in pivots),
        final=Policy(tuple(fin["final_policy"])),
        final_values=tuple(from_json_number(v, exact) for v in fin["final_values"]),
        termination=fin["termination"],
        seed=head.get("seed"),
    )
