"""Replay a pivot trace and check the structural facts a correct run obeys.

Everything is re-derived from the instance and the trace's policy sequence;
numbers stored in the trace are claims to confirm.  Constant-free facts
(flux layers, gain identities, per-pivot progress, monotone values) are hard
checks.  Iteration-count orders are reported against explicit thresholds
and only flagged.
"""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

from .core import MdpInstance, Policy, PolicyError
from .engine import OPTIMAL, PivotTrace, classify_event, default_iteration_cap
from .evaluate import EvalResult, best_gain, evaluate, per_state_flux
from .numerics import EXACT, Numerics, Scalar, close, fmt, leq, to_json_number
from .oracle import (
    DEFAULT_ENUMERATION_CAP,
    TooManyPolicies,
    brute_force_optimum,
    policy_count,
    verify_optimality_certificate,
)

ADVISORY = "advisory"


@dataclass(frozen=True)
class CheckResult:
    check: str
    scope: str
    passed: bool | None
    margin: Scalar | None
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "scope": self.scope,
            "pass": self.passed,
            "margin": None if self.margin is None else to_json_number(self.margin),
            "detail": self.detail,
        }


@dataclass
class VerificationReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        """True iff no hard check failed; skipped and advisory entries do not count."""
        return all(c.passed is not False for c in self.checks if c.scope != ADVISORY)

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if c.passed is False and c.scope != ADVISORY]

    def get(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.check == name:
                return c
        raise KeyError(name)

    def names(self) -> list[str]:
        return [c.check for c in self.checks]

    def extend(self, other: "VerificationReport | Iterable[CheckResult]") -> None:
        self.checks.extend(other.checks if isinstance(other, VerificationReport) else other)

    def to_json(self) -> str:
        return json.dumps([c.to_dict() for c in self.checks], indent=1) + "\n"


class _Tally:
    """Accumulates one named check over many instances, keeping the worst margin.

    Margins are slacks: ``rhs - lhs`` for ``lhs <= rhs`` and ``-|lhs - rhs|``
    for equalities, so a negative margin always means a violation in exact mode.
    """

    MAX_LISTED = 5

    def __init__(self, tol: Scalar):
        self.tol = tol
        self.order: list[str] = []
        self.worst: dict[str, Scalar | None] = {}
        self.count: Counter = Counter()
        self.bad: dict[str, list[str]] = {}

    def _note(self, name: str, margin: Scalar | None, ok: bool, where: str, why: str = "") -> None:
        if name not in self.worst:
            self.order.append(name)
            self.worst[name] = None
            self.bad[name] = []
        self.count[name] += 1
        cur = self.worst[name]
        if margin is not None and (cur is None or margin < cur):
            self.worst[name] = margin
        if not ok:
            self.bad[name].append(f"{where}: {why}" if why else where)

    def leq(self, name: str, lhs: Scalar, rhs: Scalar, where: str, scale: Scalar | None = None) -> bool:
        ok = leq(lhs, rhs, self.tol, rhs if scale is None else scale)
        self._note(name, rhs - lhs, ok, where, f"{fmt(lhs)} > {fmt(rhs)}")
        return ok

    def less(self, name: str, lhs: Scalar, rhs: Scalar, where: str) -> bool:
        # strict in exact mode; float mode cannot tell strict from equal
        ok = lhs < rhs if not self.tol else leq(lhs, rhs, self.tol, rhs)
        self._note(name, rhs - lhs, ok, where, f"{fmt(lhs)} >= {fmt(rhs)}")
        return ok

    def eq(self, name: str, lhs: Scalar, rhs: Scalar, where: str) -> bool:
        ok = close(lhs, rhs, self.tol)
        self._note(name, -abs(lhs - rhs), ok, where, f"{fmt(lhs)} != {fmt(rhs)}")
        return ok

    def flag(self, name: str, ok: bool, where: str, why: str = "") -> bool:
        self._note(name, None, ok, where, why)
        return ok

    def results(self, scope: str) -> list[CheckResult]:
        out = []
        for name in self.order:
            bad = self.bad[name]
            if bad:
                listed = "; ".join(bad[: self.MAX_LISTED])
                more = f" (+{len(bad) - self.MAX_LISTED} more)" if len(bad) > self.MAX_LISTED else ""
                detail = f"{len(bad)}/{self.count[name]} failed: {listed}{more}"
            else:
                detail = f"{self.count[name]} checked"
            out.append(CheckResult(name, scope, not bad, self.worst[name], detail))
        return out


def _numerics_for(trace: PivotTrace, numerics: Numerics | None) -> Numerics:
    if numerics is not None:
        return numerics
    return Numerics.from_name(trace.mode)


def _flux_layers(tally: _Tally, inst: MdpInstance, ev: EvalResult, numerics: Numerics, where: str) -> None:
    n = inst.n
    one = numerics.one()
    g = numerics.discounts(inst)
    st = ev.structure
    x = ev.flux
    nn = numerics.convert(inst.n) if numerics.exact else float(n)

    # LP rows: outflow of s equals one unit plus discounted inflow
    inflow = [one] * n
    for a in inst.actions:
        inflow[a.target] += g[a.id] * x[a.id]
    for s in range(n):
        out = sum((x[a] for a in inst.per_state[s]), numerics.zero())
        tally.eq("flux_conservation", out, inflow[s], f"{where} state {s}")

    path_total = numerics.zero()
    for s in st.path_order:
        xa = x[ev.policy.choice[s]]
        path_total += xa
        tally.leq("path_flux_lower", one, xa, f"{where} state {s}", xa)
        tally.leq("path_flux_upper", xa, nn, f"{where} state {s}")

    if inst.uniform_discount:
        gamma = numerics.convert(inst.gamma)
        lo = one / (one - gamma)
        hi = nn / (one - gamma)
        cycle_total = numerics.zero()
        for cyc in st.cycles:
            for a in cyc.actions:
                cycle_total += x[a]
                tally.leq("cycle_flux_lower", lo, x[a], f"{where} action {a}", x[a])
                tally.leq("cycle_flux_upper", x[a], hi, f"{where} action {a}")
        tally.leq("path_flux_total", path_total, nn * nn, where)
        tally.leq("cycle_flux_total", cycle_total, hi, where)
        tally.eq("total_flux", path_total + cycle_total, hi, where)
        return

    for cyc in st.cycles:
        gc = numerics.convert(cyc.discount)
        ga = numerics.convert(cyc.dominating_discount)
        circ = one / (one - gc)
        tally.leq("dominated_cycle_lower", one / (nn * (one - ga)), circ, f"{where} cycle {list(cyc.actions)}", circ)
        tally.leq("dominated_cycle_upper", circ, one / (one - ga), f"{where} cycle {list(cyc.actions)}")
        for pos, s in enumerate(cyc.states):
            xs = per_state_flux(inst, ev.policy, s, numerics, st)
            own = cyc.actions[pos]
            tally.eq("state_cycle_flux_own", xs[own], circ, f"{where} state {s}")
            for a in cyc.actions:
                if a == own:
                    continue
                tally.leq("state_cycle_flux_lower", gc * circ, xs[a], f"{where} state {s} action {a}", xs[a])
                tally.leq("state_cycle_flux_upper", xs[a], circ, f"{where} state {s} action {a}")


def check_flux_layers(inst: MdpInstance, pi: Policy, numerics: Numerics = EXACT) -> VerificationReport:
    """Flux interval checks at a single policy."""
    tally = _Tally(numerics.tolerance(inst))
    _flux_layers(tally, inst, evaluate(inst, pi, numerics), numerics, "policy")
    return VerificationReport(tally.results("policy"))


def _identities(
    tally: _Tally, inst: MdpInstance, ev1: EvalResult, ev2: EvalResult, numerics: Numerics, where: str
) -> None:
    g1 = ev1.gains
    lhs = sum((g1[a] * ev2.flux[a] for a in ev2.policy.choice), numerics.zero())
    tally.eq("gain_identity_total", lhs, ev2.objective - ev1.objective, where)
    for s in range(inst.n):
        xs = per_state_flux(inst, ev2.policy, s, numerics, ev2.structure)
        lhs_s = sum((g1[a] * xs[a] for a in ev2.policy.choice), numerics.zero())
        tally.eq("gain_identity_state", lhs_s, ev2.values[s] - ev1.values[s], f"{where} state {s}")


def check_identities(
    inst: MdpInstance, pi1: Policy, pi2: Policy, numerics: Numerics = EXACT
) -> VerificationReport:
    """Gains of ``pi1`` priced at the flux of ``pi2`` equal the value differences."""
    tally = _Tally(numerics.tolerance(inst))
    _identities(tally, inst, evaluate(inst, pi1, numerics), evaluate(inst, pi2, numerics), numerics, "pair")
    return VerificationReport(tally.results("pair"))


def identity_pairs_hold(
    inst: MdpInstance, pairs: Iterable[tuple[EvalResult, EvalResult]], numerics: Numerics = EXACT
) -> VerificationReport:
    """Batch form of :func:`check_identities` over already-evaluated policies."""
    tally = _Tally(numerics.tolerance(inst))
    for k, (ev1, ev2) in enumerate(pairs):
        _identities(tally, inst, ev1, ev2, numerics, f"pair {k}")
    return VerificationReport(tally.results("pairs"))


def _replay(inst: MdpInstance, trace: PivotTrace, tally: _Tally) -> list[Policy] | None:
    choice = list(trace.initial.choice)
    policies = [Policy(tuple(choice))]
    try:
        inst.check_policy(policies[0])
    except PolicyError as exc:
        tally.flag("replay", False, "initial", str(exc))
        return None
    for rec in trace.records:
        where = f"pivot {rec.iteration}"
        if not (0 <= rec.entering < inst.m):
            tally.flag("replay", False, where, f"no action {rec.entering}")
            return None
        src = inst.actions[rec.entering].source
        ok = tally.flag("replay", src == rec.state and choice[src] == rec.leaving and rec.entering != rec.leaving,
                        where, "state/leaving action do not match the entering action")
        if not ok:
            return None
        choice[src] = rec.entering
        policies.append(Policy(tuple(choice)))
    tally.flag("replay", tuple(choice) == trace.final.choice, "final", "final policy differs from replay")
    return policies


def check_trace(inst: MdpInstance, trace: PivotTrace, numerics: Numerics | None = None) -> VerificationReport:
    numerics = _numerics_for(trace, numerics)
    tol = numerics.tolerance(inst)
    tally = _Tally(tol)
    tally.flag("digest", trace.digest == inst.digest, "header", "trace was produced for another instance")

    policies = _replay(inst, trace, tally)
    if policies is None:
        return VerificationReport(tally.results("trace"))

    evals = [evaluate(inst, pi, numerics) for pi in policies]
    n = inst.n
    nn = numerics.convert(n) if numerics.exact else float(n)
    one = numerics.one()

    tally.flag("no_repeated_policy", len(set(policies)) == len(policies), "trace", "a policy repeats")

    for k, rec in enumerate(trace.records):
        where = f"pivot {rec.iteration}"
        before, after = evals[k], evals[k + 1]

        # (1) recorded claims against re-evaluation
        top = best_gain(before.gains, tol)
        tally.flag("pivot_rule", top is not None and top[0] == rec.entering, where,
                   f"highest-gain action is {None if top is None else top[0]}, trace entered {rec.entering}")
        delta = before.gains[rec.entering]
        tally.eq("recorded_gain", rec.gain, delta, where)
        tally.eq("recorded_objective", rec.objective_before, before.objective, f"{where} before")
        tally.eq("recorded_objective", rec.objective_after, after.objective, f"{where} after")
        if rec.values_before is not None:
            for s in range(n):
                tally.eq("recorded_values", rec.values_before[s], before.values[s], f"{where} before state {s}")
        if rec.values_after is not None:
            for s in range(n):
                tally.eq("recorded_values", rec.values_after[s], after.values[s], f"{where} after state {s}")
        created, broken = classify_event(inst, before.structure, after.structure, rec.entering, numerics)
        same_created = (created is None) == (rec.cycle_created is None) and (
            created is None or tuple(created.cycle) == tuple(rec.cycle_created.cycle))
        tally.flag("recorded_events", same_created and set(broken) == set(rec.cycles_broken), where,
                   "cycle events differ from re-derived ones")

        # (2) monotone values, (3) strict objective increase (recomputed and as recorded)
        for s in range(n):
            tally.leq("monotone_values", before.values[s], after.values[s], f"{where} state {s}", before.values[s])
        tally.less("strict_objective_increase", before.objective, after.objective, where)
        tally.less("strict_objective_increase", rec.objective_before, rec.objective_after, f"{where} (recorded)")

        # (4) per-pivot progress
        increase = after.objective - before.objective
        if created is None:
            tally.leq("path_pivot_progress", delta, increase, where, increase)
        else:
            if inst.uniform_discount:
                gamma = numerics.convert(inst.gamma)
                tally.leq("cycle_pivot_progress", delta / (one - gamma), increase, where, increase)
            ga = created.dominating_discount
            s = rec.state
            rise = after.values[s] - before.values[s]
            tally.leq("cycle_pivot_state_progress", delta / (nn * (one - ga)), rise, where, rise)

    # (5) basis gains vanish; final gains are nonpositive
    for k, ev in enumerate(evals):
        for a in ev.policy.choice:
            tally.eq("basis_gains_zero", ev.gains[a], numerics.zero(), f"iterate {k} action {a}")
    final = evals[-1]
    if trace.termination == OPTIMAL:
        worst = max(final.gains)
        tally.leq("final_gains_nonpositive", worst, tol, "final", one)
    else:
        tally.flag("final_gains_nonpositive", False, "final", f"run ended with {trace.termination}")
    for s in range(n):
        tally.eq("recorded_final_values", trace.final_values[s], final.values[s], f"state {s}")

    # (6) flux layers at every iterate
    for k, ev in enumerate(evals):
        _flux_layers(tally, inst, ev, numerics, f"iterate {k}")

    # gain identities for consecutive policies and for (initial, final)
    for k in range(len(evals) - 1):
        _identities(tally, inst, evals[k], evals[k + 1], numerics, f"pivot {k + 1}")
    if len(evals) > 2:
        _identities(tally, inst, evals[0], evals[-1], numerics, "initial->final")

    return VerificationReport(tally.results("trace"))


def check_against_oracle(
    inst: MdpInstance, trace: PivotTrace, numerics: Numerics | None = None, cap: int = DEFAULT_ENUMERATION_CAP
) -> VerificationReport:
    """Compare the trace's end point with exhaustive enumeration, when feasible."""
    numerics = _numerics_for(trace, numerics)
    count = policy_count(inst)
    if count > cap:
        return VerificationReport([
            CheckResult("oracle_optimum", "oracle", None, None, f"skipped: {count} policies exceeds cap {cap}"),
            CheckResult("oracle_certificate", "oracle", None, None, "skipped"),
        ])
    tally = _Tally(numerics.tolerance(inst))
    try:
        _, best_vals = brute_force_optimum(inst, numerics, cap)
    except TooManyPolicies as exc:  # pragma: no cover - guarded by the count above
        return VerificationReport([CheckResult("oracle_optimum", "oracle", None, None, f"skipped: {exc}")])
    final_vals = evaluate(inst, trace.final, numerics).values
    for s in range(inst.n):
        tally.eq("oracle_optimum", final_vals[s], best_vals[s], f"state {s}")
    cert = verify_optimality_certificate(inst, trace.final, numerics)
    tally.leq("oracle_certificate", cert.max_gain, cert.threshold, "final", numerics.one())
    return VerificationReport(tally.results("oracle"))


@dataclass(frozen=True)
class EventSummary:
    iterations: int
    cycle_creations: int
    max_gap: int
    gaps: tuple[int, ...]
    creations_by_discount: dict
    thresholds: dict
    flags: dict

    def to_checks(self) -> list[CheckResult]:
        out = []
        for key, ok in self.flags.items():
            out.append(CheckResult(f"events.{key}", ADVISORY, ok, None,
                                   f"observed {self._observed(key)} vs threshold {self.thresholds[key]}"))
        return out

    def _observed(self, key: str):
        if key == "total_iterations":
            return self.iterations
        if key == "max_gap":
            return self.max_gap
        if key == "cycle_creations":
            return self.cycle_creations
        return max(self.creations_by_discount.values(), default=0)


def event_accounting(trace: PivotTrace, inst: MdpInstance | None = None) -> EventSummary:
    """Cycle-creation statistics for one run.

    Gaps count pivots between consecutive creations, including the stretch
    from the start to the first creation and from the last creation to the
    end.  With ``inst`` given, observed counts are compared against the
    iteration orders with constant 10 and ``log n`` read as ``ceil(ln n) + 1``;
    the comparison is informational only.
    """
    marks = [rec.iteration for rec in trace.records if rec.cycle_created is not None]
    by_disc: Counter = Counter()
    for rec in trace.records:
        if rec.cycle_created is not None:
            by_disc[fmt(rec.cycle_created.dominating_discount)] += 1
    total = trace.iterations
    if total == 0:
        gaps: tuple[int, ...] = ()
    else:
        points = [0] + marks + ([total] if not marks or marks[-1] != total else [])
        gaps = tuple(b - a for a, b in zip(points, points[1:]))
    thresholds: dict = {}
    flags: dict = {}
    if inst is not None:
        n, m = inst.n, inst.m
        lg = math.ceil(math.log(n)) + 1
        thresholds["total_iterations"] = default_iteration_cap(inst)
        thresholds["max_gap"] = 10 * n**2 * m * lg
        if inst.uniform_discount:
            thresholds["cycle_creations"] = 10 * n * m * lg
        else:
            thresholds["cycle_creations"] = 10 * n**3 * m**2 * lg
            thresholds["creations_per_discount"] = 10 * n**3 * m * lg
        observed = {
            "total_iterations": total,
            "max_gap": max(gaps, default=0),
            "cycle_creations": len(marks),
            "creations_per_discount": max(by_disc.values(), default=0),
        }
        flags = {k: observed[k] <= v for k, v in thresholds.items()}
    return EventSummary(
        iterations=total,
        cycle_creations=len(marks),
        max_gap=max(gaps, default=0),
        gaps=gaps,
        creations_by_discount=dict(sorted(by_disc.items())),
        thresholds=thresholds,
        flags=flags,
    )


def verify_all(
    inst: MdpInstance,
    trace: PivotTrace,
    numerics: Numerics | None = None,
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP,
) -> VerificationReport:
    """Trace checks, oracle comparison and advisory event accounting in one report."""
    report = check_trace(inst, trace, numerics)
    if trace.digest == inst.digest:
        report.extend(check_against_oracle(inst, trace, numerics, enumeration_cap))
    report.extend(event_accounting(trace, inst).to_checks())
    return report

