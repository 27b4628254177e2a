from __future__ import annotations

import dataclasses
import json
from fractions import Fraction

from hypothesis import given, settings

from detmdp.core import MdpInstance, Policy
from detmdp.engine import run_simplex
from detmdp.numerics import FLOAT
from detmdp.verify import (
    ADVISORY,
    CheckResult,
    VerificationReport,
    check_against_oracle,
    check_flux_layers,
    check_identities,
    check_trace,
    event_accounting,
    verify_all,
)

from .conftest import instance_and_policy, instance_and_two_policies


def test_ex1_trace_passes(ex1):
    tr = run_simplex(ex1, Policy((1, 2)))
    rep = verify_all(ex1, tr)
    assert rep.passed, rep.failures()
    assert rep.get("oracle_optimum").passed
    # the objective rises by exactly the gain when no cycle is created
    assert rep.get("path_pivot_progress").margin == 0


def test_ex2_cycle_progress_is_tight(ex2):
    tr = run_simplex(ex2, Policy((3, 2)))
    rep = check_trace(ex2, tr)
    assert rep.passed
    tight = rep.get("cycle_pivot_progress")
    assert tight.passed and tight.margin == 0
    assert rep.get("strict_objective_increase").margin == Fraction(9)


def test_ex3_state_progress(ex3):
    tr = run_simplex(ex3, Policy((0, 2)))
    rep = check_trace(ex3, tr)
    assert rep.passed
    assert "cycle_pivot_progress" not in rep.names()
    assert rep.get("cycle_pivot_state_progress").passed
    assert rep.get("state_cycle_flux_own").passed


def test_fault_injection_keeps_evaluating(ex2):
    tr = run_simplex(ex2, Policy((3, 2)))
    rec = tr.records[1]
    bad_rec = dataclasses.replace(rec, objective_after=rec.objective_before - 1)
    bad = dataclasses.replace(tr, records=(tr.records[0], bad_rec))
    rep = check_trace(ex2, bad)
    failed = {c.check for c in rep.failures()}
    assert failed == {"recorded_objective", "strict_objective_increase"}
    # everything else was still evaluated and holds
    assert rep.get("flux_conservation").passed and rep.get("gain_identity_total").passed
    assert "2/4 failed" not in rep.get("strict_objective_increase").detail
    assert "1/" in rep.get("recorded_objective").detail


def test_wrong_recorded_gain_flagged(ex2):
    tr = run_simplex(ex2, Policy((3, 2)))
    rec = dataclasses.replace(tr.records[0], gain=tr.records[0].gain + 1)
    rep = check_trace(ex2, dataclasses.replace(tr, records=(rec, tr.records[1])))
    assert not rep.get("recorded_gain").passed


def test_digest_mismatch(ex1, ex2):
    tr = run_simplex(ex2)
    rep = check_trace(ex1, tr)
    assert not rep.passed and not rep.get("digest").passed


def test_capped_trace_not_final(ex2):
    tr = run_simplex(ex2, Policy((3, 2)), iteration_cap=1)
    rep = check_trace(ex2, tr)
    assert [c.check for c in rep.failures()] == ["final_gains_nonpositive"]


def test_oracle_skip(ex2):
    tr = run_simplex(ex2)
    rep = check_against_oracle(ex2, tr, cap=2)
    assert all(c.passed is None for c in rep.checks)
    assert rep.passed


def test_report_json_keys(ex1):
    rep = verify_all(ex1, run_simplex(ex1))
    rows = json.loads(rep.to_json())
    assert all(set(r) == {"check", "scope", "pass", "margin", "detail"} for r in rows)
    assert any(r["scope"] == ADVISORY for r in rows)


def test_advisory_does_not_fail():
    rep = VerificationReport([CheckResult("events.max_gap", ADVISORY, False, None)])
    assert rep.passed and rep.failures() == []


class TestFluxLayers:
    def test_uniform_ex1(self, ex1):
        rep = check_flux_layers(ex1, Policy((0, 2)))
        assert rep.passed
        # total flux is n / (1 - gamma) = 4, exactly
        assert rep.get("total_flux").margin == 0
        # path state 0 carries exactly one unit
        assert rep.get("path_flux_lower").margin == 0

    def test_nonuniform_ex3(self, ex3):
        rep = check_flux_layers(ex3, Policy((0, 1)))
        assert rep.passed
        assert "total_flux" not in rep.names()
        assert rep.get("dominated_cycle_lower").margin == Fraction(1000, 109) - 5

    @settings(max_examples=150, deadline=None)
    @given(instance_and_policy())
    def test_every_policy(self, data):
        inst, pi = data
        assert check_flux_layers(inst, pi).passed
        assert check_flux_layers(inst, pi, FLOAT).passed


class TestIdentities:
    def test_ex1(self, ex1):
        rep = check_identities(ex1, Policy((1, 2)), Policy((0, 2)))
        assert rep.passed and rep.get("gain_identity_total").margin == 0

    @settings(max_examples=150, deadline=None)
    @given(instance_and_two_policies())
    def test_random_pairs(self, data):
        inst, p1, p2 = data
        assert check_identities(inst, p1, p2).passed
        assert check_identities(inst, p1, p2, FLOAT).passed


@settings(max_examples=100, deadline=None)
@given(instance_and_policy())
def test_simplex_traces_verify(data):
    inst, pi = data
    assert verify_all(inst, run_simplex(inst, pi)).passed
    assert check_trace(inst, run_simplex(inst, pi, FLOAT)).passed


class TestEvents:
    def test_ex2(self, ex2):
        ev = event_accounting(run_simplex(ex2, Policy((3, 2))), ex2)
        assert (ev.iterations, ev.cycle_creations, ev.max_gap, ev.gaps) == (2, 1, 2, (2,))
        assert ev.creations_by_discount == {"9/10": 1}
        assert all(ev.flags.values())

    def test_no_pivots(self, ex1):
        ev = event_accounting(run_simplex(ex1, Policy((0, 2))))
        assert (ev.iterations, ev.cycle_creations, ev.max_gap, ev.gaps) == (0, 0, 0, ())
        assert ev.thresholds == {}

    def test_trailing_gap(self):
        inst = MdpInstance.from_tuples(2, [(0, 0, 0, "0.5"), (0, 1, 1, "0.5"), (1, 1, 1, "0.5")])
        ev = event_accounting(run_simplex(inst, Policy((0, 2))))
        assert ev.cycle_creations == 0 and ev.gaps == (ev.iterations,)
