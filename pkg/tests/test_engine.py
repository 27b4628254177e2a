from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings

from detmdp.core import MdpInstance, Policy, decompose_policy
from detmdp.engine import (
    ITERATION_CAP,
    OPTIMAL,
    classify_event,
    default_iteration_cap,
    parse_trace,
    pivot_step,
    run_policy_iteration,
    run_simplex,
)
from detmdp.evaluate import evaluate
from detmdp.numerics import FLOAT
from detmdp.oracle import brute_force_optimum

from .conftest import instance_and_policy, instances

F = Fraction


class TestPivotStep:
    def test_ex1(self, ex1):
        rec, new = pivot_step(ex1, Policy((1, 2)))
        assert (rec.entering, rec.leaving, rec.state) == (0, 1, 0)
        assert rec.gain == 3
        assert (rec.objective_before, rec.objective_after) == (4, 7)
        assert rec.cycles_broken == ((1,),)
        assert rec.cycle_created is None
        assert new == Policy((0, 2))

    def test_ex2_closes_cycle(self, ex2):
        rec, new = pivot_step(ex2, Policy((0, 2)))
        assert rec.entering == 1 and rec.leaving == 2
        assert rec.gain == F(11, 10)
        assert (rec.objective_before, rec.objective_after) == (19, 30)
        assert rec.cycle_created.cycle == (0, 1)
        assert rec.cycle_created.gamma_c == F(81, 100)
        assert rec.cycles_broken == ((2,),)
        assert rec.values_after == (F(270, 19), F(300, 19))

    def test_done_at_optimum(self, ex1):
        assert pivot_step(ex1, Policy((0, 2))) is None


class TestRunSimplex:
    def test_ex1(self, ex1):
        tr = run_simplex(ex1, Policy((1, 2)))
        assert tr.iterations == 1 and tr.final_values == (3, 4) and tr.termination == OPTIMAL

    def test_ex2(self, ex2):
        tr = run_simplex(ex2, Policy((3, 2)))
        # gains at the start are (9, -7, 0, 0)
        assert [r.entering for r in tr.records] == [0, 1]
        assert tr.records[0].gain == 9
        assert sum(tr.final_values) == 30

    def test_ex1_already_optimal(self, ex1):
        tr = run_simplex(ex1, Policy((0, 2)))
        assert tr.iterations == 0 and tr.termination == OPTIMAL

    def test_default_initial_is_min_id(self, ex2):
        assert run_simplex(ex2).initial == Policy((0, 1))

    def test_cap_reported(self, ex2):
        tr = run_simplex(ex2, Policy((3, 2)), iteration_cap=1)
        assert tr.iterations == 1 and tr.termination == ITERATION_CAP

    def test_cap_must_be_positive(self, ex2):
        with pytest.raises(ValueError):
            run_simplex(ex2, iteration_cap=0)

    def test_default_cap(self, ex2, ex3):
        # n=2, m=4, ceil(ln 2)+1 = 2
        assert default_iteration_cap(ex2) == 10 * 8 * 16 * 4
        assert default_iteration_cap(ex3) == 10 * 32 * 64 * 4

    def test_light_trace_drops_values(self, ex2):
        tr = run_simplex(ex2, Policy((3, 2)), keep_values=False)
        assert all(r.values_before is None and r.values_after is None for r in tr.records)
        assert parse_trace(tr.to_jsonl()) == tr

    @settings(max_examples=150, deadline=None)
    @given(instance_and_policy())
    def test_reaches_brute_force_optimum(self, data):
        inst, pi = data
        tr = run_simplex(inst, pi)
        assert tr.termination == OPTIMAL
        _, best = brute_force_optimum(inst)
        assert tr.final_values == best
        assert max(evaluate(inst, tr.final).gains) <= 0

    @settings(max_examples=150, deadline=None)
    @given(instance_and_policy())
    def test_monotone_and_strict(self, data):
        inst, pi = data
        tr = run_simplex(inst, pi)
        seen = set()
        for pol in tr.policies():
            assert pol not in seen
            seen.add(pol)
        for r in tr.records:
            assert r.objective_after > r.objective_before
            assert all(a >= b for a, b in zip(r.values_after, r.values_before))
            if r.cycle_created is not None:
                assert r.entering in r.cycle_created.cycle

    @settings(max_examples=60, deadline=None)
    @given(instances())
    def test_float_mode_agrees(self, inst):
        exact = run_simplex(inst)
        approx = run_simplex(inst, numerics=FLOAT)
        scale = 1 + max(abs(v) for v in exact.final_values)
        for e, a in zip(exact.final_values, approx.final_values):
            assert abs(float(e) - a) <= 1e-9 * scale

    @settings(max_examples=60, deadline=None)
    @given(instance_and_policy())
    def test_deterministic(self, data):
        inst, pi = data
        assert run_simplex(inst, pi).to_jsonl() == run_simplex(inst, pi).to_jsonl()

    @settings(max_examples=60, deadline=None)
    @given(instance_and_policy())
    def test_jsonl_round_trip(self, data):
        inst, pi = data
        for numerics in (None, FLOAT):
            tr = run_simplex(inst, pi) if numerics is None else run_simplex(inst, pi, numerics)
            assert parse_trace(tr.to_jsonl()) == tr


class TestClassifyEvent:
    def test_ex2_created_and_broken(self, ex2):
        before = decompose_policy(ex2, Policy((0, 2)))
        after = decompose_policy(ex2, Policy((0, 1)))
        created, broken = classify_event(ex2, before, after, 1)
        assert created.cycle == (0, 1) and created.dominating_action == 0
        assert broken == ((2,),)

    def test_ex1_broken_only(self, ex1):
        before = decompose_policy(ex1, Policy((1, 2)))
        after = decompose_policy(ex1, Policy((0, 2)))
        assert classify_event(ex1, before, after, 0) == (None, ((1,),))

    def test_path_reroute(self):
        # state 0 switches from feeding state 1's loop to feeding state 2's loop
        inst = MdpInstance.from_tuples(3, [(0, 1, 0, "0.5"), (0, 2, 0, "0.5"), (1, 1, 1, "0.5"), (2, 2, 1, "0.5")])
        before = decompose_policy(inst, Policy((0, 2, 3)))
        after = decompose_policy(inst, Policy((1, 2, 3)))
        assert classify_event(inst, before, after, 1) == (None, ())

    def test_nonuniform_dominator(self, ex3):
        rec, _ = pivot_step(ex3, Policy((0, 2)))
        assert rec.cycle_created.gamma_c == F(891, 1000)
        assert rec.cycle_created.dominating_action == 0
        assert rec.cycle_created.dominating_discount == F(9, 10)


class TestPolicyIteration:
    def test_ex1(self, ex1):
        pi_tr = run_policy_iteration(ex1, Policy((1, 2)))
        assert pi_tr.iterations == 1 and pi_tr.final == Policy((0, 2))

    def test_ex2_not_slower_than_simplex(self, ex2):
        pi_tr = run_policy_iteration(ex2, Policy((3, 2)))
        sx = run_simplex(ex2, Policy((3, 2)))
        assert pi_tr.final == Policy((0, 1))
        assert pi_tr.iterations <= sx.iterations

    def test_optimal_start(self, ex1):
        assert run_policy_iteration(ex1, Policy((0, 2))).iterations == 0

    def test_cap(self):
        # a chain where each switch enables the next
        rows = [(s, s, 0, "0.5") for s in range(4)] + [(s, s + 1, 0, "0.5") for s in range(3)] + [(3, 3, 5, "0.5")]
        inst = MdpInstance.from_tuples(4, rows)
        tr = run_policy_iteration(inst, iteration_cap=1)
        assert tr.termination == ITERATION_CAP and tr.iterations == 1

    @settings(max_examples=100, deadline=None)
    @given(instance_and_policy())
    def test_reaches_optimum(self, data):
        inst, pi = data
        tr = run_policy_iteration(inst, pi)
        assert tr.termination == OPTIMAL
        assert evaluate(inst, tr.final).values == brute_force_optimum(inst)[1]
        assert all(b > a for a, b in zip(tr.objectives, tr.objectives[1:]))
