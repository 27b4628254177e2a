"""Highest-gain (Dantzig) simplex for deterministic discounted MDPs.

Policies are evaluated exactly through their cycle/in-tree structure, every
pivot is traced, and :mod:`detmdp.verify` replays traces against the flux
and gain invariants a correct run must satisfy.
"""
from .core import (
    ActionDef,
    MdpInstance,
    Policy,
    PolicyStructure,
    apply_pivot,
    cycle_discount,
    decompose_policy,
    dominating_discount,
    load_instance,
    validate_instance,
)
from .engine import PivotRecord, PivotTrace, pivot_step, run_policy_iteration, run_simplex
from .evaluate import EvalResult, best_gain, evaluate, flux_vector, gain_vector, objective, per_state_flux, value_vector
from .generators import GenSpec, fixture, generate
from .numerics import EXACT, FLOAT, Numerics
from .oracle import brute_force_optimum, dense_value_solve, enumerate_policies, verify_optimality_certificate
from .verify import check_flux_layers, check_identities, check_trace, event_accounting

__all__ = [
    "ActionDef", "MdpInstance", "Policy", "PolicyStructure", "apply_pivot", "cycle_discount",
    "decompose_policy", "dominating_discount", "load_instance", "validate_instance",
    "PivotRecord", "PivotTrace", "pivot_step", "run_policy_iteration", "run_simplex",
    "EvalResult", "best_gain", "evaluate", "flux_vector", "gain_vector", "objective",
    "per_state_flux", "value_vector", "GenSpec", "fixture", "generate", "EXACT", "FLOAT",
    "Numerics", "brute_force_optimum", "dense_value_solve", "enumerate_policies",
    "verify_optimality_certificate", "check_flux_layers", "check_identities", "check_trace",
    "event_accounting",
]
