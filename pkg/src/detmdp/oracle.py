"""Desk-scale ground truth: exhaustive enumeration and a dense linear solver.

Nothing here uses the cycle/path closed forms from :mod:`detmdp.evaluate`;
the dense solver is the independent route used to cross-check them.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator

from .core import MdpInstance, Policy
from .evaluate import best_gain, gain_vector
from .numerics import EXACT, Numerics, Scalar

DEFAULT_ENUMERATION_CAP = 10**7
DENSE_MAX_STATES = 64


class TooManyPolicies(RuntimeError):
    pass


class NoDominatingPolicy(RuntimeError):
    """No enumerated policy dominates all others componentwise (internal error)."""


def policy_count(inst: MdpInstance) -> int:
    return math.prod(len(ids) for ids in inst.per_state)


def enumerate_policies(inst: MdpInstance, cap: int = DEFAULT_ENUMERATION_CAP) -> Iterator[Policy]:
    count = policy_count(inst)
    if count > cap:
        raise TooManyPolicies(f"{count} policies exceeds enumeration cap {cap}")
    for combo in itertools.product(*inst.per_state):
        yield Policy(combo)


def dense_value_solve(inst: MdpInstance, pi: Policy, numerics: Numerics = EXACT) -> tuple[Scalar, ...]:
    """Solve ``v_s - gamma_a v_target(a) = r_a`` (a = pi[s]) by Gaussian elimination."""
    inst.check_policy(pi)
    n = inst.n
    if n > DENSE_MAX_STATES:
        raise ValueError(f"dense solve limited to {DENSE_MAX_STATES} states")
    r = numerics.rewards(inst)
    g = numerics.discounts(inst)
    zero, one = numerics.zero(), numerics.one()
    rows = []
    for s in range(n):
        a = pi.choice[s]
        row = [zero] * (n + 1)
        row[s] += one
        row[inst.actions[a].target] -= g[a]
        row[n] = r[a]
        rows.append(row)

    for col in range(n):
        # partial pivoting; in exact mode any nonzero pivot works but this keeps both modes alike
        piv = max(range(col, n), key=lambda i: abs(rows[i][col]))
        if rows[piv][col] == 0:
            raise ArithmeticError("singular policy system")
        rows[col], rows[piv] = rows[piv], rows[col]
        p = rows[col][col]
        for i in range(col + 1, n):
            f = rows[i][col]
            if f:
                f = f / p
                ri, rc = rows[i], rows[col]
                for j in range(col, n + 1):
                    ri[j] -= f * rc[j]
    v = [zero] * n
    for i in range(n - 1, -1, -1):
        acc = rows[i][n]
        for j in range(i + 1, n):
            acc -= rows[i][j] * v[j]
        v[i] = acc / rows[i][i]
    return tuple(v)


def brute_force_optimum(
    inst: MdpInstance, numerics: Numerics = EXACT, cap: int = DEFAULT_ENUMERATION_CAP
) -> tuple[Policy, tuple[Scalar, ...]]:
    """The policy whose values dominate every other policy's, by enumeration."""
    tol = numerics.tolerance(inst)
    evaluated = [(pi, dense_value_solve(inst, pi, numerics)) for pi in enumerate_policies(inst, cap)]
    best = [max(vals[s] for _, vals in evaluated) for s in range(inst.n)]
    for pi, vals in evaluated:
        if all(vals[s] >= best[s] - (tol * (1 + abs(best[s])) if tol else 0) for s in range(inst.n)):
            return pi, vals
    raise NoDominatingPolicy(f"no policy attains the componentwise maximum {best}")


@dataclass(frozen=True)
class CertificateReport:
    certified: bool
    max_gain: Scalar
    max_gain_off_policy: Scalar | None
    argmax: int
    threshold: Scalar


def verify_optimality_certificate(
    inst: MdpInstance, pi: Policy, numerics: Numerics = EXACT
) -> CertificateReport:
    """Recompute gains at ``pi`` (via the dense solver) and test ``max gain <= threshold``."""
    values = dense_value_solve(inst, pi, numerics)
    gains = gain_vector(inst, values, numerics)
    tol = numerics.tolerance(inst)
    argmax = max(range(inst.m), key=lambda a: (gains[a], -a))
    off = [gains[a] for a in range(inst.m) if a not in pi.choice]
    return CertificateReport(
        certified=best_gain(gains, tol) is None,
        max_gain=gains[argmax],
        max_gain_off_policy=max(off) if off else None,
        argmax=argmax,
        threshold=tol,
    )
