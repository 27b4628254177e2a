"""Batch runs over generated instances, written as CSV.

Used for the discount sweep: the same seeds solved at ``gamma = 1 - 10**-k``
for growing ``k`` to see whether iteration counts depend on the discount.
"""
from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .engine import OPTIMAL, run_simplex
from .evaluate import best_gain, evaluate
from .generators import GenSpec, IntegerRange, PerActionRange, Uniform, generate
from .numerics import Numerics, to_fraction
from .verify import event_accounting

CSV_COLUMNS = (
    "n",
    "m",
    "gamma",
    "seed",
    "iterations",
    "cycle_creations",
    "max_gap_between_creations",
    "certified",
    "wall_ms",
    "status",
)


@dataclass(frozen=True)
class SweepRow:
    n: int
    m: int
    gamma: str
    seed: int


def parse_gamma(text: str) -> Uniform | PerActionRange:
    """``"0.99"`` is a uniform discount; ``"0.5:0.999"`` draws per-action discounts from that range."""
    if ":" in text:
        lo, hi = text.split(":", 1)
        return PerActionRange(to_fraction(lo), to_fraction(hi))
    return Uniform(to_fraction(text))


def sweep_grid(
    n_list: Sequence[int],
    m_list: Sequence[int],
    gamma_list: Sequence[str],
    seeds: int,
    base_seed: int = 0,
) -> list[SweepRow]:
    return [
        SweepRow(n, m, g, base_seed + i)
        for n in n_list
        for m in m_list
        for g in gamma_list
        for i in range(seeds)
    ]


def run_row(
    row: SweepRow,
    mode: str = "exact",
    family: str = "Random",
    cap: int | None = None,
    reward: IntegerRange = IntegerRange(-10, 10),
) -> dict:
    out = {"n": row.n, "m": row.m, "gamma": row.gamma, "seed": row.seed,
           "iterations": "", "cycle_creations": "", "max_gap_between_creations": "",
           "certified": "", "wall_ms": "", "status": "ok"}
    numerics = Numerics.from_name(mode)
    try:
        spec = GenSpec(row.n, row.m, parse_gamma(row.gamma), reward, row.seed, family)
        inst = generate(spec)
        t0 = time.perf_counter()
        trace = run_simplex(inst, None, numerics, cap, keep_values=False)
        wall = (time.perf_counter() - t0) * 1000.0
        final = evaluate(inst, trace.final, numerics)
        certified = trace.termination == OPTIMAL and best_gain(final.gains, numerics.tolerance(inst)) is None
        events = event_accounting(trace, inst)
    except Exception as exc:  # recorded per row; the sweep continues
        out["status"] = f"error: {type(exc).__name__}: {exc}"
        return out
    out.update(
        iterations=trace.iterations,
        cycle_creations=events.cycle_creations,
        max_gap_between_creations=events.max_gap,
        certified="true" if certified else "false",
        wall_ms=f"{wall:.3f}",
    )
    if trace.termination != OPTIMAL:
        out["status"] = "iteration-cap"
    elif not certified:
        out["status"] = "FAIL: not certified"
    return out


def _run_row_args(args):
    return run_row(*args)


def run_sweep(
    rows: Sequence[SweepRow],
    mode: str = "exact",
    family: str = "Random",
    cap: int | None = None,
    jobs: int = 1,
) -> list[dict]:
    """Run every row; output order matches ``rows`` regardless of ``jobs``."""
    work = [(r, mode, family, cap) for r in rows]
    if jobs <= 1:
        return [_run_row_args(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_row_args, work))


def rows_to_csv(results: Sequence[dict], drop_timing: bool = False) -> str:
    buf = io.StringIO()
    cols = [c for c in CSV_COLUMNS if not (drop_timing and c == "wall_ms")]
    writer = csv.DictWriter(buf, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for r in results:
        writer.writerow(r)
    return buf.getvalue()


def gamma_sweep_texts(kmax: int = 9) -> list[str]:
    """Decimal text of ``1 - 10**-k`` for ``k = 1..kmax``."""
    return ["0." + "9" * k for k in range(1, kmax + 1)]
