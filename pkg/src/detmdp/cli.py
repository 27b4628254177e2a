"""Command line: ``detmdp solve | gen | verify | sweep``.

Exit codes: 0 success, 1 malformed input or digest mismatch, 2 usage error
(argparse) or iteration cap reached by ``solve``, 3 failed verification.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .core import Policy, PolicyError, load_instance
from .engine import OPTIMAL, TraceFormatError, parse_trace, run_policy_iteration, run_simplex
from .evaluate import best_gain, evaluate
from .experiments import gamma_sweep_texts, rows_to_csv, run_sweep, sweep_grid
from .generators import (
    FAMILIES,
    GenSpec,
    IntegerRange,
    InvalidSpec,
    UnitInterval,
    generate,
    per_action_range,
    per_action_set,
    uniform,
)
from .numerics import Numerics, fmt, to_fraction
from .oracle import DEFAULT_ENUMERATION_CAP
from .verify import verify_all

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_CAP = 2
EXIT_VERIFY = 3


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _discount(text: str):
    try:
        g = to_fraction(text)
    except (TypeError, ValueError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (0 <= g < 1):
        raise argparse.ArgumentTypeError(f"discount must lie in [0, 1), got {text}")
    return g


def _int_list(text: str) -> list[int]:
    return [_positive_int(t) for t in text.split(",") if t.strip()]


def _load_policy(spec: str, inst) -> Policy:
    if spec == "min-id":
        return inst.min_id_policy()
    raw = json.loads(Path(spec).read_text(encoding="utf-8"))
    if isinstance(raw, dict):
        raw = raw.get("choice", raw.get("policy"))
    if not isinstance(raw, list):
        raise PolicyError("policy file must hold a list of action ids or {\"choice\": [...]}")
    pi = Policy(tuple(raw))
    inst.check_policy(pi)
    return pi


def cmd_solve(args) -> int:
    try:
        inst = load_instance(args.instance)
        initial = _load_policy(args.initial, inst)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    numerics = Numerics.from_name(args.mode)
    trace = run_simplex(inst, initial, numerics, args.cap, keep_values=not args.light)
    if args.trace:
        Path(args.trace).write_text(trace.to_jsonl(), encoding="utf-8")
    final = evaluate(inst, trace.final, numerics)
    certified = trace.termination == OPTIMAL and best_gain(final.gains, numerics.tolerance(inst)) is None
    print(f"iterations={trace.iterations} objective={fmt(final.objective)} "
          f"certified={'true' if certified else 'false'}")
    if args.baseline == "policy-iteration":
        pi_trace = run_policy_iteration(inst, initial, numerics, args.cap)
        print(f"simplex_iterations={trace.iterations} policy_iteration_iterations={pi_trace.iterations}")
    if trace.termination != OPTIMAL:
        print(f"iteration cap reached after {trace.iterations} pivots", file=sys.stderr)
        return EXIT_CAP
    return EXIT_OK


def cmd_gen(args, parser) -> int:
    if args.gamma_range is not None:
        lo, hi = args.gamma_range
        if lo > hi:
            parser.error("--gamma-range needs lo <= hi")
        discount = per_action_range(lo, hi)
    elif args.gamma_set is not None:
        try:
            discount = per_action_set([_discount(t) for t in args.gamma_set.split(",")])
        except argparse.ArgumentTypeError as exc:
            parser.error(f"--gamma-set: {exc}")
    else:
        discount = uniform(args.gamma)
    reward = UnitInterval() if args.unit_rewards else IntegerRange(*args.reward_range)
    try:
        inst = generate(GenSpec(args.n, args.m, discount, reward, args.seed, args.family))
    except InvalidSpec as exc:
        parser.error(str(exc))
    text = inst.to_json()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        inst = load_instance(args.instance)
        trace = parse_trace(Path(args.trace).read_text(encoding="utf-8"))
    except (OSError, ValueError, KeyError, TraceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if trace.digest != inst.digest:
        print("error: trace digest does not match the instance", file=sys.stderr)
        return EXIT_INPUT
    numerics = Numerics.from_name(args.mode) if args.mode else None
    report = verify_all(inst, trace, numerics, args.enum_cap)
    if args.report:
        Path(args.report).write_text(report.to_json(), encoding="utf-8")
    for c in report.checks:
        status = "skipped" if c.passed is None else ("pass" if c.passed else "FAIL")
        print(f"{status:7s} {c.scope:8s} {c.check}: {c.detail}")
    if not report.passed:
        print(f"{len(report.failures())} hard check(s) failed", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_sweep(args) -> int:
    gammas = gamma_sweep_texts() if args.gamma_sweep else args.gamma_list.split(",")
    for g in gammas:
        for part in g.split(":"):
            try:
                _discount(part)
            except argparse.ArgumentTypeError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_INPUT
    rows = sweep_grid(args.n_list, args.m_list, gammas, args.seeds, args.base_seed)
    results = run_sweep(rows, args.mode, args.family, args.cap, args.jobs)
    text = rows_to_csv(results)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    bad = [r for r in results if r["status"] != "ok"]
    if bad:
        print(f"{len(bad)} row(s) not ok", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="detmdp", description="Highest-gain simplex for deterministic MDPs")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve an instance and write a pivot trace")
    s.add_argument("instance")
    s.add_argument("--mode", choices=("exact", "float"), default="exact")
    s.add_argument("--initial", default="min-id", help='policy JSON file or "min-id"')
    s.add_argument("--cap", type=_positive_int, default=None, help="iteration cap")
    s.add_argument("--trace", help="write the JSONL trace here")
    s.add_argument("--baseline", choices=("policy-iteration",))
    s.add_argument("--light", action="store_true", help="omit value vectors from the trace")

    g = sub.add_parser("gen", help="generate a random instance")
    g.add_argument("--n", type=_positive_int, required=True)
    g.add_argument("--m", type=_positive_int, required=True)
    disc = g.add_mutually_exclusive_group()
    disc.add_argument("--gamma", type=_discount, default=_discount("0.9"))
    disc.add_argument("--gamma-range", type=_discount, nargs=2, metavar=("LO", "HI"))
    disc.add_argument("--gamma-set", help="comma-separated discounts to draw from")
    rew = g.add_mutually_exclusive_group()
    rew.add_argument("--reward-range", type=int, nargs=2, metavar=("LO", "HI"), default=(-10, 10))
    rew.add_argument("--unit-rewards", action="store_true")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--family", choices=FAMILIES, default="Random")
    g.add_argument("--out")

    v = sub.add_parser("verify", help="check a trace against its instance")
    v.add_argument("instance")
    v.add_argument("trace")
    v.add_argument("--report", help="write the JSON report here")
    v.add_argument("--mode", choices=("exact", "float"), help="override the trace's numerics")
    v.add_argument("--enum-cap", type=_positive_int, default=DEFAULT_ENUMERATION_CAP)

    w = sub.add_parser("sweep", help="solve a grid of generated instances, emit CSV")
    w.add_argument("--n-list", type=_int_list, required=True)
    w.add_argument("--m-list", type=_int_list, required=True)
    gl = w.add_mutually_exclusive_group(required=True)
    gl.add_argument("--gamma-list", help='comma-separated; "lo:hi" means per-action discounts')
    gl.add_argument("--gamma-sweep", action="store_true", help="use 1-10^-k for k=1..9")
    w.add_argument("--seeds", type=_positive_int, default=1)
    w.add_argument("--base-seed", type=int, default=0)
    w.add_argument("--mode", choices=("exact", "float"), default="exact")
    w.add_argument("--family", choices=FAMILIES, default="Random")
    w.add_argument("--cap", type=_positive_int, default=None)
    w.add_argument("--jobs", type=_positive_int, default=1)
    w.add_argument("--out")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "solve":
        return cmd_solve(args)
    if args.command == "gen":
        return cmd_gen(args, parser)
    if args.command == "verify":
        return cmd_verify(args)
    return cmd_sweep(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
