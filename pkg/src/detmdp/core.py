"""Deterministic MDP data model, instance validation and policy decomposition.

States are ``0..n-1``; actions carry dense ids ``0..m-1``.  Every action
moves from its ``source`` to a single ``target`` state, so a policy is a
functional graph: each state points at exactly one successor, and the graph
splits into directed cycles plus in-trees hanging off them.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

from .numerics import EXACT, Numerics, Scalar, to_fraction


class InstanceError(ValueError):
    """Raised for a malformed MDP instance."""


class EmptyStateActions(InstanceError):
    def __init__(self, state: int):
        super().__init__(f"state {state} has no actions")
        self.state = state


class BadDiscount(InstanceError):
    def __init__(self, action: int, discount):
        super().__init__(f"action {action}: discount {discount} not in [0, 1)")
        self.action = action


class BadIndex(InstanceError):
    pass


class DuplicateActionId(InstanceError):
    pass


class BadReward(InstanceError):
    pass


class PolicyError(ValueError):
    pass


class EnteringAlreadyInPolicy(PolicyError):
    pass


@dataclass(frozen=True)
class ActionDef:
    id: int
    source: int
    target: int
    reward: Fraction
    discount: Fraction


@dataclass(frozen=True)
class MdpInstance:
    """A validated deterministic MDP.

    Construct through :func:`validate_instance` (raw mappings) or
    :meth:`from_tuples`; ``__post_init__`` enforces the invariants either way.
    """

    n: int
    actions: tuple[ActionDef, ...]
    meta: Mapping = field(default_factory=dict, compare=False)
    per_state: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    __hash__ = None

    def __post_init__(self):
        if not isinstance(self.n, int) or isinstance(self.n, bool) or self.n < 1:
            raise BadIndex(f"n must be a positive integer, got {self.n!r}")
        buckets: list[list[int]] = [[] for _ in range(self.n)]
        for pos, a in enumerate(self.actions):
            if a.id != pos:
                raise BadIndex(f"action at position {pos} has id {a.id}; ids must be dense 0..m-1")
            for end in (a.source, a.target):
                if not (0 <= end < self.n):
                    raise BadIndex(f"action {a.id}: state {end} out of range 0..{self.n - 1}")
            if not (0 <= a.discount < 1):
                raise BadDiscount(a.id, a.discount)
            buckets[a.source].append(a.id)
        for s, ids in enumerate(buckets):
            if not ids:
                raise EmptyStateActions(s)
        object.__setattr__(self, "per_state", tuple(tuple(ids) for ids in buckets))

    @classmethod
    def from_tuples(cls, n: int, actions: Iterable[Sequence], meta: Mapping | None = None) -> "MdpInstance":
        """Build from ``(source, target, reward, discount)`` rows; ids follow row order."""
        defs = tuple(
            ActionDef(i, int(s), int(t), _reward(i, r), _discount(i, g))
            for i, (s, t, r, g) in enumerate(actions)
        )
        return cls(n, defs, dict(meta or {}))

    @property
    def m(self) -> int:
        return len(self.actions)

    @cached_property
    def rewards(self) -> tuple[Fraction, ...]:
        return tuple(a.reward for a in self.actions)

    @cached_property
    def discounts(self) -> tuple[Fraction, ...]:
        return tuple(a.discount for a in self.actions)

    @cached_property
    def float_rewards(self) -> tuple[float, ...]:
        return tuple(float(r) for r in self.rewards)

    @cached_property
    def float_discounts(self) -> tuple[float, ...]:
        return tuple(float(g) for g in self.discounts)

    @cached_property
    def sources(self) -> tuple[int, ...]:
        return tuple(a.source for a in self.actions)

    @cached_property
    def targets(self) -> tuple[int, ...]:
        return tuple(a.target for a in self.actions)

    @cached_property
    def uniform_discount(self) -> bool:
        return len(set(self.discounts)) == 1

    @property
    def gamma(self) -> Fraction:
        """The shared discount; only defined for uniform instances."""
        if not self.uniform_discount:
            raise ValueError("instance has per-action discounts")
        return self.actions[0].discount

    def to_json_dict(self, include_meta: bool = True) -> dict:
        out = {
            "n": self.n,
            "actions": [
                {
                    "id": a.id,
                    "source": a.source,
                    "target": a.target,
                    "reward": _decimal_text(a.reward),
                    "discount": _decimal_text(a.discount),
                }
                for a in self.actions
            ],
        }
        if include_meta and self.meta:
            out["meta"] = dict(self.meta)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=1) + "\n"

    @cached_property
    def digest(self) -> str:
        """sha256 over the canonical instance text (meta excluded)."""
        canon = json.dumps(self.to_json_dict(include_meta=False), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    def check_policy(self, pi: "Policy") -> None:
        if len(pi.choice) != self.n:
            raise PolicyError(f"policy has {len(pi.choice)} entries, instance has {self.n} states")
        for s, a in enumerate(pi.choice):
            if not (0 <= a < self.m) or self.actions[a].source != s:
                raise PolicyError(f"state {s}: action {a} is not usable there")

    def min_id_policy(self) -> "Policy":
        return Policy(tuple(ids[0] for ids in self.per_state))


def _decimal_text(value: Fraction) -> str:
    """Finite decimal text when the rational has one, otherwise ``p/q``."""
    d = value.denominator
    twos = fives = 0
    while d % 2 == 0:
        d //= 2
        twos += 1
    while d % 5 == 0:
        d //= 5
        fives += 1
    if d != 1:
        return str(value)
    digits = max(twos, fives)
    scaled = value * 10**digits
    text = str(Decimal(scaled.numerator).scaleb(-digits))
    if "E" in text or "e" in text:
        text = format(Decimal(scaled.numerator).scaleb(-digits), "f")
    return text


def _reward(action_id: int, raw) -> Fraction:
    try:
        return to_fraction(raw)
    except (TypeError, ValueError) as exc:
        raise BadReward(f"action {action_id}: bad reward {raw!r}: {exc}") from None


def _discount(action_id: int, raw) -> Fraction:
    try:
        g = to_fraction(raw)
    except (TypeError, ValueError):
        raise BadDiscount(action_id, raw) from None
    if not (0 <= g < 1):
        raise BadDiscount(action_id, raw)
    return g


def _int_field(obj: Mapping, key: str, where: str) -> int:
    if key not in obj:
        raise InstanceError(f"{where}: missing field {key!r}")
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise BadIndex(f"{where}: field {key!r} must be an integer, got {v!r}")
    return v


def validate_instance(raw: Mapping) -> MdpInstance:
    """Check a parsed instance description and build an :class:`MdpInstance`.

    ``raw`` is the decoded JSON object ``{"n": .., "actions": [..], "meta"?: {..}}``.
    Actions may appear in any order but their ids must be exactly ``0..m-1``.
    """
    if not isinstance(raw, Mapping):
        raise InstanceError("instance must be a JSON object")
    n = _int_field(raw, "n", "instance")
    if n < 1:
        raise BadIndex(f"n must be positive, got {n}")
    acts = raw.get("actions")
    if not isinstance(acts, list):
        raise InstanceError("instance: 'actions' must be a list")
    by_id: dict[int, ActionDef] = {}
    for k, obj in enumerate(acts):
        if not isinstance(obj, Mapping):
            raise InstanceError(f"actions[{k}] must be an object")
        aid = _int_field(obj, "id", f"actions[{k}]")
        if aid in by_id:
            raise DuplicateActionId(f"duplicate action id {aid}")
        src = _int_field(obj, "source", f"action {aid}")
        tgt = _int_field(obj, "target", f"action {aid}")
        for end in (src, tgt):
            if not (0 <= end < n):
                raise BadIndex(f"action {aid}: state {end} out of range 0..{n - 1}")
        if "reward" not in obj or "discount" not in obj:
            raise InstanceError(f"action {aid}: reward and discount are required")
        by_id[aid] = ActionDef(aid, src, tgt, _reward(aid, obj["reward"]), _discount(aid, obj["discount"]))
    if sorted(by_id) != list(range(len(by_id))):
        raise BadIndex("action ids must be dense 0..m-1")
    meta = raw.get("meta") or {}
    if not isinstance(meta, Mapping):
        raise InstanceError("'meta' must be an object")
    return MdpInstance(n, tuple(by_id[i] for i in range(len(by_id))), dict(meta))


def parse_instance(text: str) -> MdpInstance:
    # Decimal keeps numeric literals at their exact decimal text.
    try:
        raw = json.loads(text, parse_float=Decimal)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"invalid JSON: {exc}") from None
    return validate_instance(raw)


def load_instance(path: str | Path) -> MdpInstance:
    return parse_instance(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class Policy:
    """One action id per state; ``choice[s]`` must be an action usable in ``s``."""

    choice: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "choice", tuple(int(a) for a in self.choice))

    def __contains__(self, action: int) -> bool:
        return action in self.choice

    def __len__(self) -> int:
        return len(self.choice)


class OnCycle(NamedTuple):
    cycle: int
    position: int


class OnPath(NamedTuple):
    cycle: int
    distance: int


@dataclass(frozen=True)
class Cycle:
    """A policy cycle in canonical rotation (smallest state first).

    ``actions[i]`` is used in ``states[i]`` and leads to ``states[i + 1]``.
    """

    states: tuple[int, ...]
    actions: tuple[int, ...]
    discount: Fraction
    dominating_action: int
    dominating_discount: Fraction

    def __len__(self) -> int:
        return len(self.states)


@dataclass(frozen=True)
class PolicyStructure:
    cycles: tuple[Cycle, ...]
    status: tuple[OnCycle | OnPath, ...]
    #: path states sorted by (distance, state)
    path_order: tuple[int, ...]

    @property
    def canonical_cycles(self) -> frozenset[tuple[int, ...]]:
        return frozenset(c.actions for c in self.cycles)

    def on_cycle(self, s: int) -> bool:
        return isinstance(self.status[s], OnCycle)

    def cycle_of_action(self, action: int) -> Cycle | None:
        for c in self.cycles:
            if action in c.actions:
                return c
        return None


def cycle_discount(inst: MdpInstance, cycle: Sequence[int], numerics: Numerics = EXACT) -> Scalar:
    """Product of the discounts of the actions around ``cycle``."""
    if not cycle:
        raise ValueError("empty cycle")
    prod = Fraction(1)
    for a in cycle:
        prod *= inst.actions[a].discount
    return numerics.convert(prod)


def dominating_discount(inst: MdpInstance, cycle: Sequence[int]) -> tuple[int, Fraction]:
    """Action of minimum discount on the cycle (smallest id on ties) and that discount."""
    if not cycle:
        raise ValueError("empty cycle")
    best = min(cycle, key=lambda a: (inst.actions[a].discount, a))
    return best, inst.actions[best].discount


def decompose_policy(inst: MdpInstance, pi: Policy) -> PolicyStructure:
    inst.check_policy(pi)
    n = inst.n
    succ = [inst.actions[pi.choice[s]].target for s in range(n)]

    # 0 unseen, 1 on current walk, 2 finished
    color = [0] * n
    cycle_heads: list[int] = []
    for start in range(n):
        walk = []
        u = start
        while color[u] == 0:
            color[u] = 1
            walk.append(u)
            u = succ[u]
        if color[u] == 1:
            cycle_heads.append(u)
        for w in walk:
            color[w] = 2

    raw_cycles = []
    for head in cycle_heads:
        members = [head]
        u = succ[head]
        while u != head:
            members.append(u)
            u = succ[u]
        k = members.index(min(members))
        raw_cycles.append(members[k:] + members[:k])
    raw_cycles.sort(key=lambda c: c[0])

    status: list[OnCycle | OnPath | None] = [None] * n
    cycles = []
    for ci, states in enumerate(raw_cycles):
        acts = tuple(pi.choice[s] for s in states)
        dom, dom_g = dominating_discount(inst, acts)
        cycles.append(Cycle(tuple(states), acts, cycle_discount(inst, acts), dom, dom_g))
        for pos, s in enumerate(states):
            status[s] = OnCycle(ci, pos)

    preds: list[list[int]] = [[] for _ in range(n)]
    for s in range(n):
        preds[succ[s]].append(s)
    frontier = [s for c in cycles for s in c.states]
    path_order = []
    dist = 0
    while frontier:
        dist += 1
        nxt = []
        for u in frontier:
            ci = status[u].cycle
            for p in preds[u]:
                if status[p] is None:
                    status[p] = OnPath(ci, dist)
                    nxt.append(p)
        nxt.sort()
        path_order.extend(nxt)
        frontier = nxt
    return PolicyStructure(tuple(cycles), tuple(status), tuple(path_order))


def apply_pivot(inst: MdpInstance, pi: Policy, entering: int) -> tuple[Policy, int]:
    """Switch the source state of ``entering`` to it; returns (new policy, leaving id)."""
    if not (0 <= entering < inst.m):
        raise BadIndex(f"no action {entering}")
    if entering in pi.choice:
        raise EnteringAlreadyInPolicy(f"action {entering} is already in the policy")
    s = inst.actions[entering].source
    choice = list(pi.choice)
    leaving = choice[s]
    choice[s] = entering
    return Policy(tuple(choice)), leaving
