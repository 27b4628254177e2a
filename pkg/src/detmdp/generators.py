"""Seeded instance generators and the named fixtures EX1, EX2, EX3.

Randomness comes from numpy's PCG64 bit generator seeded with the 64-bit
``GenSpec.seed``; the algorithm name is written into the instance ``meta``.
Discounts and unit-interval rewards are drawn on a decimal grid so that
every generated instance is exactly representable as decimal text.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

from .core import ActionDef, MdpInstance
from .numerics import to_fraction

GENERATOR_NAME = "detmdp-gen/1 numpy.PCG64"
FAMILIES = ("Random", "CycleRich", "PathHeavy")

_DISCOUNT_GRID = 10**6
_UNIT_GRID = 1000


class InvalidSpec(ValueError):
    pass


class UnknownFixture(KeyError):
    pass


@dataclass(frozen=True)
class Uniform:
    gamma: Fraction


@dataclass(frozen=True)
class PerActionRange:
    """Discounts drawn from ``[lo, hi)`` on a grid of ``(hi - lo) / 10**6``."""

    lo: Fraction
    hi: Fraction


@dataclass(frozen=True)
class PerActionSet:
    choices: tuple[Fraction, ...]


@dataclass(frozen=True)
class IntegerRange:
    lo: int
    hi: int


@dataclass(frozen=True)
class UnitInterval:
    pass


DiscountModel = Union[Uniform, PerActionRange, PerActionSet]
RewardModel = Union[IntegerRange, UnitInterval]


@dataclass(frozen=True)
class GenSpec:
    n: int
    m: int
    discount: DiscountModel
    reward: RewardModel = IntegerRange(-10, 10)
    seed: int = 0
    family: str = "Random"

    def validate(self) -> None:
        if self.n < 1:
            raise InvalidSpec("n must be positive")
        if self.m < self.n:
            raise InvalidSpec(f"m={self.m} < n={self.n}: every state needs an action")
        if not (0 <= self.seed < 2**64):
            raise InvalidSpec("seed must fit in 64 unsigned bits")
        if self.family not in FAMILIES:
            raise InvalidSpec(f"unknown family {self.family!r}")
        d = self.discount
        if isinstance(d, Uniform):
            _check_discount(d.gamma)
        elif isinstance(d, PerActionRange):
            if d.lo > d.hi:
                raise InvalidSpec("discount range has lo > hi")
            _check_discount(d.lo)
            _check_discount(d.hi)
        elif isinstance(d, PerActionSet):
            if not d.choices:
                raise InvalidSpec("empty discount set")
            for g in d.choices:
                _check_discount(g)
        else:
            raise InvalidSpec(f"unknown discount model {d!r}")
        r = self.reward
        if isinstance(r, IntegerRange):
            if r.lo > r.hi:
                raise InvalidSpec("reward range has lo > hi")
        elif not isinstance(r, UnitInterval):
            raise InvalidSpec(f"unknown reward model {r!r}")


def _check_discount(g) -> None:
    if not (0 <= g < 1):
        raise InvalidSpec(f"discount {g} not in [0, 1)")


def uniform(gamma) -> Uniform:
    return Uniform(to_fraction(gamma))


def per_action_range(lo, hi) -> PerActionRange:
    return PerActionRange(to_fraction(lo), to_fraction(hi))


def per_action_set(values: Sequence) -> PerActionSet:
    return PerActionSet(tuple(to_fraction(v) for v in values))


def _pick_target(rng: np.random.Generator, family: str, s: int, n: int, layout) -> int:
    if family == "CycleRich":
        block = layout[s]
        if rng.random() < 0.7:
            return int(block[rng.integers(len(block))])
        return int(rng.integers(n))
    if family == "PathHeavy":
        order, rank = layout
        later = order[rank[s] + 1:]
        if later and rng.random() < 0.85:
            return int(later[rng.integers(len(later))])
        return int(rng.integers(n))
    return int(rng.integers(n))


def _layout(rng: np.random.Generator, family: str, n: int):
    if family == "CycleRich":
        perm = [int(x) for x in rng.permutation(n)]
        blocks = [perm[i:i + 3] for i in range(0, n, 3)]
        return {s: blk for blk in blocks for s in blk}
    if family == "PathHeavy":
        order = [int(x) for x in rng.permutation(n)]
        return order, {s: i for i, s in enumerate(order)}
    return None


def _draw_discount(rng: np.random.Generator, model: DiscountModel) -> Fraction:
    if isinstance(model, Uniform):
        return model.gamma
    if isinstance(model, PerActionRange):
        k = int(rng.integers(_DISCOUNT_GRID))
        return model.lo + (model.hi - model.lo) * Fraction(k, _DISCOUNT_GRID)
    return model.choices[int(rng.integers(len(model.choices)))]


def _draw_reward(rng: np.random.Generator, model: RewardModel) -> Fraction:
    if isinstance(model, IntegerRange):
        return Fraction(int(rng.integers(model.lo, model.hi + 1)))
    return Fraction(int(rng.integers(_UNIT_GRID + 1)), _UNIT_GRID)


def generate(spec: GenSpec) -> MdpInstance:
    spec.validate()
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    n, m = spec.n, spec.m
    layout = _layout(rng, spec.family, n)
    sources = list(range(n)) + [int(rng.integers(n)) for _ in range(m - n)]
    actions = []
    for aid, s in enumerate(sources):
        t = _pick_target(rng, spec.family, s, n, layout)
        actions.append(ActionDef(aid, s, t, _draw_reward(rng, spec.reward), _draw_discount(rng, spec.discount)))
    meta = {"seed": spec.seed, "family": spec.family, "generator": GENERATOR_NAME}
    return MdpInstance(n, tuple(actions), meta)


def gamma_sweep(kmax: int = 9) -> list[Fraction]:
    """Discounts ``1 - 10**-k`` for ``k = 1..kmax``."""
    return [1 - Fraction(1, 10**k) for k in range(1, kmax + 1)]


def fixture(name: str) -> MdpInstance:
    """Hand-checked instances.  Ids are 0-based: ``a1`` in prose is id 0."""
    half = Fraction(1, 2)
    g9 = Fraction(9, 10)
    if name == "EX1":
        rows = [(0, 1, 1, half), (0, 0, 0, half), (1, 1, 2, half)]
    elif name == "EX2":
        rows = [(0, 1, 0, g9), (1, 0, 3, g9), (1, 1, 1, g9), (0, 0, 0, g9)]
    elif name == "EX3":
        rows = [(0, 1, 0, g9), (1, 0, 3, Fraction(99, 100)), (1, 1, 1, g9), (0, 0, 0, g9)]
    else:
        raise UnknownFixture(name)
    return MdpInstance.from_tuples(2, rows, {"fixture": name})
