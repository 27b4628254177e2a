"""Scalar handling for the two evaluation modes.

Instances always hold exact rationals.  A :class:`Numerics` value decides
whether evaluation runs on :class:`fractions.Fraction` or on binary floats,
and what tolerance comparisons use.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from typing import TYPE_CHECKING, Union

if TYPE_CHECKING:
    from .core import MdpInstance

Scalar = Union[Fraction, float]

#: relative tolerance factor used when float mode does not pin one explicitly
DEFAULT_FLOAT_REL = 1e-9


def to_fraction(value) -> Fraction:
    """Convert an input literal to an exact rational.

    Strings and Decimals are read as exact decimal text.  Floats are read
    through their shortest repr, so ``0.1`` becomes ``1/10`` rather than the
    binary expansion.
    """
    if isinstance(value, bool):
        raise TypeError(f"boolean is not a number: {value!r}")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite number: {value!r}")
        return Fraction(repr(value))
    if isinstance(value, Decimal):
        if not value.is_finite():
            raise ValueError(f"non-finite number: {value!r}")
        return Fraction(value)
    if isinstance(value, str):
        text = value.strip()
        try:
            return Fraction(text)
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"not a decimal or rational literal: {value!r}") from exc
    raise TypeError(f"unsupported numeric type {type(value).__name__}")


@dataclass(frozen=True)
class Numerics:
    """Evaluation mode: exact rationals or float64 with a relative tolerance.

    ``tol`` is only meaningful in float mode; ``None`` means the default
    ``1e-9 * max(1, max|r_a|)`` resolved per instance.
    """

    exact: bool = True
    tol: float | None = None

    def __post_init__(self):
        if self.exact and self.tol is not None:
            raise ValueError("exact mode takes no tolerance")
        if self.tol is not None and not self.tol > 0:
            raise ValueError("float tolerance must be positive")

    @classmethod
    def exact_rational(cls) -> "Numerics":
        return cls(exact=True)

    @classmethod
    def float64(cls, tol: float | None = None) -> "Numerics":
        return cls(exact=False, tol=tol)

    @classmethod
    def from_name(cls, name: str) -> "Numerics":
        if name == "exact":
            return cls.exact_rational()
        if name == "float":
            return cls.float64()
        raise ValueError(f"unknown numerics mode {name!r}")

    @property
    def name(self) -> str:
        return "exact" if self.exact else "float"

    def tolerance(self, inst: "MdpInstance") -> Scalar:
        """Absolute threshold: 0 in exact mode, eps in float mode."""
        if self.exact:
            return Fraction(0)
        if self.tol is not None:
            return self.tol
        biggest = max((abs(a.reward) for a in inst.actions), default=Fraction(0))
        return DEFAULT_FLOAT_REL * max(1.0, float(biggest))

    def convert(self, value: Fraction) -> Scalar:
        return value if self.exact else float(value)

    def rewards(self, inst: "MdpInstance"):
        return inst.rewards if self.exact else inst.float_rewards

    def discounts(self, inst: "MdpInstance"):
        return inst.discounts if self.exact else inst.float_discounts

    def zero(self) -> Scalar:
        return Fraction(0) if self.exact else 0.0

    def one(self) -> Scalar:
        return Fraction(1) if self.exact else 1.0


EXACT = Numerics.exact_rational()
FLOAT = Numerics.float64()


def leq(a: Scalar, b: Scalar, tol: Scalar = 0, scale: Scalar = 0) -> bool:
    """``a <= b`` up to ``tol * (1 + |scale|)``; plain ``<=`` when tol is 0."""
    if not tol:
        return a <= b
    return a <= b + tol * (1 + abs(scale))


def close(a: Scalar, b: Scalar, tol: Scalar = 0, scale: Scalar | None = None) -> bool:
    if not tol:
        return a == b
    if scale is None:
        scale = max(abs(a), abs(b))
    return abs(a - b) <= tol * (1 + abs(scale))


def fmt(value: Scalar) -> str:
    """Stable text for a scalar: ``p/q`` for rationals, repr for floats."""
    if isinstance(value, Fraction):
        return str(value)
    return repr(float(value))


def to_json_number(value: Scalar):
    if isinstance(value, Fraction):
        return str(value)
    return float(value)


def from_json_number(value, exact: bool) -> Scalar:
    if exact:
        return to_fraction(value)
    if isinstance(value, str):
        return float(Fraction(value))
    return float(value)
