"""
mpcmp/field.py - Prime Field Arithmetic

Exact arithmetic in F_q, Horner evaluation and Lagrange interpolation at
zero. Every protocol in the package is built on these primitives; nothing
here is floating point.

Field elements serialize as decimal strings so values above 2^53 survive
any JSON round-trip untouched.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
import sympy

from mpcmp.errors import FieldDivisionError, FieldError, ModulusMismatchError, ReconstructionError


# ============================================================
# FIELD CONFIGURATION
# ============================================================

@dataclass(frozen=True)
class FieldConfig:
    """Modulus context for F_q. Safe to share read-only across sessions."""

    q: int

    def __post_init__(self):
        if not isinstance(self.q, int) or self.q < 3:
            raise FieldError(f"Field modulus must be an integer >= 3, got {self.q!r}")
        if not sympy.isprime(self.q):
            raise FieldError(
                f"Field modulus q={self.q} is not prime",
                hint="Use a prime such as 2**61 - 1, 257 or 11",
            )

    @property
    def bit_length_q(self) -> int:
        """L_q: bit length of q - 1 (drives the zero-indicator cost)."""
        return (self.q - 1).bit_length()

    def element(self, value: int) -> 'FieldElement':
        return FieldElement(value, self)

    def parse(self, text: str) -> 'FieldElement':
        """Parse the decimal-string wire form."""
        try:
            value = int(text, 10)
        except (TypeError, ValueError):
            raise FieldError(f"Not a decimal field element: {text!r}")
        if not 0 <= value < self.q:
            raise FieldError(f"Element {value} outside [0, {self.q})")
        return FieldElement(value, self)

    @property
    def zero(self) -> 'FieldElement':
        return FieldElement(0, self)

    @property
    def one(self) -> 'FieldElement':
        return FieldElement(1, self)


class FieldElement:
    """Residue modulo q, bound to its FieldConfig."""

    __slots__ = ('value', 'field')

    def __init__(self, value: int, field: FieldConfig):
        self.value = int(value) % field.q
        self.field = field

    def _coerce(self, other) -> int:
        if isinstance(other, FieldElement):
            if other.field.q != self.field.q:
                raise ModulusMismatchError(
                    f"Cannot combine elements of F_{self.field.q} and F_{other.field.q}"
                )
            return other.value
        if isinstance(other, (int, np.integer)):
            return int(other)
        return NotImplemented

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return FieldElement(self.value + o, self.field)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return FieldElement(self.value - o, self.field)

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return FieldElement(o - self.value, self.field)

    def __mul__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return FieldElement(self.value * o, self.field)

    __rmul__ = __mul__

    def __neg__(self):
        return FieldElement(-self.value, self.field)

    def __pow__(self, exponent: int):
        if exponent < 0:
            return self.inverse() ** (-exponent)
        # pow(0, 0) = 1 by convention, matching Python's builtin
        return FieldElement(pow(self.value, exponent, self.field.q), self.field)

    def inverse(self) -> 'FieldElement':
        if self.value == 0:
            raise FieldDivisionError(f"Cannot invert zero in F_{self.field.q}")
        return FieldElement(pow(self.value, -1, self.field.q), self.field)

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return self * FieldElement(o, self.field).inverse()

    def __eq__(self, other):
        if isinstance(other, FieldElement):
            return self.field.q == other.field.q and self.value == other.value
        if isinstance(other, (int, np.integer)):
            return self.value == int(other) % self.field.q
        return NotImplemented

    def __hash__(self):
        return hash((self.value, self.field.q))

    def __bool__(self):
        return self.value != 0

    def __int__(self):
        return self.value

    def __index__(self):
        return self.value

    def __str__(self):
        return str(self.value)

    def __repr__(self):
        return f"FieldElement({self.value} mod {self.field.q})"


# ============================================================
# ELEMENT OPERATIONS
# ============================================================

def add(a: FieldElement, b: FieldElement) -> FieldElement:
    return a + b


def sub(a: FieldElement, b: FieldElement) -> FieldElement:
    return a - b


def mul(a: FieldElement, b: FieldElement) -> FieldElement:
    return a * b


def neg(a: FieldElement) -> FieldElement:
    return -a


def inv(a: FieldElement) -> FieldElement:
    return a.inverse()


def div(a: FieldElement, b: FieldElement) -> FieldElement:
    return a / b


def power(a: FieldElement, e: int) -> FieldElement:
    """a^e by square-and-multiply; power(a, 0) = 1 including a = 0."""
    if e < 0:
        raise FieldError(f"Exponent must be nonnegative, got {e}")
    return a ** e


# ============================================================
# POLYNOMIALS
# ============================================================

@dataclass
class DensePolynomial:
    """Polynomial over F_q, constant term first."""

    coefficients: list

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @classmethod
    def random(
        cls,
        field: FieldConfig,
        degree: int,
        constant: FieldElement,
        rng: np.random.Generator,
    ) -> 'DensePolynomial':
        """Constant term fixed, the other `degree` coefficients uniform."""
        coefficients = [constant] + [sample_uniform(field, rng) for _ in range(degree)]
        return cls(coefficients)

    def evaluate(self, x: FieldElement) -> FieldElement:
        return evaluate(self, x)


def evaluate(p: DensePolynomial, x: FieldElement) -> FieldElement:
    """Horner evaluation of p at x."""
    if not p.coefficients:
        return x.field.zero
    result = p.coefficients[-1]
    for c in reversed(p.coefficients[:-1]):
        result = result * x + c
    if result.field.q != x.field.q:
        raise ModulusMismatchError(
            f"Polynomial over F_{result.field.q} evaluated at element of F_{x.field.q}"
        )
    return result


@lru_cache(maxsize=1024)
def _weights_at_zero(q: int, xs: tuple) -> tuple:
    weights = []
    for i, xi in enumerate(xs):
        num, den = 1, 1
        for j, xj in enumerate(xs):
            if j != i:
                num = num * xj % q
                den = den * (xj - xi) % q
        weights.append(num * pow(den, -1, q) % q)
    return tuple(weights)


def lagrange_weights_at_zero(xs: Sequence[FieldElement]) -> list:
    """λ_i with p(0) = Σ λ_i p(x_i) for every p of degree < len(xs)."""
    if not xs:
        raise ReconstructionError("Interpolation needs at least one point")
    field = xs[0].field
    values = tuple(x.value for x in xs)
    if len(set(values)) != len(values):
        raise ReconstructionError(f"Interpolation points must be distinct, got {list(values)}")
    if 0 in values:
        raise ReconstructionError("Interpolation points must be nonzero")
    return [FieldElement(w, field) for w in _weights_at_zero(field.q, values)]


def interpolate_at_zero(points: Iterable[tuple]) -> FieldElement:
    """Value at 0 of the unique degree-(len-1) interpolant through points."""
    points = list(points)
    xs = [x for x, _ in points]
    weights = lagrange_weights_at_zero(xs)
    total = xs[0].field.zero
    for w, (_, y) in zip(weights, points):
        total = total + w * y
    return total


# ============================================================
# SAMPLING
# ============================================================

def _draw_below(bound: int, rng: np.random.Generator) -> int:
    """Uniform integer in [0, bound) by rejection on masked random bytes."""
    nbits = (bound - 1).bit_length()
    nbytes = (nbits + 7) // 8
    mask = (1 << nbits) - 1
    while True:
        candidate = int.from_bytes(rng.bytes(nbytes), 'big') & mask
        if candidate < bound:
            return candidate


def sample_uniform(field: FieldConfig, rng: np.random.Generator) -> FieldElement:
    return FieldElement(_draw_below(field.q, rng), field)


def sample_nonzero(field: FieldConfig, rng: np.random.Generator) -> FieldElement:
    return FieldElement(1 + _draw_below(field.q - 1, rng), field)
