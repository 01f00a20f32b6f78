"""
mpcmp/encoding.py - Partition and 0-coded Vector Encodings

A secret s < 2^L is turned into two length-L vectors over F_q:

- the partition vector, whose i-th entry encodes the first i bits of s;
- the 0-coded vector, whose i-th entry encodes s_1..s_{i-1}1 where s_i = 0
  and a random filler bit-string of length != i where s_i = 1.

a > b exactly when partition(a) - zero_coded(b) has one zero entry.

Bit-strings are mapped to the field with a sentinel 1-bit prepended
(2^|w| + int(w)). The plain integer reading ("raw" mode) collides on
leading zeros, e.g. prefix "01" and filler "1", and is kept only to
reproduce hand-worked examples.
"""

from dataclasses import dataclass
from enum import Enum
from math import ceil, log2
from typing import NamedTuple, Optional

import numpy as np

from mpcmp.errors import EncodingError
from mpcmp.field import FieldConfig, FieldElement


class EncodingMode(str, Enum):
    RAW = 'raw'
    SENTINEL = 'sentinel'


# ============================================================
# BIT STRINGS
# ============================================================

@dataclass(frozen=True)
class BitString:
    """Big-endian bits; leading zeros are significant."""

    bits: tuple

    def __post_init__(self):
        if len(self.bits) < 1:
            raise EncodingError("Bit-string must have length >= 1")
        if any(b not in (0, 1) for b in self.bits):
            raise EncodingError(f"Bit-string entries must be 0 or 1, got {self.bits}")

    @classmethod
    def from_int(cls, s: int, length: int) -> 'BitString':
        return cls(tuple((s >> (length - 1 - k)) & 1 for k in range(length)))

    @classmethod
    def from_str(cls, text: str) -> 'BitString':
        return cls(tuple(int(c) for c in text))

    def __len__(self):
        return len(self.bits)

    def __str__(self):
        return ''.join(str(b) for b in self.bits)

    def __add__(self, other: 'BitString') -> 'BitString':
        return BitString(self.bits + other.bits)

    def prefix(self, i: int) -> 'BitString':
        return BitString(self.bits[:i])

    def to_int(self) -> int:
        value = 0
        for b in self.bits:
            value = (value << 1) | b
        return value


ONE = BitString((1,))


def to_bits(s: int, L: int) -> BitString:
    """Length-L binary representation of s, most significant bit first."""
    if L < 1:
        raise EncodingError(f"Bit length must be positive, got L={L}")
    if not 0 <= s < (1 << L):
        raise EncodingError(f"Secret {s} outside [0, 2^{L}) = [0, {1 << L})")
    return BitString.from_int(s, L)


def encode_string(w: BitString, field: FieldConfig) -> FieldElement:
    """Injective bit-string encoding 2^|w| + int(w)."""
    if (1 << (len(w) + 1)) >= field.q:
        raise EncodingError(
            f"Field too small: encoding a {len(w)}-bit string needs 2^{len(w) + 1} < q={field.q}"
        )
    return FieldElement((1 << len(w)) + w.to_int(), field)


def _encode(w: BitString, field: FieldConfig, mode: EncodingMode) -> FieldElement:
    if mode == EncodingMode.SENTINEL:
        return encode_string(w, field)
    return FieldElement(w.to_int(), field)


def _check_range(s: int, L: int, field: FieldConfig, mode: EncodingMode) -> BitString:
    bits = to_bits(s, L)
    needed = L + 2 if mode == EncodingMode.SENTINEL else L + 1
    if (1 << needed) >= field.q:
        raise EncodingError(
            f"2^(L+{needed - L}) = {1 << needed} must be below q={field.q} for L={L} in {mode.value} mode",
            hint="Lower --bits or raise --q",
        )
    return bits


# ============================================================
# ENCODED VECTORS
# ============================================================

@dataclass
class PartitionVector:
    entries: list
    bit_length: int

    def __post_init__(self):
        if len(self.entries) != self.bit_length:
            raise EncodingError(
                f"Partition vector has {len(self.entries)} entries, expected {self.bit_length}"
            )

    def values(self) -> list:
        return [e.value for e in self.entries]


@dataclass
class ZeroCodedVector:
    entries: list
    bit_length: int

    def __post_init__(self):
        if len(self.entries) != self.bit_length:
            raise EncodingError(
                f"0-coded vector has {len(self.entries)} entries, expected {self.bit_length}"
            )

    def values(self) -> list:
        return [e.value for e in self.entries]


def partition_vector(
    s: int,
    L: int,
    field: FieldConfig,
    mode: EncodingMode = EncodingMode.SENTINEL,
) -> PartitionVector:
    bits = _check_range(s, L, field, mode)
    entries = [_encode(bits.prefix(i), field, mode) for i in range(1, L + 1)]
    return PartitionVector(entries, L)


def sample_filler(position: int, L: int, rng: np.random.Generator) -> BitString:
    """Uniform bits, length uniform on {1..L+1} minus {position}."""
    lengths = [n for n in range(1, L + 2) if n != position]
    length = lengths[int(rng.integers(len(lengths)))]
    return BitString(tuple(int(b) for b in rng.integers(0, 2, size=length)))


def zero_coded_vector(
    s: int,
    L: int,
    field: FieldConfig,
    mode: EncodingMode = EncodingMode.SENTINEL,
    rng: Optional[np.random.Generator] = None,
    fillers: Optional[dict] = None,
) -> ZeroCodedVector:
    """
    0-coded vector of s.

    Args:
        fillers: optional {position: BitString} overriding the random filler
            at 1-based positions where s has a 1-bit (used to replay
            hand-worked examples).
    """
    bits = _check_range(s, L, field, mode)
    fillers = fillers or {}
    entries = []
    for i in range(1, L + 1):
        if bits.bits[i - 1] == 0:
            entries.append(_encode(bits.prefix(i - 1) + ONE if i > 1 else ONE, field, mode))
            continue
        filler = fillers.get(i)
        if filler is None:
            if rng is None:
                raise EncodingError("A random generator is required to draw fillers")
            filler = sample_filler(i, L, rng)
        elif len(filler) == i:
            raise EncodingError(f"Filler at position {i} must not have length {i}")
        entries.append(_encode(filler, field, mode))
    return ZeroCodedVector(entries, L)


def decode_secret(v: PartitionVector) -> int:
    """The last sentinel-mode partition entry is 2^L + s."""
    L = v.bit_length
    last = v.entries[-1].value
    if not (1 << L) <= last < (1 << (L + 1)):
        raise EncodingError(f"Last partition entry {last} outside [2^{L}, 2^{L + 1})")
    return last - (1 << L)


# ============================================================
# PLAINTEXT COMPARISON ORACLE
# ============================================================

class ZeroCount(NamedTuple):
    count: int
    verdict: bool
    positions: tuple


def zero_count_oracle(
    a: int,
    b: int,
    L: int,
    field: FieldConfig,
    rng: np.random.Generator,
) -> ZeroCount:
    """Count zero entries of partition(a) - zero_coded(b); one zero iff a > b."""
    v_a = partition_vector(a, L, field)
    v0_b = zero_coded_vector(b, L, field, rng=rng)
    positions = tuple(
        i + 1 for i, (x, y) in enumerate(zip(v_a.entries, v0_b.entries)) if x == y
    )
    return ZeroCount(len(positions), len(positions) == 1, positions)


# ============================================================
# ORDER TRANSFORMS
# ============================================================

def complement(s: int, L: int) -> int:
    """2^L - 1 - s: order-reversing within [0, 2^L), keeps L-bit validity."""
    if not 0 <= s < (1 << L):
        raise EncodingError(f"Secret {s} outside [0, 2^{L})")
    return (1 << L) - 1 - s


def tie_safe_bits(L: int, count: int) -> int:
    return L + (ceil(log2(count)) if count > 1 else 0)


def tie_safe_transform(values: list, L: int) -> tuple:
    """x' = x*K + (owner - 1): injective and order-preserving; returns (values', L')."""
    count = len(values)
    for x in values:
        to_bits(x, L)
    return [x * count + k for k, x in enumerate(values)], tie_safe_bits(L, count)


def tie_safe_decode(x: int, count: int) -> int:
    return x // count
