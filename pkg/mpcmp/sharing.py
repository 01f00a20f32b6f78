"""
mpcmp/sharing.py - Shamir Secret Sharing

Degree-T sharing everywhere: any T shares reveal nothing, any T+1
reconstruct, and N >= 2T+1 parties suffice for multiplication.

A "sharing" is the list of one Share per party (index party-1); a
"vector sharing" is the list of one ShareVector per party.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field
from typing import TYPE_CHECKING, Optional

import numpy as np

from mpcmp.config import NONZERO_RETRY_LIMIT, logger
from mpcmp.errors import ConfigurationError, ReconstructionError, RetryExhaustedError
from mpcmp.field import (
    DensePolynomial,
    FieldConfig,
    FieldElement,
    interpolate_at_zero,
    sample_uniform,
)

if TYPE_CHECKING:
    from mpcmp.runtime import Session


# ============================================================
# DOMAIN TYPES
# ============================================================

@dataclass
class ProtocolConfig:
    """(N, T, q, L, alphas, seed) governing every session."""

    n: int
    t: int
    field: FieldConfig
    bits: int
    alphas: list = dataclass_field(default=None)
    seed: Optional[int] = None

    def __post_init__(self):
        if self.alphas is None:
            # α_i = i keeps transcripts replayable; any distinct nonzero points work
            self.alphas = [self.field.element(i) for i in range(1, self.n + 1)]
        else:
            self.alphas = [
                a if isinstance(a, FieldElement) else self.field.element(a) for a in self.alphas
            ]
        self.validate()

    def validate(self) -> 'ProtocolConfig':
        """Raise ConfigurationError naming the first violated constraint."""
        if self.t < 0:
            raise ConfigurationError(f"Threshold T={self.t} must be nonnegative")
        if self.n < 2 * self.t + 1:
            raise ConfigurationError(
                f"N={self.n} must satisfy N >= 2T+1 = {2 * self.t + 1}",
                hint="Multiplication needs an honest majority; raise --n or lower --t",
            )
        if len(self.alphas) != self.n:
            raise ConfigurationError(f"Expected {self.n} evaluation points, got {len(self.alphas)}")
        values = [a.value for a in self.alphas]
        if len(set(values)) != len(values):
            raise ConfigurationError(f"Evaluation points must be distinct, got {values}")
        if 0 in values:
            raise ConfigurationError("Evaluation points must be nonzero")
        if self.bits < 1:
            raise ConfigurationError(f"Bit length L={self.bits} must be positive")
        if (1 << (self.bits + 2)) >= self.field.q:
            raise ConfigurationError(
                f"2^(L+2) = {1 << (self.bits + 2)} must be below q={self.field.q} for L={self.bits}",
                hint="Lower --bits or raise --q",
            )
        return self

    @property
    def q(self) -> int:
        return self.field.q

    def to_record(self) -> dict:
        return {
            'n': self.n,
            't': self.t,
            'q': str(self.field.q),
            'bits': self.bits,
            'alphas': [str(a) for a in self.alphas],
            'seed': self.seed,
        }

    @classmethod
    def from_record(cls, record: dict) -> 'ProtocolConfig':
        field = FieldConfig(int(record['q']))
        return cls(
            n=int(record['n']),
            t=int(record['t']),
            field=field,
            bits=int(record['bits']),
            alphas=[int(a) for a in record['alphas']] if record.get('alphas') else None,
            seed=record.get('seed'),
        )


@dataclass(slots=True)
class Share:
    """One party's evaluation of a sharing polynomial."""

    party: int
    value: FieldElement
    degree: int


@dataclass(slots=True)
class ShareVector:
    party: int
    values: list


# ============================================================
# SHARING AND RECONSTRUCTION
# ============================================================

def share_secret(
    s: FieldElement,
    cfg: ProtocolConfig,
    rng: np.random.Generator,
    degree: Optional[int] = None,
) -> list:
    """Shares of a random degree-T polynomial with constant term s."""
    degree = cfg.t if degree is None else degree
    poly = DensePolynomial.random(cfg.field, degree, s, rng)
    return [Share(i + 1, poly.evaluate(alpha), degree) for i, alpha in enumerate(cfg.alphas)]


def reconstruct(shares: list, cfg: ProtocolConfig, degree: Optional[int] = None) -> FieldElement:
    """Interpolate at zero; needs at least degree+1 shares from distinct parties."""
    if not shares:
        raise ReconstructionError("No shares to reconstruct from")
    degree = max(s.degree for s in shares) if degree is None else degree
    parties = [s.party for s in shares]
    if len(set(parties)) != len(parties):
        raise ReconstructionError(f"Duplicate parties in share set: {sorted(parties)}")
    if len(shares) < degree + 1:
        raise ReconstructionError(
            f"A degree-{degree} sharing needs {degree + 1} shares, got {len(shares)}"
        )
    for p in parties:
        if not 1 <= p <= cfg.n:
            raise ReconstructionError(f"Party {p} outside [1, {cfg.n}]")
    return interpolate_at_zero((cfg.alphas[s.party - 1], s.value) for s in shares)


def share_vector(values: list, cfg: ProtocolConfig, rng: np.random.Generator) -> list:
    """Componentwise sharing with independent polynomials per coordinate."""
    columns = [share_secret(v, cfg, rng) for v in values]
    return [
        ShareVector(i + 1, [column[i].value for column in columns])
        for i in range(cfg.n)
    ]


def public_constant(c, cfg: ProtocolConfig) -> list:
    """Every party holds the same public value as a degree-0 share."""
    value = c if isinstance(c, FieldElement) else cfg.field.element(c)
    return [Share(i + 1, value, 0) for i in range(cfg.n)]


def unstack(vector_sharing: list, degree: int) -> list:
    """Vector sharing -> list of scalar sharings, one per coordinate."""
    length = len(vector_sharing[0].values)
    return [
        [Share(sv.party, sv.values[k], degree) for sv in vector_sharing]
        for k in range(length)
    ]


def stack(sharings: list) -> list:
    """List of scalar sharings -> vector sharing."""
    n = len(sharings[0])
    return [
        ShareVector(i + 1, [sharing[i].value for sharing in sharings])
        for i in range(n)
    ]


# ============================================================
# JOINT RANDOMNESS
# ============================================================

def joint_random_secret(session: 'Session', contributions: Optional[list] = None) -> list:
    """
    Degree-T sharing of Σ s_j where party j contributes a locally uniform s_j.

    No coalition of T parties learns the sum. Counted as one multiplication
    invocation under step "jrand".

    Args:
        contributions: optional per-party values replacing the random draws
            (test hook).
    """
    cfg = session.cfg
    if contributions is not None and len(contributions) != cfg.n:
        raise ConfigurationError(f"Expected {cfg.n} contributions, got {len(contributions)}")

    outbox = {}
    kept = {}
    for i in session.parties:
        rng = session.rng(i)
        if contributions is None:
            s_i = sample_uniform(cfg.field, rng)
        else:
            s_i = cfg.field.element(contributions[i - 1])
        shares = share_secret(s_i, cfg, rng)
        for j in session.parties:
            if j == i:
                kept[i] = shares[j - 1].value
            else:
                outbox[(i, j)] = [shares[j - 1].value]

    inbox = session.exchange('jrand', outbox)
    result = []
    for j in session.parties:
        total = kept[j]
        for payload in inbox[j].values():
            total = total + payload[0]
        result.append(Share(j, total, cfg.t))
    session.count('jrand')
    return result


def joint_random_nonzero(session: 'Session') -> list:
    """
    Joint random secret that is verified nonzero.

    Each candidate goes through the zero indicator and only the indicator
    bit is revealed; a zero candidate is discarded and regenerated. The
    check runs under step "jrand-check" and is input independent.
    """
    from mpcmp.protocols import zero_indicator

    forced = session.hooks.forced_zero_masks
    for attempt in range(NONZERO_RETRY_LIMIT):
        contributions = [0] * session.cfg.n if attempt < forced else None
        candidate = joint_random_secret(session, contributions)
        indicator = zero_indicator(candidate, session, step='jrand-check')
        if session.reveal(indicator, step='jrand-check', label='mask-nonzero') == 1:
            return candidate
        logger.info(
            f"Joint random mask was zero, regenerating (attempt {attempt + 1})",
            extra={'session_id': session.session_id, 'step': 'jrand'},
        )
    raise RetryExhaustedError(
        f"Could not draw a nonzero joint random secret in {NONZERO_RETRY_LIMIT} attempts",
        hint="Check the field modulus; failure probability should be (1/q)^64",
    )
