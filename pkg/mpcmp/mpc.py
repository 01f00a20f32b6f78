"""
mpcmp/mpc.py - Interactive Share Arithmetic

BGW-style multiplication with degree reduction, local affine maps, product
folding, exponentiation and oblivious selection. Every two-secret
multiplication is one "invocation" and is recorded on the session's
InvocationCounter under the caller's step label.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

from mpcmp.errors import ConfigurationError, ProtocolError
from mpcmp.field import lagrange_weights_at_zero
from mpcmp.sharing import Share, public_constant, share_secret, stack, unstack

if TYPE_CHECKING:
    from mpcmp.runtime import Session


# ============================================================
# INVOCATION COUNTING
# ============================================================

def leaf_step(label: str) -> str:
    """'scg/0/1/select' -> 'select'."""
    return label.rsplit('/', 1)[-1]


@dataclass
class InvocationCounter:
    """Monotone per-step-label count of multiplication invocations."""

    counts: dict = field(default_factory=lambda: defaultdict(int))

    def record(self, label: str, n: int = 1):
        if n < 0:
            raise ValueError("Invocation counts never decrease")
        self.counts[label] += n

    def total(self, steps: Optional[set] = None, exclude: set = frozenset()) -> int:
        return sum(
            count for label, count in self.counts.items()
            if (steps is None or leaf_step(label) in steps) and leaf_step(label) not in exclude
        )

    def by_step(self) -> dict:
        totals = defaultdict(int)
        for label, count in self.counts.items():
            totals[leaf_step(label)] += count
        return dict(totals)

    def snapshot(self) -> dict:
        return dict(self.counts)


# ============================================================
# MULTIPLICATION
# ============================================================

def mul_many(xs: list, ys: list, session: 'Session', step: str = 'mul') -> list:
    """
    Multiply k pairs of degree-T sharings in one round.

    Each party multiplies its shares locally (a point on a degree-2T
    polynomial), re-shares that point with a fresh degree-T polynomial and
    recombines the sub-shares it receives with the Lagrange weights at 0
    over all N points. Counts k invocations.
    """
    cfg = session.cfg
    if cfg.n < 2 * cfg.t + 1:
        raise ConfigurationError(f"N={cfg.n} must satisfy N >= 2T+1 = {2 * cfg.t + 1}")
    if len(xs) != len(ys):
        raise ProtocolError(f"Cannot multiply {len(xs)} sharings with {len(ys)}")
    if not xs:
        return []

    k = len(xs)
    outbox = {}
    kept = {}
    for i in session.parties:
        rng = session.rng(i)
        products = [xs[m][i - 1].value * ys[m][i - 1].value for m in range(k)]
        subshares = [share_secret(h, cfg, rng) for h in products]
        for j in session.parties:
            payload = [subshares[m][j - 1].value for m in range(k)]
            if j == i:
                kept[i] = payload
            else:
                outbox[(i, j)] = payload

    inbox = session.exchange(step, outbox)
    weights = lagrange_weights_at_zero(cfg.alphas)

    results = [[None] * cfg.n for _ in range(k)]
    for j in session.parties:
        received = dict(inbox[j])
        received[j] = kept[j]
        for m in range(k):
            acc = cfg.field.zero
            for i in session.parties:
                acc = acc + weights[i - 1] * received[i][m]
            results[m][j - 1] = Share(j, acc, cfg.t)

    session.count(step, k)
    return results


def mul_shares(x: list, y: list, session: 'Session', step: str = 'mul') -> list:
    return mul_many([x], [y], session, step)[0]


# ============================================================
# LOCAL LINEAR MAPS
# ============================================================

def affine(sharings: list, coeffs: list, constant=0) -> list:
    """Σ c_k x_k + constant, party-local; no interaction, no invocation."""
    if len(sharings) != len(coeffs):
        raise ProtocolError(f"{len(sharings)} sharings but {len(coeffs)} coefficients")
    if not sharings:
        raise ProtocolError("affine needs at least one sharing; use public_constant instead")
    degree = max(
        (sharing[0].degree for c, sharing in zip(coeffs, sharings) if c != 0),
        default=0,
    )
    result = []
    for i in range(len(sharings[0])):
        party = sharings[0][i].party
        acc = sharings[0][i].value * 0 + constant
        for c, sharing in zip(coeffs, sharings):
            acc = acc + sharing[i].value * c
        result.append(Share(party, acc, degree))
    return result


def subtract_vectors(a: list, b: list, degree: int) -> list:
    """Componentwise a - b of two vector sharings, as scalar sharings."""
    a_cols, b_cols = unstack(a, degree), unstack(b, degree)
    if len(a_cols) != len(b_cols):
        raise ProtocolError(f"Vector lengths differ: {len(a_cols)} vs {len(b_cols)}")
    return [affine([x, y], [1, -1]) for x, y in zip(a_cols, b_cols)]


# ============================================================
# PRODUCTS AND POWERS
# ============================================================

def product_fold_many(factor_lists: list, session: 'Session', step: str = 'fold') -> list:
    """Left folds of several equal-length factor lists, advanced in lockstep."""
    if not factor_lists or any(not factors for factors in factor_lists):
        raise ProtocolError("product_fold needs at least one factor")
    length = len(factor_lists[0])
    if any(len(factors) != length for factors in factor_lists):
        raise ProtocolError("Lockstep folds need equal-length factor lists")
    accs = [factors[0] for factors in factor_lists]
    for position in range(1, length):
        accs = mul_many(accs, [factors[position] for factors in factor_lists], session, step)
    return accs


def product_fold(xs: list, session: 'Session', step: str = 'fold') -> list:
    """x_1 · x_2 · ... · x_k as a left fold; exactly k-1 invocations."""
    return product_fold_many([xs], session, step)[0]


def pow_many(xs: list, e: int, session: 'Session', step: str = 'zero') -> list:
    """
    x^e for several sharings by square-and-multiply from the leading bit.

    Costs (bitlen(e) - 1) squarings plus (popcount(e) - 1) multiplications
    per input.
    """
    if e < 0:
        raise ProtocolError(f"Exponent must be nonnegative, got {e}")
    if e == 0:
        return [public_constant(1, session.cfg) for _ in xs]
    accs = list(xs)
    for bit in bin(e)[3:]:
        accs = mul_many(accs, accs, session, step)
        if bit == '1':
            accs = mul_many(accs, list(xs), session, step)
    return accs


def pow_shares(x: list, e: int, session: 'Session', step: str = 'zero') -> list:
    return pow_many([x], e, session, step)[0]


# ============================================================
# OBLIVIOUS SELECTION
# ============================================================

def select_many(g: list, pairs: list, session: 'Session', step: str = 'select') -> list:
    """For each (a, b): g·b + (1-g)·a = a + g·(b-a); one invocation per pair."""
    diffs = [affine([b, a], [1, -1]) for a, b in pairs]
    products = mul_many([g] * len(pairs), diffs, session, step)
    return [affine([a, p], [1, 1]) for (a, _), p in zip(pairs, products)]


def select(g: list, a: list, b: list, session: 'Session', step: str = 'select') -> list:
    """Oblivious mux of two vector sharings on a shared bit g."""
    degree = session.cfg.t
    a_cols, b_cols = unstack(a, degree), unstack(b, degree)
    if len(a_cols) != len(b_cols):
        raise ProtocolError(f"Vector lengths differ: {len(a_cols)} vs {len(b_cols)}")
    return stack(select_many(g, list(zip(a_cols, b_cols)), session, step))
