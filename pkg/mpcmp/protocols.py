"""
mpcmp/protocols.py - Comparison Protocol Stack

Two-secret comparison, the Fermat zero indicator and equality test, the
secure comparison indicator (SCI), comparison gates (SCG / ESCG) and the
circuits built from them: max, min, auction, median/rank, outlier distances
and maximin.

Conventions:
- Input k (0-based) is owned by party (k mod N) + 1.
- SCI(a, b) is a shared bit: 0 iff a > b.
- Gates select operand b on ties.
- Intermediate gate outputs stay shared; only the values a circuit's
  result names are reconstructed, each under a labelled reveal event.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Callable, Optional

from mpcmp.config import logger
from mpcmp.encoding import (
    complement,
    partition_vector,
    tie_safe_decode,
    tie_safe_transform,
    zero_coded_vector,
)
from mpcmp.errors import ConfigurationError, EncodingError, ProtocolError
from mpcmp.mpc import (
    affine,
    mul_many,
    mul_shares,
    pow_many,
    product_fold,
    product_fold_many,
    select_many,
    subtract_vectors,
)
from mpcmp.sharing import joint_random_nonzero, public_constant, stack, unstack

if TYPE_CHECKING:
    from mpcmp.runtime import ProtocolRequest, Session


# ============================================================
# DOMAIN TYPES
# ============================================================

class Verdict(str, Enum):
    FIRST_GREATER = 'first>second'
    NOT_GREATER = 'first<=second'


@dataclass
class ComparisonOutcome:
    revealed: object
    verdict: Verdict

    def __post_init__(self):
        if (self.revealed == 0) != (self.verdict == Verdict.FIRST_GREATER):
            raise ProtocolError("FirstGreater must coincide with a zero reveal")

    def to_record(self) -> dict:
        return {'verdict': self.verdict.value, 'revealed': str(self.revealed)}


@dataclass
class GateOutput:
    """Shared partition and 0-coded vectors of one value; index only for ESCG."""

    partition: list
    zero_coded: list
    index: Optional[list] = None

    @property
    def bit_length(self) -> int:
        return len(self.partition[0].values)


@dataclass(frozen=True)
class IndexedSecret:
    value: int
    index: int

    def __post_init__(self):
        if self.index == 0:
            raise EncodingError("Index 0 is reserved; identifiers start at 1")


# ============================================================
# INPUT SHARING
# ============================================================

def _last_entry(gate: GateOutput, session: 'Session') -> list:
    return unstack(gate.partition, session.cfg.t)[-1]


def share_encoded_inputs(
    values: list,
    session: 'Session',
    bits: Optional[int] = None,
    step: str = 'share',
) -> list:
    """
    Owners encode their values and share both vectors in one round.

    values holds ints or IndexedSecrets; an IndexedSecret's index is shared
    alongside its vectors so ESCG can carry it.
    """
    cfg, field = session.cfg, session.field
    L = bits or cfg.bits
    contributions = defaultdict(list)
    layout = []
    for k, item in enumerate(values):
        owner = session.owner_of(k)
        value = item.value if isinstance(item, IndexedSecret) else item
        v = partition_vector(value, L, field)
        v0 = zero_coded_vector(value, L, field, rng=session.rng(owner))
        entries = v.entries + v0.entries
        if isinstance(item, IndexedSecret):
            entries.append(field.element(item.index))
        layout.append((owner, len(contributions[owner]), len(entries)))
        contributions[owner].extend(entries)

    shared = session.share_inputs(dict(contributions), step)
    gates = []
    for owner, start, width in layout:
        columns = shared[owner][start:start + width]
        gates.append(GateOutput(
            partition=stack(columns[:L]),
            zero_coded=stack(columns[L:2 * L]),
            index=columns[2 * L] if width > 2 * L else None,
        ))
    return gates


def share_field_inputs(values: list, session: 'Session', step: str = 'share') -> list:
    """Plain field-element inputs (equality and zero tests)."""
    contributions = defaultdict(list)
    layout = []
    for k, value in enumerate(values):
        owner = session.owner_of(k)
        layout.append((owner, len(contributions[owner])))
        contributions[owner].append(session.field.element(value))
    shared = session.share_inputs(dict(contributions), step)
    return [shared[owner][position] for owner, position in layout]


# ============================================================
# TWO-SECRET COMPARISON
# ============================================================

def secure_compare(s1: int, s2: int, session: 'Session') -> ComparisonOutcome:
    """
    Everyone learns whether s1 > s2, nothing more.

    Holder of s1 shares its partition vector, holder of s2 its 0-coded
    vector. The parties fold the entrywise differences into one product,
    mask it with a verified-nonzero joint random secret and reveal
    s(0) = p(0) * prod_j q_j(0), which is 0 exactly when s1 > s2.
    """
    cfg, field = session.cfg, session.field
    L = cfg.bits
    holder1, holder2 = session.owner_of(0), session.owner_of(1)
    v = partition_vector(s1, L, field)
    v0 = zero_coded_vector(s2, L, field, rng=session.rng(holder2))

    contributions = defaultdict(list)
    contributions[holder1].extend(v.entries)
    contributions[holder2].extend(v0.entries)
    shared = session.share_inputs(dict(contributions), 'share')
    if holder1 == holder2:
        v_shares, v0_shares = shared[holder1][:L], shared[holder1][L:]
    else:
        v_shares, v0_shares = shared[holder1], shared[holder2]

    mask = joint_random_nonzero(session)
    diffs = [affine([x, y], [1, -1]) for x, y in zip(v_shares, v0_shares)]
    product = product_fold(diffs, session, 'fold')
    masked = mul_shares(mask, product, session, 'mask')
    revealed = session.reveal(masked, step='reveal', label='comparison')

    verdict = Verdict.FIRST_GREATER if revealed == 0 else Verdict.NOT_GREATER
    return ComparisonOutcome(revealed, verdict)


# ============================================================
# ZERO INDICATOR AND EQUALITY
# ============================================================

def zero_indicator(x: list, session: 'Session', step: str = 'zero') -> list:
    """Sharing of x^(q-1): 0 if x = 0, else 1 (Fermat)."""
    return pow_many([x], session.cfg.q - 1, session, step)[0]


def equality_test(x: list, y: list, session: 'Session', step: str = 'zero') -> list:
    """Zero(x - y): 0 iff x = y."""
    return zero_indicator(affine([x, y], [1, -1]), session, step)


# ============================================================
# COMPARISON INDICATOR AND GATES
# ============================================================

def sci_many(pairs: list, session: 'Session') -> list:
    """SCI for several (partition of a, 0-coded of b) pairs in lockstep rounds."""
    if not pairs:
        return []
    t = session.cfg.t
    diffs = [subtract_vectors(v_a, v0_b, t) for v_a, v0_b in pairs]
    products = product_fold_many(diffs, session, 'fold')
    return pow_many(products, session.cfg.q - 1, session, 'zero')


def sci(v_a: list, v0_b: list, session: 'Session') -> list:
    """
    Secure comparison indicator: shared bit, 0 iff a > b.

    The fold product is left unmasked since it never leaves the shared
    domain; only its zero indicator is passed on.
    """
    return sci_many([(v_a, v0_b)], session)[0]


def scg(a: GateOutput, b: GateOutput, session: 'Session', reverse: bool = False) -> GateOutput:
    """
    Comparison gate: shared vectors of max(a, b), or of min(a, b) with reverse.

    Selection is g*b + (1-g)*a over every coordinate in one round. When
    both operands carry an index, it is selected too (ESCG).
    """
    if a.bit_length != b.bit_length:
        raise ProtocolError(f"Gate operands have {a.bit_length} and {b.bit_length} bits")
    t = session.cfg.t
    if reverse:
        g = sci(b.partition, a.zero_coded, session)
    else:
        g = sci(a.partition, b.zero_coded, session)

    a_cols = unstack(a.partition, t) + unstack(a.zero_coded, t)
    b_cols = unstack(b.partition, t) + unstack(b.zero_coded, t)
    pairs = list(zip(a_cols, b_cols))
    carry_index = a.index is not None and b.index is not None
    if carry_index:
        pairs.append((a.index, b.index))

    selected = select_many(g, pairs, session, 'select')
    L = a.bit_length
    return GateOutput(
        partition=stack(selected[:L]),
        zero_coded=stack(selected[L:2 * L]),
        index=selected[2 * L] if carry_index else None,
    )


def escg(a: GateOutput, b: GateOutput, session: 'Session', reverse: bool = False) -> GateOutput:
    """SCG that also muxes the shared identifier of the winner."""
    if a.index is None or b.index is None:
        raise ProtocolError("ESCG needs an index sharing on both operands")
    return scg(a, b, session, reverse)


def tournament(gates: list, session: 'Session', reverse: bool = False) -> GateOutput:
    """
    Binary tree of gates; an odd element at any level passes through.

    Gate ids are "scg/<level>/<slot>" and prefix every step label inside
    the gate.
    """
    if not gates:
        raise ProtocolError("A tournament needs at least one input")
    level = 0
    while len(gates) > 1:
        winners = []
        for slot in range(len(gates) // 2):
            with session.scope(f"scg/{level}/{slot}"):
                winners.append(scg(gates[2 * slot], gates[2 * slot + 1], session, reverse))
        if len(gates) % 2:
            winners.append(gates[-1])
        gates = winners
        level += 1
    return gates[0]


# ============================================================
# CIRCUITS
# ============================================================

def _reveal_value(gate: GateOutput, session: 'Session', label: str, bits: int) -> int:
    """The last partition entry is 2^L + value."""
    last = session.reveal(_last_entry(gate, session), step='reveal', label=label)
    return last.value - (1 << bits)


def _reveal_complemented(gate: GateOutput, session: 'Session', label: str, bits: int) -> int:
    """Reveal 2^L - 1 - c for a gate holding complement c, without exposing c."""
    undone = affine([_last_entry(gate, session)], [-1], (1 << (bits + 1)) - 1)
    return session.reveal(undone, step='reveal', label=label).value


def max_circuit(values: list, session: 'Session', with_index: bool = False) -> dict:
    """Tournament max; with_index runs ESCG gates and also reveals the winner id."""
    if not values:
        raise ConfigurationError("max needs at least one input")
    L = session.cfg.bits
    items = [IndexedSecret(v, k + 1) for k, v in enumerate(values)] if with_index else list(values)
    winner = tournament(share_encoded_inputs(items, session), session)
    result = {'max': _reveal_value(winner, session, 'max', L)}
    if with_index:
        result['winner'] = session.reveal(winner.index, step='reveal', label='winner').value
    return result


def min_circuit(values: list, session: 'Session') -> dict:
    """Max over complements 2^L - 1 - s, un-complemented at the reveal."""
    if not values:
        raise ConfigurationError("min needs at least one input")
    L = session.cfg.bits
    complements = [complement(v, L) for v in values]
    winner = tournament(share_encoded_inputs(complements, session), session)
    return {'min': _reveal_complemented(winner, session, 'min', L)}


def _find_rank(
    gates: list,
    target: int,
    session: 'Session',
) -> int:
    """
    Scan candidates in input order for the one with target+1 inputs >= it.

    g_i = 1 + sum_{k != i} SCI(s_i, s_k); only Equal(g_i, target+1) is
    revealed per candidate. Returns the 0-based position found.
    """
    count = len(gates)
    for i in range(count):
        with session.scope(f"rank/{i}"):
            others = [k for k in range(count) if k != i]
            bits = sci_many(
                [(gates[i].partition, gates[k].zero_coded) for k in others], session
            )
            g = affine(bits, [1] * len(bits), 1) if bits else public_constant(1, session.cfg)
            check = equality_test(g, public_constant(target + 1, session.cfg), session)
            if session.reveal(check, step='reveal', label=f'rank-check/{i + 1}') == 0:
                return i
    raise ProtocolError(
        f"No candidate has rank {target}; inputs must be distinct",
        hint="Pass --tie-safe to break ties by owner index",
    )


def _rank_inputs(values: list, session: 'Session', tie_safe: bool) -> tuple:
    L = session.cfg.bits
    if tie_safe:
        transformed, bits = tie_safe_transform(values, L)
        return transformed, bits
    return list(values), L


def rank_circuit(values: list, t: int, session: 'Session', tie_safe: bool = False) -> dict:
    """Element with exactly t strictly greater others (t=0 is the max)."""
    if not values:
        raise ConfigurationError("rank needs at least one input")
    if not 0 <= t < len(values):
        raise ConfigurationError(f"Rank t={t} outside [0, {len(values)})")
    encoded, bits = _rank_inputs(values, session, tie_safe)
    gates = share_encoded_inputs(encoded, session, bits=bits)
    position = _find_rank(gates, t, session)
    value = _reveal_value(gates[position], session, 'rank', bits)
    if tie_safe:
        value = tie_safe_decode(value, len(values))
    return {'rank_t': t, 'value': value, 'position': position + 1}


def median_rank(count: int) -> int:
    """Upper median: rank (K-1)//2, i.e. ceil(K/2) inputs >= it."""
    return (count - 1) // 2


def median_circuit(values: list, session: 'Session', tie_safe: bool = False) -> dict:
    result = rank_circuit(values, median_rank(len(values)), session, tie_safe)
    return {'median': result['value'], 'position': result['position']}


def outlier_distances(
    values: list,
    session: 'Session',
    server: int,
    tie_safe: bool = False,
) -> dict:
    """
    Squared distances to the median, reconstructed only by `server`.

    The median stays shared: its value is taken from the last partition
    entry of the located candidate minus the public 2^L.
    """
    if not values:
        raise ConfigurationError("outliers needs at least one input")
    if server not in session.parties:
        raise ConfigurationError(f"Server {server} outside [1, {session.cfg.n}]")
    count = len(values)
    encoded, bits = _rank_inputs(values, session, tie_safe)
    gates = share_encoded_inputs(encoded, session, bits=bits)
    position = _find_rank(gates, median_rank(count), session)

    offset = 1 << bits
    if tie_safe:
        # x = (x' - k) / K is exact, so undo the augmentation in the field
        scale = session.field.element(count).inverse()
        points = [
            affine([_last_entry(gate, session)], [scale], -(offset + k) * scale)
            for k, gate in enumerate(gates)
        ]
    else:
        points = [affine([_last_entry(gate, session)], [1], -offset) for gate in gates]

    median = points[position]
    diffs = [affine([x, median], [1, -1]) for x in points]
    squares = mul_many(diffs, diffs, session, 'square')
    labels = [f'distance/{k + 1}' for k in range(count)]
    distances = session.reveal_to(squares, server, step='reveal', labels=labels)

    logger.info(
        f"Outlier distances delivered to party {server}",
        extra={'session_id': session.session_id, 'party': server},
    )
    return {
        party: (
            {'server': server, 'distances': [d.value for d in distances]}
            if party == server else {'server': server, 'distances': None}
        )
        for party in session.parties
    }


def maximin(groups: list, session: 'Session') -> dict:
    """
    max over groups of min within the group, plus the winning group.

    Each group's min stays shared as the complement encoding of its max
    over complements; the outer reverse tournament picks the smallest
    complement, carrying public group ids, and is un-complemented at the
    final reveal only.
    """
    if not groups:
        raise ConfigurationError("maximin needs at least one group")
    if any(len(group) == 0 for group in groups):
        raise ConfigurationError("Every maximin group must be nonempty")
    L = session.cfg.bits
    flat = [complement(v, L) for group in groups for v in group]
    gates = share_encoded_inputs(flat, session)

    minima = []
    start = 0
    for g, group in enumerate(groups):
        with session.scope(f"group/{g + 1}"):
            member_gates = gates[start:start + len(group)]
            minimum = tournament(member_gates, session)
        minimum.index = public_constant(g + 1, session.cfg)
        minima.append(minimum)
        start += len(group)

    with session.scope('outer'):
        winner = tournament(minima, session, reverse=True)
    value = _reveal_complemented(winner, session, 'maximin', L)
    group = session.reveal(winner.index, step='reveal', label='group').value
    return {'value': value, 'group': group}


# ============================================================
# PROTOCOL REGISTRY
# ============================================================

def _expect_inputs(request: 'ProtocolRequest', count: int):
    if len(request.inputs) != count:
        raise ConfigurationError(
            f"{request.protocol} takes exactly {count} inputs, got {len(request.inputs)}"
        )


def _broadcast(result: dict, session: 'Session') -> dict:
    return {party: dict(result) for party in session.parties}


def _split_groups(request: 'ProtocolRequest') -> list:
    sizes = request.options.get('groups')
    if not sizes:
        return [list(request.inputs)]
    if sum(sizes) != len(request.inputs):
        raise ConfigurationError(f"Group sizes {sizes} do not cover {len(request.inputs)} inputs")
    groups, start = [], 0
    for size in sizes:
        groups.append(list(request.inputs[start:start + size]))
        start += size
    return groups


def _run_compare(session, request):
    _expect_inputs(request, 2)
    return _broadcast(secure_compare(*request.inputs, session).to_record(), session)


def _run_sci(session, request):
    _expect_inputs(request, 2)
    a, b = share_encoded_inputs(request.inputs, session)
    bit = session.reveal(sci(a.partition, b.zero_coded, session), label='sci')
    return _broadcast({'bit': bit.value}, session)


def _run_scg(session, request):
    _expect_inputs(request, 2)
    a, b = share_encoded_inputs(request.inputs, session)
    with session.scope('scg/0/0'):
        winner = scg(a, b, session)
    return _broadcast({'max': _reveal_value(winner, session, 'max', session.cfg.bits)}, session)


def _run_equality(session, request):
    _expect_inputs(request, 2)
    x, y = share_field_inputs(request.inputs, session)
    bit = session.reveal(equality_test(x, y, session), label='equality')
    return _broadcast({'bit': bit.value}, session)


def _run_zero(session, request):
    _expect_inputs(request, 1)
    (x,) = share_field_inputs(request.inputs, session)
    bit = session.reveal(zero_indicator(x, session), label='zero')
    return _broadcast({'bit': bit.value}, session)


def _run_max(session, request):
    return _broadcast(max_circuit(request.inputs, session), session)


def _run_auction(session, request):
    result = max_circuit(request.inputs, session, with_index=True)
    return _broadcast({'winner': result['winner'], 'bid': result['max']}, session)


def _run_min(session, request):
    return _broadcast(min_circuit(request.inputs, session), session)


def _run_median(session, request):
    tie_safe = bool(request.options.get('tie_safe', False))
    return _broadcast(median_circuit(request.inputs, session, tie_safe), session)


def _run_rank(session, request):
    tie_safe = bool(request.options.get('tie_safe', False))
    t = int(request.options.get('rank_t', 0))
    return _broadcast(rank_circuit(request.inputs, t, session, tie_safe), session)


def _run_outliers(session, request):
    server = int(request.options.get('server', 1))
    tie_safe = bool(request.options.get('tie_safe', False))
    return outlier_distances(request.inputs, session, server, tie_safe)


def _run_maximin(session, request):
    return _broadcast(maximin(_split_groups(request), session), session)


PROTOCOLS: dict = {
    'compare': _run_compare,
    'sci': _run_sci,
    'scg': _run_scg,
    'equality': _run_equality,
    'zero': _run_zero,
    'max': _run_max,
    'min': _run_min,
    'auction': _run_auction,
    'median': _run_median,
    'rank': _run_rank,
    'outliers': _run_outliers,
    'maximin': _run_maximin,
}


def get_protocol(name: str) -> Callable:
    try:
        return PROTOCOLS[name]
    except KeyError:
        raise ConfigurationError(
            f"Unknown protocol {name!r}",
            hint=f"Available: {', '.join(sorted(PROTOCOLS))}",
        )


# ============================================================
# PLAINTEXT ORACLES
# ============================================================

def _oracle_order(values: list) -> list:
    """Input positions from largest to smallest, ties broken by later position."""
    return sorted(range(len(values)), key=lambda k: (values[k], k), reverse=True)


def plaintext_result(request: 'ProtocolRequest', q: Optional[int] = None) -> dict:
    """
    The public output each protocol should produce, computed in the clear.

    compare returns only the verdict (its revealed value is randomized);
    outliers returns the server's distance list.
    """
    name, xs, options = request.protocol, list(request.inputs), request.options
    if name == 'compare':
        verdict = Verdict.FIRST_GREATER if xs[0] > xs[1] else Verdict.NOT_GREATER
        return {'verdict': verdict.value}
    if name == 'sci':
        return {'bit': 0 if xs[0] > xs[1] else 1}
    if name in ('scg', 'max'):
        return {'max': max(xs)}
    if name == 'equality':
        return {'bit': 0 if xs[0] == xs[1] else 1}
    if name == 'zero':
        residue = xs[0] % q if q else xs[0]
        return {'bit': 0 if residue == 0 else 1}
    if name == 'min':
        return {'min': min(xs)}
    if name == 'auction':
        best = max(xs)
        # ties go to the later bidder
        return {'winner': max(k for k, x in enumerate(xs) if x == best) + 1, 'bid': best}
    if name in ('median', 'rank'):
        t = median_rank(len(xs)) if name == 'median' else int(options.get('rank_t', 0))
        position = _oracle_order(xs)[t]
        if name == 'median':
            return {'median': xs[position], 'position': position + 1}
        return {'rank_t': t, 'value': xs[position], 'position': position + 1}
    if name == 'outliers':
        median = xs[_oracle_order(xs)[median_rank(len(xs))]]
        return {'distances': [(x - median) ** 2 for x in xs]}
    if name == 'maximin':
        minima = [min(group) for group in _split_groups(request)]
        best = max(minima)
        # ties go to the later group
        return {'value': best, 'group': max(g for g, m in enumerate(minima) if m == best) + 1}
    raise ConfigurationError(f"No plaintext oracle for {name!r}")
