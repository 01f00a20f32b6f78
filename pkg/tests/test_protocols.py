"""End-to-end protocol tests against plaintext oracles."""

import itertools

import numpy as np
import pytest

from conftest import TRIALS
from mpcmp.errors import ConfigurationError, EncodingError, ProtocolError
from mpcmp.field import FieldConfig
from mpcmp.mpc import leaf_step
from mpcmp.protocols import (
    PROTOCOLS,
    ComparisonOutcome,
    IndexedSecret,
    Verdict,
    get_protocol,
    median_rank,
    plaintext_result,
)
from mpcmp.runtime import ProtocolRequest, SessionHooks, run_session
from mpcmp.sharing import ProtocolConfig


@pytest.fixture
def cfg4(f257):
    return ProtocolConfig(n=3, t=1, field=f257, bits=4)


def _oracle(protocol, inputs, **options):
    return plaintext_result(ProtocolRequest(protocol, list(inputs), options))


def _online_invocations(transcript):
    return sum(c for label, c in transcript.counters.items() if leaf_step(label) != 'jrand-check')


class TestTypes:

    def test_outcome_consistency(self, f11):
        with pytest.raises(ProtocolError):
            ComparisonOutcome(f11.element(0), Verdict.NOT_GREATER)
        assert ComparisonOutcome(f11.element(3), Verdict.NOT_GREATER).to_record()['revealed'] == '3'

    def test_index_zero_reserved(self):
        with pytest.raises(EncodingError):
            IndexedSecret(5, 0)

    def test_unknown_protocol(self):
        with pytest.raises(ConfigurationError, match="Unknown protocol"):
            get_protocol('sort')

    def test_median_rank_is_upper_median(self):
        assert [median_rank(k) for k in (1, 2, 3, 4, 5)] == [0, 0, 1, 1, 2]


class TestSecureCompare:

    def test_worked_example(self, run, cfg4):
        out = run('compare', [10, 9], cfg4)
        assert out == {'verdict': 'first>second', 'revealed': '0'}

    def test_not_greater_reveals_nonzero(self, run, cfg4):
        out = run('compare', [9, 10], cfg4, seed=4)
        assert out['verdict'] == 'first<=second'
        assert out['revealed'] != '0'

    def test_equal_is_not_greater(self, run, cfg4):
        assert run('compare', [6, 6], cfg4)['verdict'] == 'first<=second'

    def test_exhaustive_small(self, run, small_cfg):
        for a, b in itertools.product(range(8), repeat=2):
            assert run('compare', [a, b], small_cfg, seed=a * 8 + b)['verdict'] == _oracle('compare', [a, b])['verdict']

    def test_randomized_large(self, run, large_cfg):
        rng = np.random.default_rng(1)
        for trial in range(TRIALS):
            a, b = (int(x) for x in rng.integers(0, 1 << 16, size=2))
            assert run('compare', [a, b], large_cfg, seed=trial)['verdict'] == _oracle('compare', [a, b])['verdict']

    def test_all_parties_agree(self, cfg4):
        result = run_session(ProtocolRequest('compare', [3, 12]), cfg4, seed=9)
        assert len({tuple(sorted(o.items())) for o in result.outputs.values()}) == 1

    def test_invocations_within_bound(self, cfg4):
        transcript = run_session(ProtocolRequest('compare', [10, 9]), cfg4, seed=2).transcript
        # jrand (once per mask draw) + fold L-1 + mask 1
        assert _online_invocations(transcript) == cfg4.bits + transcript.counters["jrand"]
        assert _online_invocations(transcript) <= cfg4.field.bit_length_q + 2

    def test_reveals_only_the_masked_product(self, cfg4):
        transcript = run_session(ProtocolRequest('compare', [10, 9]), cfg4, seed=2).transcript
        assert transcript.reveal_labels()[-1] == 'comparison'
        assert set(transcript.reveal_labels()) == {'mask-nonzero', 'comparison'}

    def test_input_out_of_range(self, run, cfg4):
        with pytest.raises(EncodingError):
            run('compare', [16, 1], cfg4)

    def test_wrong_input_count(self, run, cfg4):
        with pytest.raises(ConfigurationError, match="exactly 2"):
            run('compare', [1, 2, 3], cfg4)


class TestZeroMaskRegeneration:
    """Large field so an unforced zero mask never shows up in the counts."""

    @pytest.fixture
    def cfg4(self, f61):
        return ProtocolConfig(n=3, t=1, field=f61, bits=4)

    def test_forced_zero_mask_keeps_verdict(self, cfg4):
        for seed in range(max(TRIALS, 3)):
            for a, b in ((10, 9), (9, 10)):
                result = run_session(
                    ProtocolRequest('compare', [a, b]), cfg4, seed=seed,
                    hooks=SessionHooks(forced_zero_masks=1),
                )
                assert result.outputs[1]['verdict'] == _oracle('compare', [a, b])['verdict']
                assert result.transcript.counters['jrand'] == 2

    @pytest.mark.slow
    def test_forced_zero_mask_thousand_trials(self, cfg4):
        rng = np.random.default_rng(5)
        for seed in range(1000):
            a, b = (int(x) for x in rng.integers(0, 16, size=2))
            result = run_session(
                ProtocolRequest('compare', [a, b]), cfg4, seed=seed,
                hooks=SessionHooks(forced_zero_masks=1),
            )
            if result.outputs[1]['verdict'] == 'first>second':
                assert a > b


class TestZeroAndEquality:

    def test_zero_indicator_exhaustive_f13(self, run):
        cfg = ProtocolConfig(n=3, t=1, field=FieldConfig(13), bits=1)
        for x in range(13):
            assert run('zero', [x], cfg, seed=x)['bit'] == (0 if x == 0 else 1)

    def test_zero_indicator_q11(self, run):
        cfg = ProtocolConfig(n=3, t=1, field=FieldConfig(11), bits=1)
        assert run('zero', [7], cfg)['bit'] == 1
        assert run('zero', [0], cfg)['bit'] == 0

    def test_equality_exhaustive_f11(self, run):
        cfg = ProtocolConfig(n=3, t=1, field=FieldConfig(11), bits=1)
        for x, y in itertools.product(range(11), repeat=2):
            assert run('equality', [x, y], cfg, seed=x * 11 + y)['bit'] == (0 if x == y else 1)

    def test_zero_cost_at_most_2lq(self, f61):
        cfg = ProtocolConfig(n=3, t=1, field=f61, bits=4)
        transcript = run_session(ProtocolRequest('zero', [5]), cfg, seed=0).transcript
        assert _online_invocations(transcript) <= 2 * f61.bit_length_q


class TestComparisonIndicator:

    def test_exhaustive_small(self, run, small_cfg):
        for a, b in itertools.product(range(8), repeat=2):
            assert run('sci', [a, b], small_cfg, seed=a + 8 * b)['bit'] == (0 if a > b else 1)

    def test_worked_example(self, run, cfg4):
        assert run('sci', [10, 9], cfg4)['bit'] == 0
        assert run('sci', [9, 9], cfg4)['bit'] == 1

    def test_cost_within_bound(self, cfg4):
        transcript = run_session(ProtocolRequest('sci', [10, 9]), cfg4, seed=0).transcript
        assert _online_invocations(transcript) <= 3 * cfg4.field.bit_length_q + 2


class TestGates:

    def test_scg_exhaustive_pairs(self, run, small_cfg):
        for a, b in itertools.product(range(8), repeat=2):
            assert run('scg', [a, b], small_cfg, seed=a * 8 + b)['max'] == max(a, b)

    def test_scg_cost_within_bound(self, cfg4):
        transcript = run_session(ProtocolRequest('scg', [10, 9]), cfg4, seed=0).transcript
        assert _online_invocations(transcript) <= 5 * cfg4.field.bit_length_q + 2
        assert any(label.startswith('scg/0/0/') for label in transcript.counters)

    def test_chained_gates(self, run, small_cfg, rng):
        for trial in range(max(TRIALS, 5)):
            values = [int(x) for x in rng.integers(0, 8, size=3)]
            assert run('max', values, small_cfg, seed=trial)['max'] == max(values)

    def test_escg_picks_argmax(self, run, cfg4):
        assert run('auction', [10, 9], cfg4) == {'winner': 1, 'bid': 10}

    def test_escg_tie_selects_second(self, run, cfg4):
        assert run('auction', [9, 9], cfg4) == {'winner': 2, 'bid': 9}

    def test_auction_four_bidders(self, run, cfg4, rng):
        assert run('auction', [3, 9, 4, 1], cfg4) == {'winner': 2, 'bid': 9}
        for trial in range(max(TRIALS, 3)):
            bids = [int(x) for x in rng.integers(0, 16, size=4)]
            assert run('auction', bids, cfg4, seed=trial) == _oracle('auction', bids)


class TestExtremaCircuits:

    def test_max_example(self, run, cfg4):
        assert run('max', [3, 9, 4, 1], cfg4) == {'max': 9}

    def test_single_input_needs_no_gate(self, cfg4):
        result = run_session(ProtocolRequest('max', [7]), cfg4, seed=0)
        assert result.outputs[1] == {'max': 7}
        assert result.transcript.counters == {}

    def test_max_reveals_only_the_result(self, cfg4):
        transcript = run_session(ProtocolRequest('max', [3, 9, 4, 1, 6]), cfg4, seed=1).transcript
        assert transcript.reveal_labels() == ['max']
        reveal_rounds = {m.round for m in transcript.messages if leaf_step(m.step) == 'reveal'}
        assert reveal_rounds == {max(m.round for m in transcript.messages)}

    def test_max_cost_within_bound(self, cfg4):
        for count in range(2, 9):
            transcript = run_session(ProtocolRequest('max', list(range(count))), cfg4, seed=count).transcript
            bound = (count - 1) * (5 * cfg4.field.bit_length_q + 2)
            assert _online_invocations(transcript) <= bound

    def test_min_example(self, run, cfg4):
        assert run('min', [3, 9, 4], cfg4) == {'min': 3}
        assert run('min', [11], cfg4) == {'min': 11}

    def test_odd_tournament_sizes(self, run, small_cfg):
        for values in ([5], [1, 6, 2], [7, 0, 3, 3, 6]):
            assert run('max', values, small_cfg)['max'] == max(values)
            assert run('min', values, small_cfg)['min'] == min(values)

    @pytest.mark.slow
    def test_exhaustive_triples(self, run, small_cfg):
        for values in itertools.product(range(8), repeat=3):
            assert run('max', values, small_cfg)['max'] == max(values)
            assert run('min', values, small_cfg)['min'] == min(values)


class TestRankCircuits:

    def test_median_examples(self, run, small_cfg):
        assert run('median', [5, 1, 7], small_cfg)['median'] == 5
        assert run('median', [1, 2, 3, 4], small_cfg)['median'] == 3
        assert run('median', [6], small_cfg)['median'] == 6

    def test_rank_extremes(self, run, cfg4):
        assert run('rank', [5, 1, 9], cfg4, rank_t=0)['value'] == 9
        assert run('rank', [5, 1, 9], cfg4, rank_t=2)['value'] == 1

    def test_rank_out_of_range(self, run, cfg4):
        with pytest.raises(ConfigurationError):
            run('rank', [5, 1, 9], cfg4, rank_t=3)

    def test_ties_need_tie_safe(self, run, f257):
        cfg = ProtocolConfig(n=3, t=1, field=f257, bits=3)
        with pytest.raises(ProtocolError, match="distinct"):
            run('median', [4, 4, 4], cfg)

    def test_tie_safe_median(self, run, f257):
        cfg = ProtocolConfig(n=3, t=1, field=f257, bits=3)
        out = run('median', [4, 2, 4], cfg, tie_safe=True)
        assert out == _oracle('median', [4, 2, 4], tie_safe=True)
        assert out['median'] == 4

    def test_random_distinct_sets(self, run, small_cfg, rng):
        for trial in range(max(TRIALS, 3)):
            values = [int(x) for x in rng.choice(8, size=4, replace=False)]
            t = int(rng.integers(0, 4))
            assert run('rank', values, small_cfg, seed=trial, rank_t=t) == _oracle('rank', values, rank_t=t)

    def test_reveals_only_checks_and_result(self, small_cfg):
        transcript = run_session(ProtocolRequest('median', [5, 1, 7]), small_cfg, seed=0).transcript
        labels = transcript.reveal_labels()
        assert labels[-1] == 'rank'
        assert all(label.startswith('rank-check/') for label in labels[:-1])

    @pytest.mark.slow
    def test_exhaustive_distinct_triples(self, run, small_cfg):
        for values in itertools.permutations(range(8), 3):
            assert run('median', values, small_cfg)['median'] == sorted(values)[1]


class TestOutliers:

    def test_distances_to_median(self, cfg4):
        result = run_session(ProtocolRequest('outliers', [1, 5, 9], {'server': 2}), cfg4, seed=0)
        assert result.outputs[2]['distances'] == [16, 0, 16]
        assert result.outputs[1]['distances'] is None
        assert result.outputs[3]['distances'] is None

    def test_only_server_receives_distance_shares(self, cfg4):
        transcript = run_session(ProtocolRequest('outliers', [1, 5, 9], {'server': 3}), cfg4, seed=0).transcript
        distance_reveals = [e for e in transcript.reveals if e.label.startswith('distance/')]
        assert len(distance_reveals) == 3
        assert all(e.recipients == [3] for e in distance_reveals)
        last_round = max(m.round for m in transcript.messages)
        assert {m.dst for m in transcript.messages if m.round == last_round} == {3}

    def test_tie_safe_distances(self, cfg4):
        result = run_session(
            ProtocolRequest('outliers', [2, 2, 8], {'server': 1, 'tie_safe': True}), cfg4, seed=0
        )
        assert result.outputs[1]['distances'] == _oracle('outliers', [2, 2, 8])['distances']

    def test_bad_server(self, cfg4):
        with pytest.raises(ConfigurationError):
            run_session(ProtocolRequest('outliers', [1, 5, 9], {'server': 4}), cfg4, seed=0)


class TestMaximin:

    def test_two_groups(self, run, small_cfg):
        out = run('maximin', [3, 7, 5, 6], small_cfg, groups=[2, 2])
        assert out == {'value': 5, 'group': 2}

    def test_single_group(self, run, small_cfg):
        assert run('maximin', [4, 2, 6], small_cfg) == {'value': 2, 'group': 1}

    def test_random_instances(self, run, small_cfg, rng):
        for trial in range(max(TRIALS, 3)):
            values = [int(x) for x in rng.integers(0, 8, size=6)]
            out = run('maximin', values, small_cfg, seed=trial, groups=[2, 2, 2])
            assert out == _oracle('maximin', values, groups=[2, 2, 2])

    def test_reveals_value_and_group_only(self, small_cfg):
        transcript = run_session(
            ProtocolRequest('maximin', [3, 7, 5, 6], {'groups': [2, 2]}), small_cfg, seed=0
        ).transcript
        assert transcript.reveal_labels() == ['maximin', 'group']

    def test_groups_must_cover_inputs(self, run, small_cfg):
        with pytest.raises(ConfigurationError):
            run('maximin', [3, 7, 5], small_cfg, groups=[2, 2])


# rank and outliers take options; outliers reveal only to the server, party 1
RANDOMIZED_OPTIONS = {
    'maximin': {'groups': [2, 2]},
    'rank': {'rank_t': 1},
    'outliers': {'server': 1},
}


@pytest.mark.parametrize("protocol, size", [
    ('compare', 2), ('sci', 2), ('scg', 2), ('max', 3), ('min', 3),
    ('auction', 3), ('median', 3), ('rank', 4), ('outliers', 4), ('maximin', 4),
])
def test_randomized_large_field(protocol, size, large_cfg):
    rng = np.random.default_rng(sum(map(ord, protocol)))
    trials = max(1, TRIALS // 2)
    for trial in range(trials):
        values = [int(x) for x in rng.choice(1 << 16, size=size, replace=False)]
        request = ProtocolRequest(protocol, values, dict(RANDOMIZED_OPTIONS.get(protocol, {})))
        output = run_session(request, large_cfg, seed=trial).outputs[1]
        expected = plaintext_result(request)
        assert {k: output[k] for k in expected} == expected


def test_registry_has_every_protocol():
    assert set(PROTOCOLS) == {
        'compare', 'sci', 'scg', 'equality', 'zero', 'max', 'min',
        'auction', 'median', 'rank', 'outliers', 'maximin',
    }
