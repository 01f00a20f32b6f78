"""Tests for Shamir sharing, reconstruction and joint randomness."""

import itertools

import numpy as np
import pytest
from scipy import stats

from conftest import TRIALS
from mpcmp.errors import ConfigurationError, ReconstructionError
from mpcmp.field import FieldConfig
from mpcmp.runtime import Session, SessionHooks
from mpcmp.sharing import (
    ProtocolConfig,
    joint_random_nonzero,
    joint_random_secret,
    public_constant,
    reconstruct,
    share_secret,
    share_vector,
    stack,
    unstack,
)


class TestProtocolConfig:

    def test_honest_majority_required(self, f257):
        with pytest.raises(ConfigurationError, match=r"N=2 must satisfy N >= 2T\+1 = 3"):
            ProtocolConfig(n=2, t=1, field=f257, bits=3)

    def test_field_must_hold_encodings(self, f11):
        with pytest.raises(ConfigurationError, match="2\\^\\(L\\+2\\)"):
            ProtocolConfig(n=3, t=1, field=f11, bits=2)

    def test_alphas_distinct_and_nonzero(self, f257):
        with pytest.raises(ConfigurationError, match="distinct"):
            ProtocolConfig(n=3, t=1, field=f257, bits=3, alphas=[1, 2, 2])
        with pytest.raises(ConfigurationError, match="nonzero"):
            ProtocolConfig(n=3, t=1, field=f257, bits=3, alphas=[0, 1, 2])

    def test_record_round_trip(self, large_cfg):
        restored = ProtocolConfig.from_record(large_cfg.to_record())
        assert restored.to_record() == large_cfg.to_record()


class TestShareAndReconstruct:

    def test_any_t_plus_one_reconstruct(self, rng, large_cfg):
        secret = large_cfg.field.element(987654321)
        shares = share_secret(secret, large_cfg, rng)
        for subset in itertools.combinations(shares, large_cfg.t + 1):
            assert reconstruct(list(subset), large_cfg) == secret

    def test_too_few_shares(self, rng, large_cfg):
        shares = share_secret(large_cfg.field.element(5), large_cfg, rng)
        with pytest.raises(ReconstructionError, match="needs 3 shares"):
            reconstruct(shares[:2], large_cfg)

    def test_duplicate_parties(self, rng, small_cfg):
        shares = share_secret(small_cfg.field.element(5), small_cfg, rng)
        with pytest.raises(ReconstructionError, match="Duplicate"):
            reconstruct([shares[0], shares[0]], small_cfg)

    def test_explicit_degree_for_products(self, rng, small_cfg):
        a = share_secret(small_cfg.field.element(6), small_cfg, rng)
        b = share_secret(small_cfg.field.element(7), small_cfg, rng)
        products = [type(x)(x.party, x.value * y.value, 2) for x, y in zip(a, b)]
        assert reconstruct(products, small_cfg, degree=2) == 42

    def test_linearity(self, rng, small_cfg):
        f = small_cfg.field
        a = share_secret(f.element(20), small_cfg, rng)
        b = share_secret(f.element(30), small_cfg, rng)
        combined = [type(x)(x.party, x.value * 3 + y.value, 1) for x, y in zip(a, b)]
        assert reconstruct(combined, small_cfg) == 90

    def test_public_constant_is_degree_zero(self, small_cfg):
        shares = public_constant(9, small_cfg)
        assert all(s.degree == 0 and s.value == 9 for s in shares)
        assert reconstruct(shares[:1], small_cfg) == 9

    def test_vector_stack_round_trip(self, rng, small_cfg):
        f = small_cfg.field
        vector = share_vector([f.element(v) for v in (1, 2, 3)], small_cfg, rng)
        columns = unstack(vector, small_cfg.t)
        assert [reconstruct(c, small_cfg) for c in columns] == [1, 2, 3]
        assert [sv.values for sv in stack(columns)] == [sv.values for sv in vector]


class TestPerfectSecrecy:

    def test_empirical_share_is_uniform(self, rng, small_cfg):
        counts = np.zeros(small_cfg.q, dtype=int)
        for _ in range(small_cfg.q * 40):
            counts[share_secret(small_cfg.field.element(0), small_cfg, rng)[1].value.value] += 1
        assert stats.chisquare(counts).pvalue > 1e-4


class TestJointRandomness:

    def test_joint_secret_is_sum_of_contributions(self, session):
        sharing = joint_random_secret(session, contributions=[4, 5, 6])
        assert reconstruct(sharing, session.cfg) == 15
        assert session.counter.total(steps={'jrand'}) == 1

    def test_nonzero_mask(self, session):
        sharing = joint_random_nonzero(session)
        assert reconstruct(sharing, session.cfg) != 0

    def test_forced_zero_mask_regenerates_once(self, large_cfg):
        s = Session(large_cfg, seed=3, hooks=SessionHooks(forced_zero_masks=1))
        sharing = joint_random_nonzero(s)
        s.close()
        assert reconstruct(sharing, large_cfg) != 0
        assert s.counter.total(steps={'jrand'}) == 2
        checks = [e for e in s.transcript.reveals if e.label == 'mask-nonzero']
        assert [e.value for e in checks] == ['0', '1']


class TestJointRandomnessDistribution:

    @pytest.fixture
    def q11_session(self):
        s = Session(ProtocolConfig(n=3, t=1, field=FieldConfig(11), bits=1), seed=11)
        yield s
        s.close()

    @staticmethod
    def _secret_counts(session, runs):
        counts = np.zeros(11, dtype=int)
        for _ in range(runs):
            counts[reconstruct(joint_random_secret(session), session.cfg).value] += 1
        return counts

    def test_joint_secret_is_uniform(self, q11_session):
        counts = self._secret_counts(q11_session, 200 * TRIALS)
        assert stats.chisquare(counts).pvalue > 1e-4

    @pytest.mark.slow
    def test_joint_secret_is_uniform_full(self, q11_session):
        counts = self._secret_counts(q11_session, 10_000)
        assert stats.chisquare(counts).pvalue > 1e-4

    def test_nonzero_mask_never_zero(self, q11_session):
        runs = 100 * TRIALS
        for _ in range(runs):
            assert reconstruct(joint_random_nonzero(q11_session), q11_session.cfg) != 0
        # about one candidate in 11 is zero and gets redrawn
        assert q11_session.counter.total(steps={'jrand'}) >= runs
