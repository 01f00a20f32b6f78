import os

import hypothesis
import numpy as np
import pytest

from mpcmp.config import MERSENNE_61
from mpcmp.field import FieldConfig
from mpcmp.runtime import ProtocolRequest, Session, run_session
from mpcmp.sharing import ProtocolConfig

hypothesis.settings.register_profile("fast", max_examples=25, deadline=None)
hypothesis.settings.register_profile("thorough", max_examples=300, deadline=None)
hypothesis.settings.register_profile("debugger", report_multiple_bugs=False, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "fast"))

# randomized oracle trials; 1000 reproduces the full acceptance sizes
TRIALS = int(os.environ.get("MPCMP_TRIALS", "5"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def f11():
    return FieldConfig(11)


@pytest.fixture
def f13():
    return FieldConfig(13)


@pytest.fixture
def f257():
    return FieldConfig(257)


@pytest.fixture
def f61():
    return FieldConfig(MERSENNE_61)


@pytest.fixture
def small_cfg(f257):
    """L=3, q=257, N=3, T=1: the exhaustive-check configuration."""
    return ProtocolConfig(n=3, t=1, field=f257, bits=3)


@pytest.fixture
def large_cfg(f61):
    """L=16, q=2^61-1, N=5, T=2: the randomized-check configuration."""
    return ProtocolConfig(n=5, t=2, field=f61, bits=16)


@pytest.fixture
def session(small_cfg):
    s = Session(small_cfg, seed=7)
    yield s
    s.close()


@pytest.fixture
def run():
    """run(protocol, inputs, cfg, seed=0, **options) -> party 1's output record."""

    def _run(protocol, inputs, cfg, seed=0, party=1, **options):
        result = run_session(ProtocolRequest(protocol, list(inputs), options), cfg, seed=seed)
        return result.outputs[party]

    return _run
