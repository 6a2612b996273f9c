from functools import lru_cache

import pytest

from pinlab.disorder_env import DisorderSpec, sample_environment
from pinlab.renewal_kernel import KernelSpec, SlowlyVaryingSpec, build_kernel

LOG1 = SlowlyVaryingSpec("log_power", 1.0, 1.0)


@lru_cache(maxsize=None)
def kernel(alpha, n_max=1 << 14, L=SlowlyVaryingSpec(), recurrent=True, tail_tolerance=1e-6):
    return build_kernel(KernelSpec(alpha, L, recurrent, n_max, tail_tolerance))


@pytest.fixture(scope="session")
def k03():
    return kernel(0.3, 1 << 17)


@pytest.fixture(scope="session")
def k05():
    return kernel(0.5, 1 << 17)


@pytest.fixture
def env():
    return sample_environment(DisorderSpec("gaussian", 11), 64, 0)
