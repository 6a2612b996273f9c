import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import LOG1, kernel
from pinlab.disorder_env import (
    FAMILIES,
    DisorderSpec,
    beta2,
    environment_matrix,
    gap_supremum,
    log_mgf,
    moment_gap,
    sample_environment,
    solve_gap,
)
from pinlab.intersection import intersection_data


@pytest.mark.parametrize("family", FAMILIES)
def test_environment_moments(family):
    N = 1_000_000
    w = sample_environment(DisorderSpec(family, 5), N, 0).omega[1:]
    assert abs(w.mean()) < 3 / math.sqrt(N)
    # the mean of w^2 has variance (E w^4 - 1) / N
    kurt = {"gaussian": 3.0, "rademacher": 1.0, "uniform": 1.8}[family]
    assert abs(np.mean(w * w) - 1) < 3 * math.sqrt((kurt - 1) / N) + 1e-12


def test_environment_determinism_and_prefixes():
    spec = DisorderSpec("gaussian", 3)
    a = sample_environment(spec, 100, 7)
    b = sample_environment(spec, 100, 7)
    np.testing.assert_array_equal(a.omega, b.omega)
    longer = sample_environment(spec, 500, 7)
    np.testing.assert_array_equal(longer.prefix(100).omega, a.omega)
    assert a.omega[0] == 0.0 and a.N == 100
    other = sample_environment(spec, 100, 8)
    assert not np.array_equal(other.omega, a.omega)
    assert not np.array_equal(sample_environment(DisorderSpec("gaussian", 4), 100, 7).omega, a.omega)
    with pytest.raises(ValueError):
        a.omega[1] = 0.0


def test_environment_matrix_rows_match_single_draws():
    spec = DisorderSpec("uniform", 1)
    M = environment_matrix(spec, 20, [3, 1, 2])
    for row, i in zip(M, [3, 1, 2]):
        np.testing.assert_array_equal(row, sample_environment(spec, 20, i).omega)


def test_rademacher_and_uniform_support():
    r = sample_environment(DisorderSpec("rademacher"), 1000, 0).omega[1:]
    assert set(np.unique(r)) == {-1.0, 1.0}
    u = sample_environment(DisorderSpec("uniform"), 1000, 0).omega[1:]
    assert np.all(np.abs(u) <= math.sqrt(3))


def test_log_mgf_examples():
    for fam in FAMILIES:
        assert log_mgf(fam, 0.0) == 0.0
    assert log_mgf("gaussian", 1.0) == 0.5
    assert log_mgf("rademacher", 1.0) == pytest.approx(math.log(math.cosh(1.0)), rel=1e-15)
    assert log_mgf("rademacher", 1.0) == pytest.approx(0.43378, abs=1e-5)
    s = math.sqrt(3) * 0.8
    assert log_mgf("uniform", 0.8) == pytest.approx(math.log(math.sinh(s) / s), rel=1e-14)
    assert log_mgf("uniform", 1e-4) == pytest.approx(1e-8 / 2, rel=1e-6)
    assert math.isfinite(log_mgf("rademacher", 800.0)) and math.isfinite(log_mgf("uniform", 800.0))


@pytest.mark.parametrize("family", FAMILIES)
def test_log_mgf_against_monte_carlo(family):
    w = sample_environment(DisorderSpec(family, 9), 400_000, 0).omega[1:]
    for b in (0.3, 0.7):
        e = np.exp(b * w)
        se = e.std() / math.sqrt(len(w))
        assert abs(e.mean() - math.exp(log_mgf(family, b))) < 3 * se


@settings(max_examples=60, deadline=None)
@given(beta=st.floats(1e-3, 10.0), family=st.sampled_from(FAMILIES))
def test_moment_gap_positive(beta, family):
    assert moment_gap(family, beta) > 0
    assert moment_gap(family, 0.0) == 0.0
    assert moment_gap(family, beta) < gap_supremum(family)


def test_gaussian_gap_is_beta_squared():
    b = np.linspace(0, 3, 31)
    np.testing.assert_allclose(moment_gap("gaussian", b), b ** 2, rtol=1e-14)


def test_solve_gap_edges():
    assert solve_gap("gaussian", 0.0) == 0.0
    assert solve_gap("rademacher", math.log(2)) == math.inf
    assert solve_gap("gaussian", 4.0) == pytest.approx(2.0, rel=1e-14)
    b = solve_gap("uniform", 0.3)
    assert abs(moment_gap("uniform", b) - 0.3) < 1e-13


def test_beta2_recurrent_intersection_is_zero():
    assert beta2(DisorderSpec(), kernel(0.7, 1 << 14)) == 0.0
    assert beta2(DisorderSpec(), kernel(0.5, 1 << 14)) == 0.0


def test_beta2_gaussian_identity(k03):
    p = intersection_data(k03).p_return
    b2 = beta2(DisorderSpec("gaussian"), k03)
    assert b2 == pytest.approx(math.sqrt(-math.log(p)), rel=1e-14)
    assert abs(moment_gap("gaussian", b2) + math.log(p)) < 1e-10
    # frozen value for alpha = 0.3, n_max = 2^17
    assert b2 == pytest.approx(1.27826, abs=1e-4)


def test_beta2_rademacher_unreachable(k03):
    assert intersection_data(k03).p_return < 0.5
    assert beta2(DisorderSpec("rademacher"), k03) == math.inf


def test_beta2_uniform_identity(k03):
    p = intersection_data(k03).p_return
    b2 = beta2(DisorderSpec("uniform"), k03)
    assert 0 < b2 < math.inf
    assert abs(moment_gap("uniform", b2) + math.log(p)) < 1e-10


def test_beta2_log_power_half_positive():
    b2 = beta2(DisorderSpec(), kernel(0.5, 100_000, L=LOG1))
    assert 0 < b2 < math.inf


def test_beta2_monotone_in_return_probability():
    pairs = []
    for a in (0.25, 0.3, 0.35, 0.4):
        k = kernel(a, 1 << 17)
        pairs.append((intersection_data(k).p_return, beta2(DisorderSpec(), k)))
    pairs.sort()
    assert all(b1 > b2 for (_, b1), (_, b2) in zip(pairs, pairs[1:]))


def test_beta2_rejects_defective_kernel():
    from pinlab.renewal_kernel import KernelSpec, SlowlyVaryingSpec, build_kernel

    k = build_kernel(KernelSpec(0.3, SlowlyVaryingSpec(c=0.2), recurrent=False, n_max=1 << 17))
    with pytest.raises(ValueError):
        beta2(DisorderSpec(), k)
