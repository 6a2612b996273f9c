import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import LOG1, kernel
from pinlab.renewal_kernel import (
    KernelSpec,
    SlowlyVaryingSpec,
    TailToleranceError,
    build_kernel,
    doney_asymptote,
    raw_weights,
    renewal_mass,
    sample_renewal,
    stable_scale,
    tail_integral,
    tail_probability,
)


def test_raw_weights_direct_formula():
    w = raw_weights(0.5, SlowlyVaryingSpec(), 4)
    assert w[0] == 0.0
    assert w[1] == 1.0
    assert w[2] == pytest.approx(2 ** -1.5, rel=1e-15)
    assert w[2] == pytest.approx(0.35355, abs=1e-5)


def test_recurrent_normalization_alpha_half(k05):
    # zeta(3/2) = 2.6123753486854883
    assert k05.norm == pytest.approx(2.6123753486854883, rel=1e-9)
    assert k05.K[1] == pytest.approx(1 / 2.6123753486854883, rel=1e-9)
    assert k05.K[1] == pytest.approx(0.3828, abs=5e-5)
    assert k05.total_mass == 1.0 and k05.defect == 0.0


def test_ratio_independent_of_normalization():
    k = kernel(0.3)
    assert k.K[2] / k.K[1] == pytest.approx(2 ** -1.3, rel=1e-14)
    assert k.K[2] / k.K[1] == pytest.approx(0.4061, abs=1e-4)


def test_tail_probability_examples(k05):
    assert tail_probability(k05, 0) == 1.0
    assert tail_probability(k05, 1) == pytest.approx(1 - k05.K[1], rel=1e-12)
    assert tail_probability(k05, 1) == pytest.approx(0.6172, abs=1e-4)
    assert tail_probability(k05, k05.n_max) == pytest.approx(k05.defect + k05.tail_mass, rel=1e-12)
    with pytest.raises(ValueError):
        tail_probability(k05, k05.n_max + 1)


def test_survival_strictly_decreasing(k03):
    s = k03.survival
    assert np.all(np.diff(s) < 0)


def test_raw_kernel_with_mass_above_one_rejected():
    with pytest.raises(ValueError, match="mass"):
        build_kernel(KernelSpec(0.5, recurrent=False, n_max=1 << 14))


def test_transient_kernel_carries_defect():
    k = build_kernel(KernelSpec(0.5, SlowlyVaryingSpec(c=0.2), recurrent=False, n_max=1 << 16))
    assert k.total_mass == pytest.approx(0.2 * 2.6123753486854883, rel=1e-6)
    assert k.defect == pytest.approx(1 - k.total_mass, abs=1e-15)
    assert 0 <= k.defect < 1


def test_alpha_out_of_range_rejected():
    for a in (0.0, 1.0, 1.2, -0.1):
        with pytest.raises(ValueError, match="alpha"):
            KernelSpec(a)


def test_tail_tolerance_error_names_required_n_max():
    with pytest.raises(TailToleranceError) as info:
        build_kernel(KernelSpec(0.3, n_max=1024))
    n = info.value.required_n_max
    build_kernel(KernelSpec(0.3, n_max=n))


def test_tail_integral_closed_form_against_quad():
    from scipy import integrate

    for F in (0.0, 1e-3, 0.1):
        exact = integrate.quad(lambda x: x ** -1.3 * math.exp(-F * x), 100, np.inf, limit=200)[0]
        assert tail_integral(0.3, SlowlyVaryingSpec(), 100.0, F) == pytest.approx(exact, rel=1e-7)


def test_tail_bracket_contains_true_tail():
    # sum_{n > 1000} n^-1.5 computed from zeta(1.5) minus the head
    head = math.fsum(n ** -1.5 for n in range(1, 1001))
    true_tail = 2.6123753486854883 - head
    hi = tail_integral(0.5, SlowlyVaryingSpec(), 1000.0)
    lo = tail_integral(0.5, SlowlyVaryingSpec(), 1001.0)
    assert lo <= true_tail <= hi


def test_slow_variation():
    assert all(float(SlowlyVaryingSpec(c=3.0)(2 ** (k + 1)) / SlowlyVaryingSpec(c=3.0)(2 ** k)) == 1.0
               for k in range(21))
    for L in (LOG1, SlowlyVaryingSpec("log_power", 2.0, 2.0), SlowlyVaryingSpec("log_power", 1.0, 0.2)):
        dev = [float(L(2 ** (k + 1)) / L(2 ** k)) - 1 for k in range(4, 21)]
        assert all(b < a for a, b in zip(dev, dev[1:]))
        # log(2n + e) / log(n + e) is close to (k + 1) / k at n = 2^k
        assert dev[-1] == pytest.approx((21 / 20) ** L.p - 1, rel=1e-5)
        assert all(L(n) > 0 for n in (1, 10, 1000))
    mild = SlowlyVaryingSpec("log_power", 1.0, 0.2)
    assert float(mild(2 ** 21) / mild(2 ** 20)) < 1.01


def test_renewal_mass_first_terms():
    k = kernel(0.5)
    u = renewal_mass(k, 10)
    assert u[0] == 1.0
    assert u[1] == k.K[1]
    assert u[2] == pytest.approx(k.K[2] + k.K[1] ** 2, rel=1e-15)


def test_renewal_equation_holds(k03):
    u = renewal_mass(k03, 4096)
    K = k03.K
    for n in (1, 2, 17, 500, 4096):
        rhs = math.fsum(K[1: n + 1] * u[n - 1::-1][:n])
        assert abs(u[n] - rhs) <= 1e-12 * u[n]
    assert np.all((u >= 0) & (u <= 1))


def test_fft_and_direct_agree():
    k = kernel(0.4, 1 << 15)
    d = renewal_mass(k, method="direct")
    f = renewal_mass(k, method="fft")
    np.testing.assert_allclose(f, d, rtol=1e-11)


def test_renewal_mass_is_read_only():
    u = renewal_mass(kernel(0.5), 16)
    with pytest.raises(ValueError):
        u[0] = 2.0


def test_doney_asymptote_examples():
    assert doney_asymptote(0.5, SlowlyVaryingSpec(), 1) == pytest.approx(1 / (2 * math.pi), rel=1e-14)
    assert doney_asymptote(0.3, SlowlyVaryingSpec(), 1) == pytest.approx(0.07725, abs=1e-5)
    for a in (0.2, 0.5, 0.8):
        r = doney_asymptote(a, SlowlyVaryingSpec(), 400) / doney_asymptote(a, SlowlyVaryingSpec(), 100)
        assert r == pytest.approx(4 ** (a - 1), rel=1e-13)


@pytest.mark.parametrize("alpha", [0.3, 0.4])
def test_doney_convergence_trend(alpha):
    k = kernel(alpha, 1 << 17)
    u = renewal_mass(k, 100_000)
    dev = [abs(u[n] / doney_asymptote(alpha, k.effective_L, n) - 1) for n in (1000, 10_000, 100_000)]
    assert dev[-1] < 0.1
    assert dev[-1] < dev[0]


def test_stable_scale_examples():
    assert stable_scale(kernel(0.5), 100) == pytest.approx(1e4, rel=1e-12)
    assert stable_scale(kernel(0.3), 10) == pytest.approx(10 ** (1 / 0.3), rel=1e-12)
    assert stable_scale(kernel(0.3), 10) == pytest.approx(2154.43, abs=0.01)
    k = kernel(0.5, L=LOG1)
    for m in (3, 10, 1000):
        a = stable_scale(k, m)
        assert abs(a ** 0.5 - m * math.log(a + math.e)) / a ** 0.5 < 1e-10


def test_sample_renewal_examples():
    k = kernel(0.5)
    assert sample_renewal(k, 0, 3) == [0]
    a, b = sample_renewal(k, 5000, 42), sample_renewal(k, 5000, 42)
    assert a == b
    assert a[0] == 0 and all(x < y for x, y in zip(a, a[1:])) and a[-1] <= 5000


def test_sampler_matches_renewal_mass():
    k = kernel(0.5)
    n_seeds = 100_000
    N = 100
    hits = np.zeros(N + 1)
    for s in range(n_seeds):
        hits[sample_renewal(k, N, s)] += 1
    u = renewal_mass(k, N)
    for n in (1, 2, 10, 50, 100):
        se = math.sqrt(u[n] * (1 - u[n]) / n_seeds)
        assert abs(hits[n] / n_seeds - u[n]) < 3 * se, n


@settings(max_examples=25, deadline=None)
@given(alpha=st.floats(0.05, 0.95), p=st.floats(0.0, 2.0), c=st.floats(0.1, 5.0))
def test_kernel_invariants(alpha, p, c):
    L = SlowlyVaryingSpec("log_power", c, p)
    try:
        k = build_kernel(KernelSpec(alpha, L, n_max=1 << 12, tail_tolerance=1e-2))
    except TailToleranceError:
        return
    assert np.all(k.K >= 0)
    assert abs(k.K.sum() + k.tail_mass - 1) < 1e-12
    assert k.tail_width <= 1e-2
    u = renewal_mass(k, 256)
    assert np.all((u >= 0) & (u <= 1 + 1e-12))
