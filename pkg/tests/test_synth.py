from math import comb, log

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfpart.mfcore import analyze, build_measure, ln_partition
from mfpart.pmodel import pmodel_tau
from mfpart.synth import (
    CascadeSpec,
    generate_cascade,
    generate_iid_lognormal,
    generate_monofractal,
)


def closed_form_ln_chi(p, depth, k, q):
    """Exact ln chi_q at box size 2**k: C(m, j) boxes carry p**j (1-p)**(m-j)."""
    m = depth - k
    terms = [comb(m, j) * (p ** j * (1 - p) ** (m - j)) ** q for j in range(m + 1)]
    return log(sum(terms))


def test_uniform_split():
    v = generate_cascade(CascadeSpec(0.5, 3))
    assert np.array_equal(v, np.full(8, 1 / 8))


def test_two_level_product():
    v = generate_cascade(CascadeSpec(0.4, 2))
    assert v == pytest.approx([0.16, 0.24, 0.24, 0.36], abs=1e-15)


@given(p=st.floats(0.05, 0.95), depth=st.integers(1, 12),
       mode=st.sampled_from(["deterministic", "randomized"]), seed=st.integers(0, 2**32))
@settings(max_examples=50, deadline=None)
def test_mass_conservation(p, depth, mode, seed):
    v = generate_cascade(CascadeSpec(p, depth, mode, seed))
    assert v.size == 2 ** depth
    assert np.all(v >= 0)
    assert abs(v.sum() - 1) <= 1e-12 * 2 ** depth


def test_randomized_keeps_multiset():
    det = generate_cascade(CascadeSpec(0.3, 10))
    rnd = generate_cascade(CascadeSpec(0.3, 10, "randomized", 5))
    assert not np.array_equal(det, rnd)
    assert np.allclose(np.sort(det), np.sort(rnd), rtol=1e-12, atol=0)


@pytest.mark.parametrize("bad", [dict(p=0.0, depth=3), dict(p=1.0, depth=3),
                                 dict(p=0.4, depth=0), dict(p=0.4, depth=27),
                                 dict(p=0.4, depth=3, mode="other")])
def test_spec_validation(bad):
    with pytest.raises(ValueError):
        CascadeSpec(**bad)


@pytest.mark.parametrize("p", [0.25, 0.4])
@pytest.mark.parametrize("depth", [8, 12])
def test_partition_function_matches_closed_form(p, depth):
    v = generate_cascade(CascadeSpec(p, depth))
    for k in range(0, depth - 1):
        m = build_measure(v, 2 ** k)
        for q in (-3.0, -1.4, 0.6, 2.0, 5.0):
            assert ln_partition(m, q) == pytest.approx(closed_form_ln_chi(p, depth, k, q), abs=1e-9)


def test_randomized_cascade_tau_depth16():
    v = generate_cascade(CascadeSpec(0.35, 16, "randomized", 11))
    _, res = analyze(v)
    assert np.max(np.abs(res.tau - pmodel_tau(0.35, res.q_values))) <= 0.03


def test_lognormal_degenerate_and_deterministic():
    assert np.array_equal(generate_iid_lognormal(10, 0.5, 0.0, 1), np.full(10, np.exp(0.5)))
    a = generate_iid_lognormal(100, 0, 1, seed=9)
    assert np.array_equal(a, generate_iid_lognormal(100, 0, 1, seed=9))
    with pytest.raises(ValueError):
        generate_iid_lognormal(0)
    with pytest.raises(ValueError):
        generate_iid_lognormal(5, sigma_log=-1)


def test_lognormal_log_mean():
    n, mu, sigma = 10 ** 5, -1.5, 0.8
    x = generate_iid_lognormal(n, mu, sigma, seed=3)
    assert abs(np.log(x).mean() - mu) <= 4 * sigma / np.sqrt(n)


def test_monofractal_is_uniform():
    assert np.array_equal(generate_monofractal(16, 2.0), np.full(16, 2.0))
