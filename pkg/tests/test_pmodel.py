import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfpart.mfcore import analyze, make_q_grid
from mfpart.pmodel import build_histogram, fit_pmodel, golden_section, pmodel_alpha, pmodel_tau
from mfpart.synth import CascadeSpec, generate_cascade

Q = make_q_grid()


@pytest.mark.parametrize("q", [-3.0, -0.4, 0.0, 1.0, 2.6, 5.0])
def test_uniform_cascade(q):
    assert pmodel_tau(0.5, q) == pytest.approx(q - 1, abs=1e-12)


def test_reference_values():
    assert pmodel_tau(0.4, 2.0) == pytest.approx(-math.log(0.16 + 0.36) / math.log(2), abs=1e-12)
    assert pmodel_tau(0.4, 2.0) == pytest.approx(0.94342, abs=1e-5)
    assert pmodel_tau(0.4, -3.0) == pytest.approx(-math.log(15.625 + 1 / 0.216) / math.log(2), abs=1e-12)
    assert pmodel_tau(0.4, -3.0) == pytest.approx(-4.34018, abs=1e-5)


def test_large_moments_do_not_overflow():
    t = pmodel_tau(0.01, -400.0)
    assert np.isfinite(t)
    assert t == pytest.approx(400 * math.log2(0.01), rel=1e-12)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.2, 1.5])
def test_domain(p):
    with pytest.raises(ValueError):
        pmodel_tau(p, 2.0)


@given(p=st.floats(0.01, 0.99))
@settings(max_examples=40)
def test_shape(p):
    q = np.linspace(-5, 7, 241)
    tau = pmodel_tau(p, q)
    assert pmodel_tau(p, 0.0) == pytest.approx(-1.0, abs=1e-12)
    assert pmodel_tau(p, 1.0) == pytest.approx(0.0, abs=1e-12)
    assert np.all(np.diff(tau, 2) <= 1e-12)  # concave
    assert np.all(np.diff(tau) >= 0)
    assert pmodel_tau(p, 3.3) == pytest.approx(pmodel_tau(1 - p, 3.3), abs=1e-12)


def test_alpha_is_derivative():
    h = 1e-5
    for q in (-3.0, 0.0, 2.5, 5.0):
        fd = (pmodel_tau(0.3, q + h) - pmodel_tau(0.3, q - h)) / (2 * h)
        assert pmodel_alpha(0.3, q) == pytest.approx(fd, abs=1e-8)


def test_golden_section_quadratic():
    assert golden_section(lambda x: (x - 0.123) ** 2, 0.0, 1.0, 1e-10) == pytest.approx(0.123, abs=1e-9)


@pytest.mark.parametrize("p", [0.1, 0.25, 0.3, 0.4, 0.45, 0.5])
def test_fit_round_trip_and_mirror(p):
    for src in (p, 1 - p):
        fit = fit_pmodel(Q, pmodel_tau(src, Q))
        assert fit.p == pytest.approx(min(p, 1 - p), abs=1e-6)
        assert fit.rss <= fit.grid_scan_rss
        assert 0 < fit.p <= 0.5


def test_fit_from_cascade_pipeline():
    _, res = analyze(generate_cascade(CascadeSpec(0.4, 14)))
    assert 0.39 <= fit_pmodel(res.q_values, res.tau).p <= 0.41


def test_fit_ignores_undefined_points():
    tau = pmodel_tau(0.3, Q)
    tau[:5] = np.nan
    fit = fit_pmodel(Q, tau)
    assert fit.p == pytest.approx(0.3, abs=1e-6)
    assert fit.per_q_residuals.size == Q.size - 5


def test_fit_needs_points():
    tau = np.full(Q.size, np.nan)
    tau[:3] = 0.0
    with pytest.raises(ValueError):
        fit_pmodel(Q, tau)


def test_boundary_warning(caplog):
    # steeper than any p-model: the optimum runs into p -> 0
    fit = fit_pmodel(Q, 40 * (Q - 1))
    assert fit.at_boundary
    assert "boundary" in caplog.text


def test_histogram_singleton():
    h = build_histogram([0.4])
    assert h.g.tolist() == [1.0]
    assert h.mean_p == pytest.approx(0.4)
    assert h.std_p == 0.0


def test_histogram_two_values():
    h = build_histogram([0.39, 0.41])
    assert h.mean_p == pytest.approx(0.40, abs=1e-12)
    assert h.std_p == pytest.approx(0.01, abs=1e-12)


@given(st.lists(st.floats(0.01, 0.5), min_size=1, max_size=200),
       st.sampled_from([0.005, 0.01, 0.05]))
@settings(max_examples=60)
def test_histogram_normalised_and_covering(ps, width):
    h = build_histogram(ps, width)
    assert h.g.sum() == pytest.approx(1.0, abs=1e-12)
    assert h.bin_edges[0] <= min(ps) and h.bin_edges[-1] >= max(ps)
    assert np.all(h.g >= 0)
