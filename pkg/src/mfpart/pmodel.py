"""Binomial p-model mass exponents, least-squares fits of p, and g(p) histograms."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

LN2 = math.log(2.0)
P_LOWER = 1e-6
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def pmodel_tau(p, q):
    """Mass exponent ``-log2(p**q + (1-p)**q)`` of the binomial p-model.

    Evaluated as a log-add of ``q ln p`` and ``q ln(1-p)`` so large ``|q|``
    cannot overflow. Broadcasts over ``p`` and ``q``.
    """
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("p must lie in (0, 1)")
    q = np.asarray(q, dtype=float)
    out = -np.logaddexp(q * np.log(p), q * np.log1p(-p)) / LN2
    return out if out.ndim else float(out)


def pmodel_alpha(p, q):
    """Analytic ``d tau / d q`` of the p-model."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    a, b = q * np.log(p), q * np.log1p(-p)
    m = np.maximum(a, b)
    wa, wb = np.exp(a - m), np.exp(b - m)
    return -(wa * np.log2(p) + wb * np.log2(1 - p)) / (wa + wb)


@dataclass
class PModelFit:
    p: float
    rss: float
    per_q_residuals: np.ndarray
    q_values: np.ndarray
    grid_scan_rss: float
    at_boundary: bool = False


def _rss(p: float, q: np.ndarray, tau: np.ndarray) -> float:
    r = tau - pmodel_tau(p, q)
    return float(r @ r)


def golden_section(fun, lo: float, hi: float, tol: float = 1e-8) -> float:
    """Minimiser of a unimodal ``fun`` on ``[lo, hi]`` to within ``tol``."""
    c = hi - INV_PHI * (hi - lo)
    d = lo + INV_PHI * (hi - lo)
    fc, fd = fun(c), fun(d)
    while hi - lo > tol:
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - INV_PHI * (hi - lo)
            fc = fun(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + INV_PHI * (hi - lo)
            fd = fun(d)
    # endpoints are candidates too: the canonical optimum may sit at p = 0.5
    best = min((lo, hi, (lo + hi) / 2), key=fun)
    return best


def fit_pmodel(q_values, tau, tol: float = 1e-8, scan_points: int = 50) -> PModelFit:
    """Least-squares p on the canonical branch ``0 < p <= 0.5``.

    NaN entries of ``tau`` (failed scaling ranges) are ignored. A coarse scan
    brackets the minimum before golden-section refinement.
    """
    q = np.asarray(q_values, dtype=float)
    tau = np.asarray(tau, dtype=float)
    ok = ~np.isnan(tau)
    if np.count_nonzero(ok) < 5:
        raise ValueError("need at least 5 valid tau(q) points to fit the p-model")
    q, tau = q[ok], tau[ok]

    def obj(p):
        return _rss(p, q, tau)

    scan = np.linspace(P_LOWER, 0.5, scan_points)
    scan_rss = np.array([obj(p) for p in scan])
    k = int(np.argmin(scan_rss))
    lo, hi = scan[max(k - 1, 0)], scan[min(k + 1, scan.size - 1)]
    p = golden_section(obj, lo, hi, tol)
    rss = obj(p)
    resid = tau - pmodel_tau(p, q)
    at_boundary = p - P_LOWER < 10 * tol
    if at_boundary:
        log.warning("p-model fit ran into the p -> 0 boundary (rss=%.4g)", rss)
    return PModelFit(p=float(p), rss=rss, per_q_residuals=resid, q_values=q,
                     grid_scan_rss=float(scan_rss[k]), at_boundary=at_boundary)


@dataclass
class PHistogram:
    bin_edges: np.ndarray
    g: np.ndarray
    mean_p: float
    std_p: float
    count: int


def build_histogram(p_values, bin_width: float = 0.01) -> PHistogram:
    """Relative occurrence frequency g(p); ``std_p`` uses denominator n."""
    p = np.asarray(p_values, dtype=float)
    if p.size == 0:
        raise ValueError("need at least one p value")
    lo = math.floor(p.min() / bin_width + 1e-9) * bin_width
    n_bins = max(1, int(math.floor((p.max() - lo) / bin_width + 1e-9)) + 1)
    edges = lo + bin_width * np.arange(n_bins + 1)
    edges[0] = min(edges[0], p.min())
    edges[-1] = max(edges[-1], p.max())
    counts, _ = np.histogram(p, bins=edges)
    return PHistogram(edges, counts / p.size, float(p.mean()), float(p.std()), int(p.size))
