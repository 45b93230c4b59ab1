"""Acceptance gate: one PASS/FAIL line per criterion, at the stated tolerances."""
import math
import time

import numpy as np
import pytest

from mfpart import cli, formats
from mfpart.ensemble import ensemble_analysis, ensemble_from_series
from mfpart.mfcore import analyze, build_measure, ln_partition, make_q_grid
from mfpart.pmodel import fit_pmodel, pmodel_tau
from mfpart.stats import bootstrap_test
from mfpart.synth import CascadeSpec, generate_cascade, generate_iid_lognormal

Q = make_q_grid()


@pytest.mark.parametrize("p", [0.4, 0.3])
def test_1_cascade_tau_oracle(record, p):
    t0 = time.perf_counter()
    _, res = analyze(generate_cascade(CascadeSpec(p, 14)))
    elapsed = time.perf_counter() - t0
    err = np.max(np.abs(res.tau - pmodel_tau(p, res.q_values)))
    ok = res.q_values.size == 41 and err <= 0.02 and elapsed <= 10.0
    record(f"1 cascade tau oracle p={p}", ok, f"max|dtau|={err:.2e}, {elapsed:.2f}s")
    assert ok


def test_2_exact_identities(record):
    rng = np.random.default_rng(2)
    worst_tau1 = worst_chi1 = worst_tau0 = 0.0
    for _ in range(100):
        v = rng.uniform(0.01, 10.0, 2 ** 12) * rng.lognormal(0, 1, 2 ** 12)
        table, res = analyze(v)
        worst_tau1 = max(worst_tau1, abs(res.tau_at(1.0)))
        worst_chi1 = max(worst_chi1, np.max(np.abs(np.expm1(table.row(1.0)))))
        worst_tau0 = max(worst_tau0, abs(res.tau_at(0.0) + 1))
    ok = worst_tau1 <= 1e-10 and worst_chi1 <= 1e-10 and worst_tau0 <= 1e-6
    record("2 exact identities", ok,
           f"|tau(1)|={worst_tau1:.1e}, |chi_1-1|={worst_chi1:.1e}, |tau(0)+1|={worst_tau0:.1e}")
    assert ok


def test_3_log_form_matches_direct_sum(record):
    rng = np.random.default_rng(3)
    q_values = np.linspace(-3, 5, 81)
    worst = 0.0
    for _ in range(1000):
        w = rng.uniform(0, 1, 64)
        mu = 1e-3 + (1 - 64e-3) * w / w.sum()
        m = build_measure(mu * rng.uniform(0.1, 1e3), 1)
        for q in q_values:
            direct = math.log(math.fsum(mu ** q))
            worst = max(worst, abs(ln_partition(m, q) - direct))
    ok = worst <= 1e-10
    record("3 log form == direct sum", ok, f"max|d ln chi|={worst:.1e} over 1000 measures x 81 q")
    assert ok


def test_4_pmodel_round_trip(record):
    worst = 0.0
    for p in (0.1, 0.25, 0.3, 0.4, 0.45, 0.5):
        for given in (p, 1 - p):
            worst = max(worst, abs(fit_pmodel(Q, pmodel_tau(given, Q)).p - p))
    _, res = analyze(generate_cascade(CascadeSpec(0.4, 14)))
    p_hat = fit_pmodel(res.q_values, res.tau).p
    ok = worst <= 1e-6 and abs(p_hat - 0.40) <= 0.01
    record("4 p-model round trip", ok, f"exact max|dp|={worst:.1e}, pipeline p={p_hat:.4f}")
    assert ok


def test_5a_bootstrap_power(record):
    v = generate_cascade(CascadeSpec(0.4, 16, "randomized", 5))
    t0 = time.perf_counter()
    rep = bootstrap_test(v, n=200, master_seed=1, jobs=4)
    elapsed = time.perf_counter() - t0
    ok = rep.p1 == 0 and rep.p2 == 0 and elapsed <= 300
    record("5a bootstrap power", ok, f"p1={rep.p1}, p2={rep.p2}, n={rep.n}, {elapsed:.1f}s on 4 workers")
    assert ok


def test_5b_bootstrap_type_one_control(record):
    above = 0
    for seed in range(100):
        v = generate_iid_lognormal(2048, 0.0, 1.0, seed=10_000 + seed)
        rep = bootstrap_test(v, n=200, master_seed=seed)
        above += rep.p1 > 0.01
    ok = above >= 95
    record("5b bootstrap type-I control", ok, f"p1 > 0.01 in {above}/100 seeds")
    assert ok


def test_6_ensemble_ordering(record):
    ps = 0.35 + 0.10 * (np.arange(50) + 0.5) / 50
    series = {f"m{k:02d}": generate_cascade(CascadeSpec(float(p), 14, "randomized", k))
              for k, p in enumerate(ps)}
    res = ensemble_analysis(ensemble_from_series(series))
    median = float(np.median([analyze(v)[1].delta_alpha for v in series.values()]))
    da_q, da_a = res.quenched.delta_alpha, res.annealed.delta_alpha
    ok = da_a >= da_q + 1e-3 and min(da_q, da_a) > median - 0.02
    record("6 ensemble ordering", ok, f"da_A={da_a:.4f}, da_Q={da_q:.4f}, median member={median:.4f}")
    assert ok


def test_7_jump_handling(record):
    v = generate_cascade(CascadeSpec(0.4, 16, "randomized", 7))
    v[64 * 300: 64 * 301] = 0.0
    table, res = analyze(v)
    sizes = table.grid.box_sizes
    row = table.row(-3.0)
    rng_ = res.ranges[int(np.flatnonzero(res.q_values == -3.0)[0])]
    undefined_small = bool(np.all(np.isnan(row[sizes <= 64])))
    ok = (undefined_small and rng_ is not None and rng_.s_c is not None and rng_.s_c >= 64
          and rng_.s_lo > rng_.s_c and np.isfinite(res.tau_at(-3.0)))
    record("7 jump handling", ok, f"undefined s<=64: {undefined_small}, s_c={rng_.s_c}, "
           f"fit s in [{rng_.s_lo}, {rng_.s_hi}], tau(-3)={res.tau_at(-3.0):.4f}")
    assert ok


def test_8_determinism_and_scale(record, tmp_path):
    vol = tmp_path / "c.bin"
    formats.write_volatility(generate_cascade(CascadeSpec(0.4, 12, "randomized", 8)), vol)
    indir = tmp_path / "in"
    indir.mkdir()
    for k in range(3):
        formats.write_volatility(generate_cascade(CascadeSpec(0.38 + 0.02 * k, 11, "randomized", k)),
                                 indir / f"s{k}.bin")
    outputs = []
    for jobs in (1, 4, 8):
        boot = tmp_path / f"boot{jobs}.json"
        assert cli.main(["bootstrap", "--vol", str(vol), "--n", "40", "--jobs", str(jobs),
                         "--out", str(boot)]) == 0
        out = tmp_path / f"batch{jobs}"
        assert cli.main(["batch", "--in", str(indir), "--out", str(out), "--bootstrap", "10",
                         "--jobs", str(jobs)]) == 0
        outputs.append([boot.read_bytes()] + [p.read_bytes() for p in sorted(out.iterdir())])
    identical = outputs[0] == outputs[1] == outputs[2]

    big = generate_cascade(CascadeSpec(0.4, 20, "randomized", 9))
    t0 = time.perf_counter()
    _, res = analyze(big)
    elapsed = time.perf_counter() - t0
    ok = identical and res.q_values.size == 41 and elapsed <= 30
    record("8 determinism and scale", ok,
           f"jobs 1/4/8 byte-identical: {identical}, 2^20 analyze {elapsed:.2f}s")
    assert ok
