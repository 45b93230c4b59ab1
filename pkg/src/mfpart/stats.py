"""Shuffle-based bootstrap tests for the significance of multifractality.

Each replicate destroys temporal ordering by a seeded permutation and reruns
the full analysis, scaling-range selection included. Replicate ``k`` draws
its permutation from a generator keyed on ``(master_seed, k)`` only, so the
report does not depend on how replicates are scheduled across workers.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from mfpart.errors import MFPartError, UnreliableTestError
from mfpart.mfcore import AnalysisConfig, AnalysisGrid, analyze, make_grid

log = logging.getLogger(__name__)

MAX_FAILED_FRACTION = 0.10


def replicate_seed(master_seed: int, k: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(k),))


def shuffle(v, seed) -> np.ndarray:
    """Uniform random permutation of ``v`` (Fisher-Yates on a Philox stream)."""
    v = np.asarray(v)
    if v.size < 2:
        return v.copy()
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed))
    out = v.copy()
    np.random.Generator(np.random.Philox(seed)).shuffle(out)
    return out


@dataclass
class BootstrapReport:
    n: int
    n_requested: int
    delta_alpha_real: float
    F_real: float
    delta_alpha_rnd: np.ndarray  # NaN for failed replicates
    F_rnd: np.ndarray
    failed: list
    p1: float
    p2: float
    level: float
    significant_1: bool
    significant_2: bool
    master_seed: int


def p_values(delta_alpha_real: float, F_real: float, delta_alpha_rnd, F_rnd) -> tuple[float, float]:
    """Fractions of replicates at least as extreme as the real series.

    Ties count against significance.
    """
    da = np.asarray(delta_alpha_rnd, dtype=float)
    fr = np.asarray(F_rnd, dtype=float)
    ok = ~(np.isnan(da) | np.isnan(fr))
    n = int(np.count_nonzero(ok))
    p1 = np.count_nonzero(delta_alpha_real <= da[ok]) / n
    p2 = np.count_nonzero(F_real >= fr[ok]) / n
    return p1, p2


# worker-side state, installed once per process
_STATE: dict = {}


def _init_worker(v, grid, config, master_seed):
    _STATE.update(v=v, grid=grid, config=config, master_seed=master_seed)


def _replicate(k: int) -> tuple[float, float]:
    st = _STATE
    sv = shuffle(st["v"], replicate_seed(st["master_seed"], k))
    try:
        _, res = analyze(sv, st["grid"], st["config"])
    except (MFPartError, ValueError, FloatingPointError):
        return float("nan"), float("nan")
    return res.delta_alpha, res.F


def _run_chunk(ks: list[int]) -> list[tuple[float, float]]:
    return [_replicate(k) for k in ks]


def resolve_jobs(jobs: int | None) -> int:
    if jobs is None:
        jobs = int(os.environ.get("MFPART_JOBS", "1"))
    return max(1, int(jobs))


def run_replicates(v, grid: AnalysisGrid, config: AnalysisConfig, master_seed: int,
                   n: int, jobs: int | None = 1) -> np.ndarray:
    """(n, 2) array of replicate (delta_alpha, F), row k from replicate k."""
    jobs = resolve_jobs(jobs)
    ks = list(range(n))
    if jobs == 1:
        _init_worker(v, grid, config, master_seed)
        rows = _run_chunk(ks)
    else:
        chunks = [ks[i::jobs] for i in range(jobs)]
        rows = [None] * n
        with ProcessPoolExecutor(jobs, initializer=_init_worker,
                                 initargs=(v, grid, config, master_seed)) as pool:
            for chunk, res in zip(chunks, pool.map(_run_chunk, chunks)):
                for k, r in zip(chunk, res):
                    rows[k] = r
    return np.array(rows, dtype=float).reshape(n, 2)


def bootstrap_test(v, grid: AnalysisGrid | None = None, n: int = 1000, level: float = 0.01,
                   master_seed: int = 0, config: AnalysisConfig | None = None,
                   jobs: int | None = 1) -> BootstrapReport:
    if n < 1:
        raise ValueError("bootstrap needs n >= 1 replicates")
    config = config or AnalysisConfig()
    v = np.asarray(v, dtype=float)
    if grid is None:
        grid = make_grid(v.size, config)
    v = v[:grid.analyzed_length]
    _, real = analyze(v, grid, config)
    if np.isnan(real.delta_alpha):
        raise MFPartError("analysis of the unshuffled series produced no spectrum")

    stats = run_replicates(v, grid, config, master_seed, n, jobs)
    da, fr = stats[:, 0], stats[:, 1]
    failed = [int(k) for k in np.flatnonzero(np.isnan(da) | np.isnan(fr))]
    if failed:
        log.warning("%d of %d bootstrap replicates failed and are excluded", len(failed), n)
    if len(failed) > MAX_FAILED_FRACTION * n:
        raise UnreliableTestError(f"{len(failed)} of {n} replicates failed")
    p1, p2 = p_values(real.delta_alpha, real.F, da, fr)
    return BootstrapReport(
        n=n - len(failed), n_requested=n,
        delta_alpha_real=real.delta_alpha, F_real=real.F,
        delta_alpha_rnd=da, F_rnd=fr, failed=failed,
        p1=p1, p2=p2, level=level,
        significant_1=p1 <= level, significant_2=p2 <= level,
        master_seed=int(master_seed),
    )
