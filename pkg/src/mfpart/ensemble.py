"""Quenched and annealed ensemble averages of partition functions.

Members are treated as realisations of one process. At every (q, s) cell the
quenched table averages ``ln chi`` across members and the annealed table
takes ``ln`` of the member-averaged ``chi``; both are then fitted exactly
like a single-series table, with ``chi ~ s**tau`` as the sign convention.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from mfpart.errors import IncompatibleMembersError
from mfpart.mfcore import (
    AnalysisConfig,
    AnalysisGrid,
    PartitionTable,
    ScalingResult,
    choose_length,
    estimate_tau,
    make_grid,
    partition_table,
)


@dataclass
class EnsembleTable:
    member_ids: list
    grid: AnalysisGrid
    ln_chi_per_member: np.ndarray  # (members, n_q, n_s), NaN where undefined
    quenched_ln_chi: np.ndarray
    annealed_ln_chi: np.ndarray
    member_count: np.ndarray
    quorum: float


@dataclass
class EnsembleResult:
    table: EnsembleTable
    quenched: ScalingResult
    annealed: ScalingResult


def _common(values_per_member: list[np.ndarray], decimals: int = 10) -> np.ndarray:
    keys = [set(np.round(np.asarray(v, dtype=float), decimals).tolist()) for v in values_per_member]
    return np.array(sorted(set.intersection(*keys)))


def _positions(values: np.ndarray, wanted: np.ndarray, decimals: int = 10) -> np.ndarray:
    lookup = {x: i for i, x in enumerate(np.round(values, decimals).tolist())}
    return np.array([lookup[x] for x in wanted.tolist()], dtype=np.int64)


def log_mean_exp(stack: np.ndarray, axis: int = 0) -> np.ndarray:
    """``ln mean exp(x)`` along ``axis`` ignoring NaN entries."""
    with np.errstate(invalid="ignore"):
        top = np.nanmax(np.where(np.isnan(stack), -np.inf, stack), axis=axis)
    top = np.where(np.isfinite(top), top, 0.0)
    count = np.sum(~np.isnan(stack), axis=axis)
    terms = np.where(np.isnan(stack), 0.0, np.exp(np.nan_to_num(stack) - np.expand_dims(top, axis)))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = top + np.log(terms.sum(axis=axis)) - np.log(count)
    return np.where(count > 0, out, np.nan)


def align_members(member_ids, tables: list[PartitionTable], quorum: float = 0.8) -> EnsembleTable:
    """Restrict member tables to their common (q, s) grid and average them.

    Members are reduced in sorted id order so the result does not depend on
    the order they are supplied in.
    """
    if len(tables) == 0:
        raise IncompatibleMembersError("ensemble needs at least one member")
    if len(member_ids) != len(tables):
        raise ValueError("member_ids and tables differ in length")
    order = sorted(range(len(tables)), key=lambda i: str(member_ids[i]))
    ids = [member_ids[i] for i in order]
    tables = [tables[i] for i in order]

    q = _common([t.grid.q_values for t in tables])
    s = _common([t.grid.box_sizes for t in tables]).astype(np.int64)
    T = math.gcd(*[int(t.grid.analyzed_length) for t in tables])
    try:
        grid = AnalysisGrid(q, s, T)
    except ValueError as exc:
        raise IncompatibleMembersError(f"members share no usable grid: {exc}") from None

    stack = np.stack([
        t.ln_chi[np.ix_(_positions(t.grid.q_values, q), _positions(t.grid.box_sizes.astype(float), s))]
        for t in tables
    ])
    count = np.sum(~np.isnan(stack), axis=0)
    with np.errstate(invalid="ignore"):
        quenched = np.nansum(stack, axis=0) / count
    annealed = log_mean_exp(stack, axis=0)
    short = count < quorum * len(tables)
    quenched[short | (count == 0)] = np.nan
    annealed[short | (count == 0)] = np.nan
    return EnsembleTable(ids, grid, stack, quenched, annealed, count, quorum)


def ensemble_from_series(series: dict, config: AnalysisConfig | None = None,
                         quorum: float = 0.8) -> EnsembleTable:
    """Truncate every member to a common analysis length and tabulate on one grid."""
    config = config or AnalysisConfig()
    if not series:
        raise IncompatibleMembersError("ensemble needs at least one member")
    shortest = min(len(v) for v in series.values())
    grid = make_grid(choose_length(shortest, config.min_boxes), config)
    ids = list(series)
    tables = [partition_table(np.asarray(series[i], dtype=float)[:grid.analyzed_length], grid)
              for i in ids]
    return align_members(ids, tables, quorum)


def _fit(grid: AnalysisGrid, ln_chi: np.ndarray, config: AnalysisConfig) -> ScalingResult:
    table = PartitionTable(grid, ln_chi.copy(), np.zeros(grid.box_sizes.size, dtype=np.int64))
    return estimate_tau(table, config.min_scales, config.jump_threshold)


def quenched_tau(table: EnsembleTable, config: AnalysisConfig | None = None) -> ScalingResult:
    return _fit(table.grid, table.quenched_ln_chi, config or AnalysisConfig())


def annealed_tau(table: EnsembleTable, config: AnalysisConfig | None = None) -> ScalingResult:
    return _fit(table.grid, table.annealed_ln_chi, config or AnalysisConfig())


def ensemble_analysis(table: EnsembleTable, config: AnalysisConfig | None = None) -> EnsembleResult:
    config = config or AnalysisConfig()
    return EnsembleResult(table, quenched_tau(table, config), annealed_tau(table, config))
