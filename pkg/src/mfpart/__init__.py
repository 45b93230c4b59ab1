"""Partition-function multifractal analysis of intraday volatility series."""

__version__ = "0.1.0"

from mfpart.mfcore import (
    AnalysisGrid,
    BoxMeasure,
    PartitionTable,
    ScalingResult,
    analyze,
    build_measure,
    estimate_tau,
    legendre_spectrum,
    ln_partition,
    make_grid,
    partition_table,
    select_scaling_range,
)
from mfpart.pmodel import PHistogram, PModelFit, build_histogram, fit_pmodel, pmodel_tau
from mfpart.stats import BootstrapReport, bootstrap_test, shuffle
from mfpart.synth import CascadeSpec, generate_cascade, generate_iid_lognormal

__all__ = [
    "AnalysisGrid",
    "BootstrapReport",
    "BoxMeasure",
    "CascadeSpec",
    "PHistogram",
    "PModelFit",
    "PartitionTable",
    "ScalingResult",
    "analyze",
    "bootstrap_test",
    "build_histogram",
    "build_measure",
    "estimate_tau",
    "fit_pmodel",
    "generate_cascade",
    "generate_iid_lognormal",
    "legendre_spectrum",
    "ln_partition",
    "make_grid",
    "partition_table",
    "pmodel_tau",
    "select_scaling_range",
    "shuffle",
]
