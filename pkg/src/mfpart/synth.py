"""Synthetic series with known multifractal structure.

Binomial p-model cascades are the main oracle: their partition function at
dyadic box sizes is available in closed form, so every estimator in the
package can be checked against exact values.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_DEPTH = 26


@dataclass(frozen=True)
class CascadeSpec:
    p: float
    depth: int
    mode: str = "deterministic"  # or "randomized"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        if not 1 <= self.depth <= MAX_DEPTH:
            raise ValueError(f"depth must lie in [1, {MAX_DEPTH}], got {self.depth}")
        if self.mode not in ("deterministic", "randomized"):
            raise ValueError(f"unknown cascade mode {self.mode!r}")


def generate_cascade(spec: CascadeSpec) -> np.ndarray:
    """Conservative binomial cascade of length ``2**depth`` summing to one.

    In deterministic mode the left half of every interval receives the
    fraction ``p``; in randomized mode a fair coin per node decides which
    half gets ``p``.
    """
    p = spec.p
    rng = np.random.default_rng(spec.seed) if spec.mode == "randomized" else None
    mass = np.ones(1)
    for _ in range(spec.depth):
        left = np.full(mass.size, p)
        if rng is not None:
            flip = rng.random(mass.size) < 0.5
            left[flip] = 1.0 - p
        nxt = np.empty(2 * mass.size)
        nxt[0::2] = mass * left
        nxt[1::2] = mass * (1.0 - left)
        mass = nxt
    return mass


def generate_iid_lognormal(length: int, mu_log: float = 0.0, sigma_log: float = 1.0,
                           seed: int = 0) -> np.ndarray:
    if length < 1:
        raise ValueError("length must be >= 1")
    if sigma_log < 0:
        raise ValueError("sigma_log must be >= 0")
    rng = np.random.default_rng(seed)
    return np.exp(mu_log + sigma_log * rng.standard_normal(length))


def generate_monofractal(length: int, level: float = 1.0) -> np.ndarray:
    """Uniform measure; its mass exponent is exactly ``q - 1``."""
    return np.full(length, float(level))
