"""Partition function, mass exponents and singularity spectrum of a 1-D measure.

The volatility series is covered by non-overlapping boxes of size ``s``, the
box sums are normalised into a measure ``mu`` and the partition function
``chi_q(s) = sum mu**q`` is evaluated in log space. The mass exponent
``tau(q)`` is the slope of ``ln chi_q(s)`` against ``ln s`` and the spectrum
``f(alpha)`` follows by Legendre transform.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from mfpart.errors import DegenerateSeriesError, InsufficientScalingRange

CONCAVITY_SLACK = 1e-6


@dataclass(frozen=True)
class AnalysisConfig:
    q_min: float = -3.0
    q_max: float = 5.0
    q_step: float = 0.2
    s_min: int = 1
    s_max: int | None = None
    min_boxes: int = 4
    per_decade: int = 16
    min_scales: int = 5
    jump_threshold: float = 5.0

    def q_values(self) -> np.ndarray:
        return make_q_grid(self.q_min, self.q_max, self.q_step)


def make_q_grid(q_min: float = -3.0, q_max: float = 5.0, q_step: float = 0.2) -> np.ndarray:
    if q_step <= 0 or q_max <= q_min:
        raise ValueError("need q_min < q_max and q_step > 0")
    n = int(math.floor((q_max - q_min) / q_step + 1e-9)) + 1
    # rounding makes 0 and 1 land exactly on the grid
    return np.round(q_min + q_step * np.arange(n), 10)


# ---------------------------------------------------------------- grid

def divisors(n: int) -> list[int]:
    small, large = [], []
    d = 1
    while d * d <= n:
        if n % d == 0:
            small.append(d)
            if d * d != n:
                large.append(n // d)
        d += 1
    return small + large[::-1]


def _dense_divisors(n: int, upper: int, max_ratio: float = 2.0) -> bool:
    ds = [d for d in divisors(n) if d <= upper]
    return (len(ds) > 1 and max_ratio * ds[-1] >= upper
            and all(b <= max_ratio * a for a, b in zip(ds, ds[1:])))


def choose_length(length: int, min_boxes: int = 4) -> int:
    """Largest ``T <= length`` whose divisors up to ``T // min_boxes`` are 2-dense.

    Consecutive admissible box sizes then never differ by more than a factor
    of two, so log-spaced targets can be matched closely. Lengths that
    already qualify (powers of two, 240-minute trading days times a smooth
    day count) are kept whole.
    """
    if length < 2 * min_boxes:
        raise ValueError(f"series too short for analysis: {length}")
    floor = 1 << (length.bit_length() - 1)
    for t in range(length, floor, -1):
        if t % 2 == 0 and _dense_divisors(t, t // min_boxes):
            return t
    return floor


def make_box_sizes(T: int, s_min: int = 1, s_max: int | None = None,
                   per_decade: int = 16, min_boxes: int = 4) -> np.ndarray:
    """Divisors of ``T`` nearest (in log) to log-spaced targets, deduplicated."""
    if s_max is None:
        s_max = T // min_boxes
    cands = np.array([d for d in divisors(T) if s_min <= d <= s_max])
    if cands.size == 0:
        raise ValueError(f"no divisor of {T} in [{s_min}, {s_max}]")
    decades = math.log10(cands[-1] / cands[0])
    n_targets = max(2, int(math.ceil(decades * per_decade)) + 1)
    targets = np.logspace(math.log10(cands[0]), math.log10(cands[-1]), n_targets)
    lc = np.log(cands)
    picked = {int(cands[np.argmin(np.abs(lc - math.log(t)))]) for t in targets}
    return np.array(sorted(picked), dtype=np.int64)


@dataclass(frozen=True)
class AnalysisGrid:
    q_values: np.ndarray
    box_sizes: np.ndarray
    analyzed_length: int

    def __post_init__(self):
        q = np.asarray(self.q_values, dtype=float)
        s = np.asarray(self.box_sizes, dtype=np.int64)
        object.__setattr__(self, "q_values", q)
        object.__setattr__(self, "box_sizes", s)
        if q.size < 3 or np.any(np.diff(q) <= 0):
            raise ValueError("q_values must be strictly increasing with >= 3 entries")
        if not (np.any(q == 0.0) and np.any(q == 1.0)):
            raise ValueError("q_values must contain 0 and 1")
        if s.size == 0 or np.any(s <= 0) or np.any(np.diff(s) <= 0):
            raise ValueError("box_sizes must be positive and strictly increasing")
        bad = [int(x) for x in s if self.analyzed_length % int(x)]
        if bad:
            raise ValueError(f"box sizes {bad} do not divide T={self.analyzed_length}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.q_values.size, self.box_sizes.size


def make_grid(length: int, config: AnalysisConfig | None = None,
              q_values: np.ndarray | None = None) -> AnalysisGrid:
    config = config or AnalysisConfig()
    T = choose_length(length, config.min_boxes)
    sizes = make_box_sizes(T, config.s_min, config.s_max, config.per_decade, config.min_boxes)
    q = config.q_values() if q_values is None else np.asarray(q_values, dtype=float)
    return AnalysisGrid(q, sizes, T)


# ---------------------------------------------------------------- measure

@dataclass
class BoxMeasure:
    s: int
    u: np.ndarray
    mu: np.ndarray
    max_u: float
    total: float
    zero_box_count: int


def build_measure(v, s: int, T: int | None = None) -> BoxMeasure:
    v = np.asarray(v, dtype=float)
    if T is None:
        T = v.size - v.size % s
    if T % s or T > v.size or T == 0:
        raise ValueError(f"box size {s} must divide T={T} <= len(v)={v.size}")
    if np.any(v[:T] < 0):
        raise ValueError("measure values must be non-negative")
    u = v[:T].reshape(-1, s).sum(axis=1)
    total = float(u.sum())
    if not total > 0:
        raise DegenerateSeriesError("series sums to zero over the analyzed length")
    return BoxMeasure(s=s, u=u, mu=u / total, max_u=float(u.max()), total=total,
                      zero_box_count=int(np.count_nonzero(u == 0)))


_CHUNK_CELLS = 1 << 22


def _ln_chi_row(measure: BoxMeasure, q_values: np.ndarray) -> np.ndarray:
    """``ln chi_q`` for every q at one box size.

    Uses the max-normalised box sums ``u/max_u`` plus ``q ln(max_u/sum u)``;
    each q row is additionally shifted by its largest exponent (the smallest
    box for q < 0) before exponentiating.
    """
    u = measure.u
    nonzero = u[u > 0]
    log_ratio = np.log(nonzero / measure.max_u)
    shift = math.log(measure.max_u / measure.total)
    q = np.asarray(q_values, dtype=float)
    out = np.empty(q.size)
    # 0**0 taken as 0: only occupied boxes are counted at q = 0
    out[q == 0] = math.log(nonzero.size)
    undefined = (q < 0) & (measure.zero_box_count > 0)
    out[undefined] = np.nan
    todo = np.flatnonzero((q != 0) & ~undefined)
    lr_min = float(log_ratio.min())
    rows = max(1, _CHUNK_CELLS // nonzero.size)
    for start in range(0, todo.size, rows):
        idx = todo[start:start + rows]
        qq = q[idx]
        top = np.where(qq < 0, qq * lr_min, 0.0)
        expo = np.exp(qq[:, None] * log_ratio[None, :] - top[:, None])
        out[idx] = top + np.log(expo.sum(axis=1)) + qq * shift
    return out


def ln_partition(measure: BoxMeasure, q: float) -> float:
    """``ln chi_q`` from the max-normalised box sums; NaN when undefined."""
    return float(_ln_chi_row(measure, np.array([float(q)]))[0])


# ---------------------------------------------------------------- table

@dataclass
class ScalingRange:
    lo: int  # index into box_sizes, inclusive
    hi: int  # inclusive
    s_lo: int
    s_hi: int
    s_c: int | None = None
    fallback: bool = False

    @property
    def n_scales(self) -> int:
        return self.hi - self.lo + 1


@dataclass
class PartitionTable:
    grid: AnalysisGrid
    ln_chi: np.ndarray  # (n_q, n_s), NaN marks undefined cells
    zero_box_count: np.ndarray
    ranges: list = field(default_factory=list)  # per q: ScalingRange or None

    def row(self, q: float) -> np.ndarray:
        return self.ln_chi[self.q_index(q)]

    def q_index(self, q: float) -> int:
        idx = np.flatnonzero(np.isclose(self.grid.q_values, q, rtol=0, atol=1e-9))
        if idx.size == 0:
            raise KeyError(f"q={q} not on grid")
        return int(idx[0])


def partition_table(v, grid: AnalysisGrid) -> PartitionTable:
    v = np.asarray(v, dtype=float)
    T = grid.analyzed_length
    if v.size < T:
        raise ValueError(f"series length {v.size} shorter than analyzed length {T}")
    ln_chi = np.empty(grid.shape)
    zeros = np.empty(grid.box_sizes.size, dtype=np.int64)
    for j, s in enumerate(grid.box_sizes):
        m = build_measure(v, int(s), T)
        ln_chi[:, j] = _ln_chi_row(m, grid.q_values)
        zeros[j] = m.zero_box_count
    return PartitionTable(grid, ln_chi, zeros)


def _windows(defined: np.ndarray, breaks: set[int]) -> list[tuple[int, int]]:
    """Maximal runs of defined indices; a break at i separates i from i+1."""
    runs, start = [], None
    for i, ok in enumerate(defined):
        if not ok:
            if start is not None:
                runs.append((start, i - 1))
                start = None
            continue
        if start is None:
            start = i
        if i in breaks:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(defined) - 1))
    return runs


def select_scaling_range(table: PartitionTable, q: float, min_scales: int = 5,
                         jump_threshold: float = 5.0) -> ScalingRange:
    """Fitting range for one moment order.

    Positive orders use every box size. For negative orders, boxes of
    (near-)vanishing measure dominate small scales and produce a sudden jump
    in ``ln chi_q``; undefined cells and everything at or below the largest
    jump are cut off.
    """
    return _select_range(table.row(q), q, table.grid.box_sizes, min_scales, jump_threshold)


def _select_range(row: np.ndarray, q: float, sizes: np.ndarray, min_scales: int,
                  jump_threshold: float) -> ScalingRange:
    defined = ~np.isnan(row)
    if np.count_nonzero(defined) < min_scales:
        raise InsufficientScalingRange(f"q={q}: only {np.count_nonzero(defined)} defined scales")
    if q >= 0:
        lo, hi = 0, sizes.size - 1
        return ScalingRange(lo, hi, int(sizes[lo]), int(sizes[hi]))

    undefined = np.flatnonzero(~defined)
    last_undef = int(undefined[-1]) if undefined.size else -1
    tail = np.arange(last_undef + 1, sizes.size)
    s_c = int(sizes[last_undef]) if last_undef >= 0 else None

    jumps: list[int] = []  # index i flags a jump between scales i and i+1
    if tail.size >= 3:
        slopes = np.diff(row[tail]) / np.diff(np.log(sizes[tail].astype(float)))
        upper = np.abs(slopes[slopes.size // 2:])
        ref = max(float(np.median(upper)), 1e-12)
        jumps = [int(tail[k]) for k in np.flatnonzero(np.abs(slopes) > jump_threshold * ref)]
    if jumps:
        s_c = int(sizes[jumps[-1]])
        lo = jumps[-1] + 1
    else:
        lo = last_undef + 1
    hi = sizes.size - 1
    if hi - lo + 1 >= min_scales:
        return ScalingRange(lo, hi, int(sizes[lo]), int(sizes[hi]), s_c)

    runs = _windows(defined, set(jumps))
    lo, hi = max(runs, key=lambda r: (r[1] - r[0], r[1]))
    if hi - lo + 1 < min_scales:
        raise InsufficientScalingRange(f"q={q}: widest jump-free window has {hi - lo + 1} scales")
    return ScalingRange(lo, hi, int(sizes[lo]), int(sizes[hi]), s_c, fallback=True)


# ---------------------------------------------------------------- fits

@dataclass
class Spectrum:
    alpha: np.ndarray
    f_alpha: np.ndarray
    alpha_min: float
    alpha_max: float
    delta_alpha: float
    F: float
    non_concave: bool = False


@dataclass
class ScalingResult:
    q_values: np.ndarray
    tau: np.ndarray
    fit_stderr: np.ndarray
    fit_r2: np.ndarray
    ranges: list
    spectrum: Spectrum
    warnings: list = field(default_factory=list)

    @property
    def alpha(self) -> np.ndarray:
        return self.spectrum.alpha

    @property
    def f_alpha(self) -> np.ndarray:
        return self.spectrum.f_alpha

    @property
    def delta_alpha(self) -> float:
        return self.spectrum.delta_alpha

    @property
    def F(self) -> float:
        return self.spectrum.F

    def tau_at(self, q: float) -> float:
        idx = np.flatnonzero(np.isclose(self.q_values, q, rtol=0, atol=1e-9))
        return float(self.tau[idx[0]])


def ols_slope(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Unweighted least-squares slope with its standard error and R^2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    slope = float(dx @ dy) / sxx
    resid = dy - slope * dx
    sse = float(resid @ resid)
    sst = float(dy @ dy)
    stderr = math.sqrt(sse / (n - 2) / sxx) if n > 2 else float("nan")
    r2 = 1.0 - sse / sst if sst > 0 else 1.0
    return slope, stderr, r2


def legendre_spectrum(q_values, tau) -> Spectrum:
    """alpha = dtau/dq by finite differences, f = q*alpha - tau.

    Undefined tau entries split the grid; each run of three or more defined
    points is differentiated on its own.
    """
    q = np.asarray(q_values, dtype=float)
    tau = np.asarray(tau, dtype=float)
    alpha = np.full(q.size, np.nan)
    ok = ~np.isnan(tau)
    start = None
    for i in range(q.size + 1):
        if i < q.size and ok[i]:
            start = i if start is None else start
            continue
        if start is not None and i - start >= 3:
            alpha[start:i] = np.gradient(tau[start:i], q[start:i], edge_order=2)
        start = None
    f = q * alpha - tau
    if np.all(np.isnan(alpha)):
        nan = float("nan")
        return Spectrum(alpha, f, nan, nan, nan, nan)
    i_min = int(np.nanargmin(alpha))
    i_max = int(np.nanargmax(alpha))
    steps = np.diff(alpha)
    non_concave = bool(np.any(steps[~np.isnan(steps)] > CONCAVITY_SLACK))
    return Spectrum(alpha, f, float(alpha[i_min]), float(alpha[i_max]),
                    float(alpha[i_max] - alpha[i_min]), float((f[i_min] + f[i_max]) / 2),
                    non_concave)


def _ols_rows(x: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``ols_slope`` applied to every row of ``Y`` against a shared ``x``."""
    n = x.size
    dx = x - x.mean()
    dY = Y - Y.mean(axis=1, keepdims=True)
    sxx = float(dx @ dx)
    slope = np.einsum("ij,j->i", dY, dx) / sxx
    resid = dY - slope[:, None] * dx[None, :]
    sse = np.einsum("ij,ij->i", resid, resid)
    sst = np.einsum("ij,ij->i", dY, dY)
    stderr = np.sqrt(sse / (n - 2) / sxx) if n > 2 else np.full(slope.size, np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        r2 = np.where(sst > 0, 1.0 - sse / sst, 1.0)
    return slope, stderr, r2


def estimate_tau(table: PartitionTable, min_scales: int = 5,
                 jump_threshold: float = 5.0) -> ScalingResult:
    """OLS slope of ``ln chi_q(s)`` on ``ln s`` over each q's scaling range."""
    q = table.grid.q_values
    sizes = table.grid.box_sizes
    ls = np.log(sizes.astype(float))
    tau = np.full(q.size, np.nan)
    err = np.full(q.size, np.nan)
    r2 = np.full(q.size, np.nan)
    ranges: list = []
    warnings: list[str] = []
    groups: dict = {}
    for i, qi in enumerate(q):
        try:
            rng = _select_range(table.ln_chi[i], qi, sizes, min_scales, jump_threshold)
        except InsufficientScalingRange as exc:
            ranges.append(None)
            warnings.append(str(exc))
            continue
        ranges.append(rng)
        groups.setdefault((rng.lo, rng.hi), []).append(i)
    for (lo, hi), rows in groups.items():
        rows = np.array(rows)
        tau[rows], err[rows], r2[rows] = _ols_rows(ls[lo:hi + 1], table.ln_chi[rows, lo:hi + 1])
    table.ranges = ranges
    spectrum = legendre_spectrum(q, tau)
    if spectrum.non_concave:
        warnings.append("tau(q) not concave: alpha increases between adjacent q")
    return ScalingResult(q, tau, err, r2, ranges, spectrum, warnings)


def analyze(v, grid: AnalysisGrid | None = None,
            config: AnalysisConfig | None = None) -> tuple[PartitionTable, ScalingResult]:
    """Full single-series pipeline: grid, partition table, tau, spectrum."""
    config = config or AnalysisConfig()
    v = np.asarray(v, dtype=float)
    if grid is None:
        grid = make_grid(v.size, config)
    table = partition_table(v, grid)
    return table, estimate_tau(table, config.min_scales, config.jump_threshold)
