"""On-disk formats: volatility CSV / MFVOL binary columns and JSON reports.

JSON is the canonical interchange format. Undefined numbers are written as
``null``; floats use Python's shortest round-trip repr so reruns are
byte-identical.
"""
from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np

from mfpart import __version__
from mfpart.errors import FormatError
from mfpart.mfcore import AnalysisGrid, PartitionTable, ScalingRange, ScalingResult

VOL_MAGIC = b"MFVOL001"


# ---------------------------------------------------------------- volatility

def write_volatility_binary(values, path) -> None:
    v = np.ascontiguousarray(values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(VOL_MAGIC)
        fh.write(struct.pack("<Q", v.size))
        fh.write(v.tobytes())


def write_volatility_csv(values, path, stamps=None) -> None:
    """Rows of ``bin_start_timestamp,v``; synthetic series use the bin index as stamp."""
    values = np.asarray(values, dtype=float)
    if stamps is None:
        stamps = range(values.size)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("bin_start_timestamp,v\n")
        for t, x in zip(stamps, values):
            stamp = t.isoformat() if hasattr(t, "isoformat") else str(t)
            fh.write(f"{stamp},{float(x)!r}\n")


def write_volatility(values, path, stamps=None) -> None:
    if str(path).endswith(".csv"):
        write_volatility_csv(values, path, stamps)
    else:
        write_volatility_binary(values, path)


def read_volatility(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:8] == VOL_MAGIC:
        if len(data) < 16:
            raise FormatError(f"{path}: truncated MFVOL header")
        (n,) = struct.unpack("<Q", data[8:16])
        if len(data) != 16 + 8 * n:
            raise FormatError(f"{path}: expected {n} values, file holds {(len(data) - 16) / 8}")
        return np.frombuffer(data, dtype="<f8", count=n, offset=16).astype(float)
    try:
        lines = data.decode("utf-8").splitlines()
    except UnicodeDecodeError:
        raise FormatError(f"{path}: neither MFVOL binary nor UTF-8 CSV") from None
    if not lines or [h.strip() for h in lines[0].split(",")] != ["bin_start_timestamp", "v"]:
        raise FormatError(f"{path}: missing 'bin_start_timestamp,v' header")
    try:
        values = np.array([float(ln.rsplit(",", 1)[1]) for ln in lines[1:] if ln.strip()])
    except (IndexError, ValueError) as exc:
        raise FormatError(f"{path}: bad volatility row ({exc})") from None
    if values.size == 0 or np.any(~np.isfinite(values)) or np.any(values < 0):
        raise FormatError(f"{path}: volatility values must be finite and non-negative")
    return values


def is_volatility_file(path) -> bool:
    with open(path, "rb") as fh:
        head = fh.read(32)
    return head.startswith(VOL_MAGIC) or head.startswith(b"bin_start_timestamp")


# ---------------------------------------------------------------- JSON

def clean(x):
    """Convert numpy values to JSON-ready Python objects, NaN -> None."""
    if isinstance(x, dict):
        return {k: clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return clean(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return None if math.isnan(x) or math.isinf(x) else x
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def dumps(doc: dict) -> str:
    return json.dumps(clean(doc), indent=1, allow_nan=False) + "\n"


def write_json(doc: dict, path) -> None:
    Path(path).write_text(dumps(doc), encoding="utf-8")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable JSON document ({exc})") from None


def _floats(xs) -> np.ndarray:
    return np.array([np.nan if x is None else x for x in xs], dtype=float)


def header(kind: str, config: dict) -> dict:
    return {"kind": kind, "mfpart_version": __version__, "config": config}


def range_doc(r: ScalingRange | None):
    if r is None:
        return None
    return {"s_lo": r.s_lo, "s_hi": r.s_hi, "s_c": r.s_c, "n_scales": r.n_scales,
            "fallback": r.fallback}


def spectrum_doc(res: ScalingResult) -> dict:
    sp = res.spectrum
    return {
        "tau": res.tau, "fit_stderr": res.fit_stderr, "fit_r2": res.fit_r2,
        "alpha": sp.alpha, "f_alpha": sp.f_alpha,
        "alpha_min": sp.alpha_min, "alpha_max": sp.alpha_max,
        "delta_alpha": sp.delta_alpha, "F": sp.F, "non_concave": sp.non_concave,
        "scaling_range": [range_doc(r) for r in res.ranges],
        "warnings": list(res.warnings),
    }


def grid_doc(grid: AnalysisGrid) -> dict:
    return {"q": grid.q_values, "box_sizes": grid.box_sizes,
            "analyzed_length": grid.analyzed_length}


def analysis_doc(table: PartitionTable, res: ScalingResult, config: dict,
                 instrument_id: str = "unknown", input_length: int | None = None) -> dict:
    doc = header("analysis", config)
    doc.update({
        "instrument_id": instrument_id,
        "input_length": input_length,
        "grid": grid_doc(table.grid),
        "ln_chi": table.ln_chi,
        "zero_box_count": table.zero_box_count,
    })
    doc.update(spectrum_doc(res))
    return doc


def _require(doc: dict, kind: str, path="document") -> None:
    if doc.get("kind") != kind:
        raise FormatError(f"{path}: expected a {kind!r} document, got {doc.get('kind')!r}")


def table_from_doc(doc: dict) -> PartitionTable:
    _require(doc, "analysis")
    g = doc["grid"]
    grid = AnalysisGrid(np.array(g["q"], dtype=float), np.array(g["box_sizes"], dtype=np.int64),
                        int(g["analyzed_length"]))
    ln_chi = np.array([_floats(row) for row in doc["ln_chi"]])
    if ln_chi.shape != grid.shape:
        raise FormatError(f"ln_chi shape {ln_chi.shape} does not match grid {grid.shape}")
    return PartitionTable(grid, ln_chi, np.array(doc.get("zero_box_count", []), dtype=np.int64))


def tau_from_doc(doc: dict) -> tuple[np.ndarray, np.ndarray]:
    _require(doc, "analysis")
    return np.array(doc["grid"]["q"], dtype=float), _floats(doc["tau"])
