"""Tick parsing, session filtering, event-time returns and minutely volatility.

Tick files hold one record per line, ``instrument,timestamp,price``, with an
ISO-8601 timestamp at one-second resolution in exchange-local time. Only the
continuous double auction is kept; each minute bin ``(t - 1min, t]`` of the
session receives the sum of absolute log returns that fall in it.
"""
from __future__ import annotations

import csv
import datetime as dt
import gzip
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from mfpart.errors import EmptyInputError, FormatError

log = logging.getLogger(__name__)

BIN_SECONDS = 60


def _hhmm(s: str) -> int:
    h, m = s.split(":")
    return int(h) * 3600 + int(m) * 60


@dataclass(frozen=True)
class SessionCalendar:
    """Continuous-trading windows as ``[start, end)`` seconds after midnight."""

    morning: tuple = (_hhmm("09:30"), _hhmm("11:30"))
    afternoon: tuple = (_hhmm("13:00"), _hhmm("15:00"))
    trading_days: frozenset | None = None

    def __post_init__(self):
        (a0, a1), (b0, b1) = self.morning, self.afternoon
        if not (0 <= a0 < a1 <= b0 < b1 <= 86400):
            raise ValueError("session windows must be ordered and non-overlapping")
        if any(x % BIN_SECONDS for x in (a0, a1, b0, b1)):
            raise ValueError("session windows must start and end on whole minutes")

    @property
    def windows(self) -> tuple:
        return (self.morning, self.afternoon)

    @property
    def bins_per_day(self) -> int:
        return sum((end - start) // BIN_SECONDS for start, end in self.windows)

    @classmethod
    def builtin(cls, name: str) -> "SessionCalendar":
        if name != "cn-a-share":
            raise ValueError(f"unknown builtin calendar {name!r}")
        return cls()

    @classmethod
    def from_spec(cls, spec: str) -> "SessionCalendar":
        """``builtin:<name>`` or a JSON file with ``morning``, ``afternoon``, ``trading_days``."""
        if spec.startswith("builtin:"):
            return cls.builtin(spec.split(":", 1)[1])
        doc = json.loads(Path(spec).read_text())
        days = doc.get("trading_days")
        return cls(
            morning=tuple(_hhmm(x) for x in doc.get("morning", ["09:30", "11:30"])),
            afternoon=tuple(_hhmm(x) for x in doc.get("afternoon", ["13:00", "15:00"])),
            trading_days=frozenset(dt.date.fromisoformat(d) for d in days) if days else None,
        )

    def bin_starts(self, day: dt.date) -> list:
        midnight = dt.datetime.combine(day, dt.time())
        return [midnight + dt.timedelta(seconds=t)
                for start, end in self.windows for t in range(start, end, BIN_SECONDS)]


@dataclass(frozen=True)
class TickSchema:
    timestamp: str = "timestamp"
    price: str = "price"
    instrument: str = "instrument"


@dataclass
class TickSeries:
    instrument_id: str
    timestamps: np.ndarray  # datetime64[s]
    prices: np.ndarray
    dropped: int = 0

    def __len__(self) -> int:
        return self.prices.size


@dataclass
class Returns:
    timestamps: np.ndarray
    values: np.ndarray


@dataclass
class VolatilitySeries:
    instrument_id: str
    values: np.ndarray
    days: list = field(default_factory=list)
    day_boundaries: list = field(default_factory=list)
    partial_days: list = field(default_factory=list)
    bin_width: int = BIN_SECONDS


def _open_text(raw) -> io.TextIOBase:
    if isinstance(raw, (str, Path)):
        raw = Path(raw).read_bytes()
    if isinstance(raw, (bytes, bytearray)):
        data = bytes(raw)
    else:
        data = raw.read()
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    try:
        return io.StringIO(data.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise FormatError(f"tick stream is not UTF-8: {exc}") from None


def _parse_time(text: str) -> np.datetime64:
    ts = dt.datetime.fromisoformat(text.strip())
    return np.datetime64(ts.replace(tzinfo=None, microsecond=0), "s")


def read_tick_records(raw, schema: TickSchema = TickSchema(),
                      default_id: str = "unknown") -> dict:
    """Parse a tick CSV into one TickSeries per instrument."""
    reader = csv.reader(_open_text(raw))
    header = next(reader, None)
    if header is None:
        raise EmptyInputError("tick stream is empty")
    header = [h.strip() for h in header]
    if schema.timestamp not in header or schema.price not in header:
        raise FormatError(f"header {header} lacks {schema.timestamp!r} or {schema.price!r}")
    i_ts, i_px = header.index(schema.timestamp), header.index(schema.price)
    i_id = header.index(schema.instrument) if schema.instrument in header else None

    rows: dict = {}
    dropped: dict = {}
    for rec in reader:
        if not rec or all(not x.strip() for x in rec):
            continue
        key = rec[i_id].strip() if i_id is not None and i_id < len(rec) else default_id
        try:
            price = float(rec[i_px])
            stamp = _parse_time(rec[i_ts])
        except (ValueError, IndexError):
            dropped[key] = dropped.get(key, 0) + 1
            continue
        if not (price > 0 and math.isfinite(price)):
            dropped[key] = dropped.get(key, 0) + 1
            continue
        rows.setdefault(key, []).append((stamp, price))

    if not rows:
        raise EmptyInputError(f"no valid tick rows ({sum(dropped.values())} dropped)")
    out = {}
    for key in sorted(rows):
        stamps = np.array([r[0] for r in rows[key]], dtype="datetime64[s]")
        prices = np.array([r[1] for r in rows[key]], dtype=float)
        order = np.argsort(stamps, kind="stable")
        out[key] = TickSeries(key, stamps[order], prices[order], dropped.get(key, 0))
    for key, n in dropped.items():
        if key not in out:
            log.warning("instrument %s: all %d rows dropped", key, n)
    return out


def parse_ticks(raw, schema: TickSchema = TickSchema(), instrument: str | None = None,
                default_id: str = "unknown") -> TickSeries:
    """Parse a single-instrument tick stream (or pick ``instrument`` from a mixed one).

    Rows with unparsable or non-positive prices are dropped and counted;
    records are sorted by time with ties kept in input order.
    """
    series = read_tick_records(raw, schema, default_id)
    if instrument is not None:
        if instrument not in series:
            raise EmptyInputError(f"no valid rows for instrument {instrument!r}")
        return series[instrument]
    if len(series) > 1:
        raise FormatError(f"stream holds {len(series)} instruments; choose one")
    return next(iter(series.values()))


def _seconds_of_day(stamps: np.ndarray) -> np.ndarray:
    return (stamps - stamps.astype("datetime64[D]")).astype(np.int64)


def filter_sessions(ticks: TickSeries, calendar: SessionCalendar) -> TickSeries:
    sod = _seconds_of_day(ticks.timestamps)
    keep = np.zeros(sod.size, dtype=bool)
    for start, end in calendar.windows:
        keep |= (sod >= start) & (sod < end)
    if calendar.trading_days is not None:
        days = np.array(sorted(calendar.trading_days), dtype="datetime64[D]")
        keep &= np.isin(ticks.timestamps.astype("datetime64[D]"), days)
    if not keep.any():
        raise EmptyInputError(f"{ticks.instrument_id}: no ticks inside the trading sessions")
    return TickSeries(ticks.instrument_id, ticks.timestamps[keep], ticks.prices[keep], ticks.dropped)


def compute_returns(ticks: TickSeries) -> Returns:
    """Event-time log returns between consecutive ticks of the same day.

    The first tick of each day opens no return, so overnight gaps never
    enter the volatility.
    """
    lp = np.log(ticks.prices)
    day = ticks.timestamps.astype("datetime64[D]")
    same_day = day[1:] == day[:-1]
    if not same_day.any():
        raise EmptyInputError(f"{ticks.instrument_id}: fewer than two ticks on every day")
    r = np.diff(lp)
    return Returns(ticks.timestamps[1:][same_day], r[same_day])


def aggregate_volatility(returns: Returns, calendar: SessionCalendar, days=None,
                         instrument_id: str = "unknown") -> VolatilitySeries:
    """Sum ``|r|`` into left-open, right-closed one-minute session bins.

    ``days`` defaults to the calendar's trading days, else the days seen in
    ``returns``. Empty bins hold 0. A return stamped exactly at a session
    open is folded into that session's first bin.
    """
    if days is None:
        if calendar.trading_days is not None:
            days = sorted(calendar.trading_days)
        else:
            days = sorted({d.item() for d in np.unique(returns.timestamps.astype("datetime64[D]"))})
    days = list(days)
    per_day = calendar.bins_per_day
    day_pos = {np.datetime64(d, "D"): i for i, d in enumerate(days)}
    values = np.zeros(len(days) * per_day)

    stamps = returns.timestamps
    sod = _seconds_of_day(stamps)
    rday = stamps.astype("datetime64[D]")
    idx = np.full(stamps.size, -1, dtype=np.int64)
    seen = np.zeros((len(days), len(calendar.windows)), dtype=bool)
    offset = 0
    for w, (start, end) in enumerate(calendar.windows):
        inside = (sod >= start) & (sod < end)
        k = np.maximum(-(-(sod - start) // BIN_SECONDS) - 1, 0)
        idx = np.where(inside, offset + k, idx)
        offset += (end - start) // BIN_SECONDS
        for d in np.unique(rday[inside]):
            if d in day_pos:
                seen[day_pos[d], w] = True
    pos = np.array([day_pos.get(d, -1) for d in rday], dtype=np.int64)
    ok = (idx >= 0) & (pos >= 0)
    if np.count_nonzero(~ok):
        log.warning("%d returns fall outside the session bins and are ignored", np.count_nonzero(~ok))
    np.add.at(values, pos[ok] * per_day + idx[ok], np.abs(returns.values[ok]))

    partial = [days[i] for i in range(len(days)) if not seen[i].all()]
    return VolatilitySeries(instrument_id, values, days,
                            [i * per_day for i in range(len(days))], partial)


def volatility_from_ticks(ticks: TickSeries, calendar: SessionCalendar) -> VolatilitySeries:
    kept = filter_sessions(ticks, calendar)
    days = (sorted(calendar.trading_days) if calendar.trading_days is not None else
            sorted({d.item() for d in np.unique(kept.timestamps.astype("datetime64[D]"))}))
    series = aggregate_volatility(compute_returns(kept), calendar, days, ticks.instrument_id)
    if series.partial_days:
        log.info("%s: %d partial trading days retained", ticks.instrument_id, len(series.partial_days))
    return series
