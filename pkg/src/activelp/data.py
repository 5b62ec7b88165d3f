"""Market data: hourly candle series, CSV ingestion, trade resampling, GBM fixtures."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

HOUR = 3600


class DataError(Exception):
    """Raised for malformed, gapped, or otherwise invalid market data."""


@dataclass(frozen=True)
class Candle:
    """One hourly OHLC bar; timestamp is the epoch second of the hour start."""

    timestamp: int
    open: float
    high: float
    low: float
    close: float
    volume: float | None = None

    def __post_init__(self):
        if self.low <= 0:
            raise DataError(f"candle at {self.timestamp} has non-positive price")
        if not (self.low <= min(self.open, self.close) <= max(self.open, self.close) <= self.high):
            raise DataError(f"candle at {self.timestamp} violates OHLC ordering")


class PriceSeries:
    """Gap-free hourly candle series backed by numpy arrays."""

    def __init__(self, timestamps, opens, highs, lows, closes, volumes=None):
        self.timestamps = np.asarray(timestamps, dtype=np.int64)
        self.opens = np.asarray(opens, dtype=float)
        self.highs = np.asarray(highs, dtype=float)
        self.lows = np.asarray(lows, dtype=float)
        self.closes = np.asarray(closes, dtype=float)
        self.volumes = None if volumes is None else np.asarray(volumes, dtype=float)
        self._validate()

    def _validate(self):
        n = self.timestamps.size
        if n == 0:
            raise DataError("empty price series")
        for arr, name in ((self.opens, "open"), (self.highs, "high"),
                          (self.lows, "low"), (self.closes, "close")):
            if arr.size != n:
                raise DataError(f"{name} column length {arr.size} != {n}")
        if self.volumes is not None and self.volumes.size != n:
            raise DataError("volume column length mismatch")
        if np.any(self.lows <= 0):
            i = int(np.argmax(self.lows <= 0))
            raise DataError(f"non-positive price at row {i} (ts={self.timestamps[i]})")
        oc_min = np.minimum(self.opens, self.closes)
        oc_max = np.maximum(self.opens, self.closes)
        bad = (self.lows > oc_min) | (oc_max > self.highs)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise DataError(f"OHLC ordering violated at row {i} (ts={self.timestamps[i]})")
        if n > 1:
            gaps = np.diff(self.timestamps)
            if np.any(gaps != HOUR):
                i = int(np.argmax(gaps != HOUR))
                missing = _missing_hours(int(self.timestamps[i]), int(self.timestamps[i + 1]))
                raise DataError(
                    f"series is not hourly at row {i}: missing {missing}"
                )

    def __len__(self):
        return int(self.timestamps.size)

    def candle(self, i: int) -> Candle:
        vol = None if self.volumes is None else float(self.volumes[i])
        return Candle(int(self.timestamps[i]), float(self.opens[i]), float(self.highs[i]),
                      float(self.lows[i]), float(self.closes[i]), vol)

    def slice(self, start: int, stop: int) -> "PriceSeries":
        if not (0 <= start < stop <= len(self)):
            raise DataError(f"slice [{start}, {stop}) out of bounds for length {len(self)}")
        vols = None if self.volumes is None else self.volumes[start:stop].copy()
        return PriceSeries(
            self.timestamps[start:stop].copy(), self.opens[start:stop].copy(),
            self.highs[start:stop].copy(), self.lows[start:stop].copy(),
            self.closes[start:stop].copy(), vols,
        )

    def __eq__(self, other):
        if not isinstance(other, PriceSeries):
            return NotImplemented
        if len(self) != len(other):
            return False
        same = (np.array_equal(self.timestamps, other.timestamps)
                and np.array_equal(self.opens, other.opens)
                and np.array_equal(self.highs, other.highs)
                and np.array_equal(self.lows, other.lows)
                and np.array_equal(self.closes, other.closes))
        if not same:
            return False
        if (self.volumes is None) != (other.volumes is None):
            return False
        return self.volumes is None or np.array_equal(self.volumes, other.volumes)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = ["timestamp", "open", "high", "low", "close"]
            if self.volumes is not None:
                header.append("volume")
            writer.writerow(header)
            for i in range(len(self)):
                row = [int(self.timestamps[i]), repr(float(self.opens[i])),
                       repr(float(self.highs[i])), repr(float(self.lows[i])),
                       repr(float(self.closes[i]))]
                if self.volumes is not None:
                    row.append(repr(float(self.volumes[i])))
                writer.writerow(row)


def _missing_hours(ts_before: int, ts_after: int, limit: int = 5) -> str:
    hours = list(range(ts_before + HOUR, ts_after, HOUR))
    shown = ", ".join(_iso(t) for t in hours[:limit])
    if len(hours) > limit:
        shown += f", ... ({len(hours)} hours total)"
    return shown or f"(timestamps regress: {ts_before} -> {ts_after})"


def _iso(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _parse_timestamp(raw, row: int) -> int:
    if raw is None or raw.strip() == "":
        raise DataError(f"row {row}: missing timestamp")
    raw = raw.strip()
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        text = raw.replace("Z", "+00:00")
        dt = datetime.fromisoformat(text)
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return int(dt.timestamp())
    except ValueError:
        raise DataError(f"row {row}: cannot parse timestamp {raw!r}") from None


def _parse_float(raw, row: int, col: str) -> float:
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise DataError(f"row {row}: cannot parse {col} value {raw!r}") from None
    if not math.isfinite(value):
        raise DataError(f"row {row}: non-finite {col} value {raw!r}")
    return value


def load_candles(path, fill_gaps: bool = False) -> PriceSeries:
    """Load an hourly candle CSV (timestamp,open,high,low,close[,volume]).

    Timestamps may be epoch seconds or ISO-8601. Gaps are an error unless
    fill_gaps is set, in which case missing hours are forward-filled with
    flat candles at the previous close.
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file")
        fields = [f.strip().lower() for f in reader.fieldnames]
        required = ["timestamp", "open", "high", "low", "close"]
        for col in required:
            if col not in fields:
                raise DataError(f"{path}: missing column {col!r}")
        has_volume = "volume" in fields
        for idx, raw in enumerate(reader, start=2):  # header is row 1
            raw = {k.strip().lower(): v for k, v in raw.items() if k is not None}
            ts = _parse_timestamp(raw["timestamp"], idx)
            o = _parse_float(raw["open"], idx, "open")
            h = _parse_float(raw["high"], idx, "high")
            lo = _parse_float(raw["low"], idx, "low")
            c = _parse_float(raw["close"], idx, "close")
            if min(o, h, lo, c) <= 0:
                raise DataError(f"row {idx}: non-positive price")
            vol = None
            if has_volume and raw.get("volume") not in (None, ""):
                vol = _parse_float(raw["volume"], idx, "volume")
            try:
                rows.append(Candle(ts, o, h, lo, c, vol))
            except DataError as exc:
                raise DataError(f"row {idx}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: no data rows")

    if fill_gaps:
        filled = [rows[0]]
        for cand in rows[1:]:
            prev = filled[-1]
            if cand.timestamp <= prev.timestamp:
                raise DataError(f"timestamps not increasing at {_iso(cand.timestamp)}")
            ts = prev.timestamp + HOUR
            while ts < cand.timestamp:
                filled.append(Candle(ts, prev.close, prev.close, prev.close, prev.close,
                                     0.0 if prev.volume is not None else None))
                ts += HOUR
            filled.append(cand)
        rows = filled

    volumes = None
    if any(c.volume is not None for c in rows):
        volumes = [c.volume if c.volume is not None else 0.0 for c in rows]
    return PriceSeries(
        [c.timestamp for c in rows], [c.open for c in rows], [c.high for c in rows],
        [c.low for c in rows], [c.close for c in rows], volumes,
    )


def resample_hourly(timestamps, prices, volumes=None) -> PriceSeries:
    """Bucket raw trades into hourly OHLC candles.

    Empty hours between trades are forward-filled with flat candles at the
    previous close (an AMM price is static without swaps).
    """
    timestamps = np.asarray(timestamps, dtype=np.int64)
    prices = np.asarray(prices, dtype=float)
    if timestamps.size == 0:
        raise DataError("no trades to resample")
    if timestamps.size != prices.size:
        raise DataError("timestamp/price length mismatch")
    if np.any(np.diff(timestamps) < 0):
        raise DataError("trade timestamps must be non-decreasing")
    if np.any(prices <= 0):
        i = int(np.argmax(prices <= 0))
        raise DataError(f"non-positive trade price at row {i}")
    if volumes is not None:
        volumes = np.asarray(volumes, dtype=float)
        if volumes.size != prices.size:
            raise DataError("volume length mismatch")

    hours = timestamps // HOUR
    first, last = int(hours[0]), int(hours[-1])
    candles = []
    prev_close = None
    for h in range(first, last + 1):
        mask = hours == h
        ts = h * HOUR
        if np.any(mask):
            bucket = prices[mask]
            o = float(bucket[0])
            hi = float(bucket.max())
            lo = float(bucket.min())
            c = float(bucket[-1])
            vol = float(volumes[mask].sum()) if volumes is not None else None
            candles.append(Candle(ts, o, hi, lo, c, vol))
            prev_close = c
        else:
            candles.append(Candle(ts, prev_close, prev_close, prev_close, prev_close,
                                  0.0 if volumes is not None else None))
    vols = None
    if volumes is not None:
        vols = [c.volume for c in candles]
    return PriceSeries(
        [c.timestamp for c in candles], [c.open for c in candles],
        [c.high for c in candles], [c.low for c in candles],
        [c.close for c in candles], vols,
    )


def load_trades(path) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Load a raw trade CSV (timestamp,price[,volume]) as arrays."""
    ts, px, vol = [], [], []
    has_volume = False
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file")
        fields = [f.strip().lower() for f in reader.fieldnames]
        for col in ("timestamp", "price"):
            if col not in fields:
                raise DataError(f"{path}: missing column {col!r}")
        has_volume = "volume" in fields
        for idx, raw in enumerate(reader, start=2):
            raw = {k.strip().lower(): v for k, v in raw.items() if k is not None}
            ts.append(_parse_timestamp(raw["timestamp"], idx))
            price = _parse_float(raw["price"], idx, "price")
            if price <= 0:
                raise DataError(f"row {idx}: non-positive price")
            px.append(price)
            if has_volume:
                vol.append(_parse_float(raw.get("volume") or "0", idx, "volume"))
    if not ts:
        raise DataError(f"{path}: no data rows")
    return (np.array(ts, dtype=np.int64), np.array(px, dtype=float),
            np.array(vol, dtype=float) if has_volume else None)


def gbm_generate(
    seed: int,
    n_hours: int,
    p_start: float,
    drift: float = 0.0,
    vol: float = 0.0,
    start_ts: int = 1609459200,
) -> PriceSeries:
    """Synthetic hourly series following geometric Brownian motion.

    Hourly log returns are N(drift - vol^2/2, vol^2); each hour is built from
    four intra-hour sub-samples so the OHLC extremes are honest. Candle 0 is
    flat at p_start, so closes[t] = p_start * exp(drift*t) exactly when vol=0.
    """
    if n_hours < 1:
        raise DataError(f"n_hours must be >= 1, got {n_hours}")
    if p_start <= 0:
        raise DataError(f"p_start must be positive, got {p_start}")
    if vol < 0:
        raise DataError(f"vol must be >= 0, got {vol}")
    rng = np.random.default_rng(seed)
    n_sub = 4
    step_drift = (drift - 0.5 * vol * vol) / n_sub
    step_vol = vol / math.sqrt(n_sub)

    ts = start_ts + HOUR * np.arange(n_hours, dtype=np.int64)
    opens = np.empty(n_hours)
    highs = np.empty(n_hours)
    lows = np.empty(n_hours)
    closes = np.empty(n_hours)
    opens[0] = highs[0] = lows[0] = closes[0] = p_start
    price = p_start
    for t in range(1, n_hours):
        z = rng.standard_normal(n_sub)
        path = price * np.exp(np.cumsum(step_drift + step_vol * z))
        opens[t] = price
        highs[t] = max(price, path.max())
        lows[t] = min(price, path.min())
        closes[t] = path[-1]
        price = closes[t]
    return PriceSeries(ts, opens, highs, lows, closes)
