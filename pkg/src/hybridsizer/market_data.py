"""Ingestion, resampling, scaling and windowing of price and PV series."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

HOURS_PER_YEAR = 8760.0

DEFAULT_SCHEMA = {
    "timestamp": "timestamp",
    "lambda_e": "lambda_e",
    "lambda_res": "lambda_res",
    "lambda_up": "lambda_up",
    "lambda_dn": "lambda_dn",
    "p_avail": "p_avail",
}
PRICE_FIELDS = ("lambda_e", "lambda_res", "lambda_up", "lambda_dn")


class DataError(ValueError):
    pass


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_grid(timestamps: np.ndarray) -> float:
    ts = np.asarray(timestamps, dtype="datetime64[s]")
    if ts.size < 1:
        raise DataError("series must contain at least one row")
    if ts.size == 1:
        return float("nan")
    steps = np.diff(ts).astype(np.int64)
    bad = np.nonzero(steps <= 0)[0]
    if bad.size:
        raise DataError(f"timestamps not strictly increasing at row {int(bad[0]) + 1}")
    if np.any(steps != steps[0]):
        i = int(np.nonzero(steps != steps[0])[0][0])
        raise DataError(f"irregular timestamp spacing at row {i + 1}")
    return steps[0] / 3600.0


@dataclass(frozen=True, eq=False)
class MarketSeries:
    """Energy price ($/MWh) and AS capacity prices ($/MW per interval) on a uniform grid."""

    timestamps: np.ndarray
    lambda_e: np.ndarray
    lambda_res: np.ndarray
    lambda_up: np.ndarray
    lambda_dn: np.ndarray
    dt_hours: float

    def __post_init__(self):
        ts = np.array(self.timestamps, dtype="datetime64[s]")
        ts.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        n = ts.size
        for name in PRICE_FIELDS:
            arr = _frozen(getattr(self, name))
            if arr.shape != (n,):
                raise DataError(f"{name} has shape {arr.shape}, expected ({n},)")
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{name} contains non-finite values")
            object.__setattr__(self, name, arr)
        for name in PRICE_FIELDS[1:]:
            neg = np.nonzero(getattr(self, name) < 0)[0]
            if neg.size:
                raise DataError(f"negative {name} at row {int(neg[0])}")
        spacing = _check_grid(ts)
        if n > 1 and not np.isclose(spacing, self.dt_hours):
            raise DataError(f"timestamp spacing {spacing} h does not match dt_hours={self.dt_hours}")

    def __len__(self) -> int:
        return self.timestamps.size

    def prices_matrix(self) -> np.ndarray:
        return np.column_stack([self.lambda_e, self.lambda_res, self.lambda_up, self.lambda_dn])

    def scaled(self, energy: float = 1.0, res: float = 1.0, up: float = 1.0, dn: float = 1.0) -> "MarketSeries":
        return MarketSeries(self.timestamps, self.lambda_e * energy, self.lambda_res * res,
                            self.lambda_up * up, self.lambda_dn * dn, self.dt_hours)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MarketSeries):
            return NotImplemented
        return (self.dt_hours == other.dt_hours and np.array_equal(self.timestamps, other.timestamps)
                and all(np.array_equal(getattr(self, f), getattr(other, f)) for f in PRICE_FIELDS))


@dataclass(frozen=True, eq=False)
class PvSeries:
    """Available PV power (MW).

    ``nameplate`` is the capacity the profile corresponds to; profiles for a
    design with ``P_pv`` MW are obtained by multiplying with
    ``P_pv / nameplate``. ``None`` means the profile is unscaled.
    """

    timestamps: np.ndarray
    p_avail: np.ndarray
    dt_hours: float
    nameplate: float | None = None

    def __post_init__(self):
        ts = np.array(self.timestamps, dtype="datetime64[s]")
        ts.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        p = _frozen(self.p_avail)
        if p.shape != ts.shape:
            raise DataError("p_avail and timestamps differ in length")
        if not np.all(np.isfinite(p)):
            raise DataError("p_avail contains non-finite values")
        neg = np.nonzero(p < 0)[0]
        if neg.size:
            raise DataError(f"negative p_avail at row {int(neg[0])}")
        object.__setattr__(self, "p_avail", p)
        spacing = _check_grid(ts)
        if ts.size > 1 and not np.isclose(spacing, self.dt_hours):
            raise DataError(f"timestamp spacing {spacing} h does not match dt_hours={self.dt_hours}")

    def __len__(self) -> int:
        return self.timestamps.size

    def profile_for(self, P_pv: float) -> np.ndarray:
        """PV availability for a plant with ``P_pv`` MW of panels."""
        if self.nameplate is None or self.nameplate == 0:
            return np.array(self.p_avail)
        return self.p_avail * (P_pv / self.nameplate)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PvSeries):
            return NotImplemented
        return (self.dt_hours == other.dt_hours and self.nameplate == other.nameplate
                and np.array_equal(self.timestamps, other.timestamps)
                and np.array_equal(self.p_avail, other.p_avail))


@dataclass(frozen=True)
class EpisodeWindow:
    start: int
    T: int
    W_anu: float = field(default=float("nan"))


def episode_window(series_len: int, T: int, dt: float, start: int = 0) -> EpisodeWindow:
    """Slice ``[start, start + T)`` with its annualization factor 8760 / (T * dt)."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if start < 0 or start + T > series_len:
        raise ValueError(f"window [{start}, {start + T}) exceeds series length {series_len}")
    return EpisodeWindow(start=start, T=T, W_anu=HOURS_PER_YEAR / (T * dt))


# ---------------------------------------------------------------------------
# CSV / JSON I/O

def load_series(path, schema: dict | None = None) -> tuple[MarketSeries, PvSeries]:
    """Read a CSV with a header row into validated market and PV series.

    ``schema`` maps canonical names (see ``DEFAULT_SCHEMA``) to CSV column
    names. Rows with missing values are rejected, never imputed.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such data file: {path}")
    cols = dict(DEFAULT_SCHEMA)
    if schema:
        cols.update(schema)
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing_cols = [c for c in cols.values() if c not in df.columns]
    if missing_cols:
        raise DataError(f"{path}: missing columns {missing_cols}")

    values = {}
    for key, col in cols.items():
        raw = df[col].str.strip()
        empty = np.nonzero((raw == "").to_numpy())[0]
        if empty.size:
            raise DataError(f"{path}: missing value in column {col!r} at row {int(empty[0])}")
        if key == "timestamp":
            parsed = pd.to_datetime(raw, errors="coerce", format="ISO8601")
        else:
            parsed = pd.to_numeric(raw, errors="coerce")
        bad = np.nonzero(parsed.isna().to_numpy())[0]
        if bad.size:
            raise DataError(f"{path}: malformed {col!r} value {raw.iloc[bad[0]]!r} at row {int(bad[0])}")
        values[key] = parsed

    ts_idx = pd.DatetimeIndex(values["timestamp"])
    if ts_idx.tz is not None:
        ts_idx = ts_idx.tz_convert("UTC").tz_localize(None)
    ts = ts_idx.to_numpy().astype("datetime64[s]")
    dt = _check_grid(ts)
    if np.isnan(dt):
        dt = 1.0
    prices = {k: values[k].to_numpy(dtype=float) for k in PRICE_FIELDS}
    market = MarketSeries(ts, dt_hours=dt, **prices)
    pv = PvSeries(ts, values["p_avail"].to_numpy(dtype=float), dt_hours=dt)
    return market, pv


def write_csv(path, market: MarketSeries, pv: PvSeries) -> None:
    df = pd.DataFrame({
        "timestamp": pd.DatetimeIndex(market.timestamps).strftime("%Y-%m-%dT%H:%M:%S"),
        **{k: getattr(market, k) for k in PRICE_FIELDS},
        "p_avail": pv.p_avail,
    })
    df.to_csv(path, index=False, float_format="%.17g")


def _start_ts(ts: np.ndarray) -> str:
    return str(np.datetime_as_string(ts[0], unit="s"))


def series_to_json(series: MarketSeries | PvSeries) -> dict:
    doc = {"dt_hours": series.dt_hours, "start_ts": _start_ts(series.timestamps)}
    if isinstance(series, MarketSeries):
        doc["kind"] = "market"
        for k in PRICE_FIELDS:
            doc[k] = getattr(series, k).tolist()
    else:
        doc["kind"] = "pv"
        doc["nameplate"] = series.nameplate
        doc["p_avail"] = series.p_avail.tolist()
    return doc


def series_from_json(doc: dict) -> MarketSeries | PvSeries:
    dt = float(doc["dt_hours"])
    key = "lambda_e" if doc["kind"] == "market" else "p_avail"
    n = len(doc[key])
    start = np.datetime64(doc["start_ts"], "s")
    ts = start + (np.arange(n) * round(dt * 3600)).astype("timedelta64[s]")
    if doc["kind"] == "market":
        return MarketSeries(ts, dt_hours=dt, **{k: doc[k] for k in PRICE_FIELDS})
    return PvSeries(ts, doc["p_avail"], dt_hours=dt, nameplate=doc.get("nameplate"))


def dump_json(series: MarketSeries | PvSeries, path) -> None:
    Path(path).write_text(json.dumps(series_to_json(series)))


def load_json(path) -> MarketSeries | PvSeries:
    return series_from_json(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# resampling

def _bin_mean(a: np.ndarray, k: int) -> np.ndarray:
    n = (a.size // k) * k
    return a[:n].reshape(-1, k).mean(axis=1)


def resample_and_scale(market: MarketSeries, pv: PvSeries, dt_target: float,
                       p_pv_nameplate: float | None = None) -> tuple[MarketSeries, PvSeries]:
    """Mean-aggregate both series onto ``dt_target`` hours and rescale PV.

    With ``p_pv_nameplate`` the profile is treated as normalized to its
    reference nameplate (per-unit when the series has none) and multiplied
    up to ``p_pv_nameplate`` MW. A trailing partial bin is dropped with a
    warning.
    """
    if len(market) != len(pv) or not np.array_equal(market.timestamps, pv.timestamps):
        raise DataError("market and PV series are not on the same grid")
    ratio = dt_target / market.dt_hours
    k = int(round(ratio))
    if k < 1 or not np.isclose(ratio, k, rtol=0, atol=1e-9):
        raise DataError(f"target resolution {dt_target} h is not an integer multiple of {market.dt_hours} h")
    n = len(market)
    if n < k:
        raise DataError("series shorter than one target bin")
    if n % k:
        logger.warning("dropping %d trailing rows that do not fill a %s h bin", n % k, dt_target)
    ts = market.timestamps[: (n // k) * k : k]
    new_market = MarketSeries(ts, *(_bin_mean(getattr(market, f), k) for f in PRICE_FIELDS), dt_hours=dt_target)
    p = _bin_mean(pv.p_avail, k)
    nameplate = pv.nameplate
    if p_pv_nameplate is not None:
        if p_pv_nameplate < 0:
            raise DataError("PV nameplate must be >= 0")
        p = p * (p_pv_nameplate / (nameplate or 1.0))
        nameplate = p_pv_nameplate
    return new_market, PvSeries(ts, p, dt_hours=dt_target, nameplate=nameplate)


def slice_series(market: MarketSeries, pv: PvSeries, start: int, stop: int) -> tuple[MarketSeries, PvSeries]:
    sl = slice(start, stop)
    m = MarketSeries(market.timestamps[sl], *(getattr(market, f)[sl] for f in PRICE_FIELDS), dt_hours=market.dt_hours)
    return m, PvSeries(pv.timestamps[sl], pv.p_avail[sl], dt_hours=pv.dt_hours, nameplate=pv.nameplate)


def monthly_windows(market: MarketSeries, min_len: int = 1) -> list[EpisodeWindow]:
    """One window per calendar month, each starting after a predecessor row."""
    months = market.timestamps.astype("datetime64[M]")
    out = []
    bounds = np.nonzero(np.diff(months.astype(np.int64)))[0] + 1
    starts = np.concatenate([[0], bounds])
    ends = np.concatenate([bounds, [len(market)]])
    for s, e in zip(starts, ends):
        s = max(int(s), 1)
        if e - s >= min_len:
            out.append(episode_window(len(market), int(e - s), market.dt_hours, s))
    return out
