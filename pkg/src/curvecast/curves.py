"""Construction of daily return curves from timestamped prices.

Prices are snapped to a fixed intraday grid, converted to percent
log-returns and grouped into complete UTC days. The percent scaling
(x100) happens here once and nowhere else downstream.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
import pandas as pd

from ._validation import as_matrix
from .exceptions import (
    AlreadyDemeaned,
    ConfigError,
    EmptyDay,
    GridMisaligned,
    NonPositivePrice,
)

SECONDS_PER_DAY = 86400

_DURATION_RE = re.compile(r"^\s*(\d+)\s*(s|sec|m|min|h|hr|d)?\s*$", re.IGNORECASE)
_DURATION_UNITS = {None: 1, "s": 1, "sec": 1, "m": 60, "min": 60, "h": 3600, "hr": 3600, "d": 86400}


class PricePoint(NamedTuple):
    """A single observation: UTC timestamp (unix seconds) and a positive price."""

    timestamp: int
    price: float


@dataclass
class ReturnCurve:
    """One day of intraday percent log-returns on a fixed grid.

    ``grid`` holds intraday time labels as fractions of the day in (0, 1];
    label t/T marks the return accrued over the t-th grid interval.
    """

    day_index: int
    values: np.ndarray
    grid: np.ndarray
    day_start: Optional[int] = None  # unix seconds of the day's opening grid point

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.grid = np.asarray(self.grid, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError("values and grid must have the same length")
        if self.grid.size and np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")


@dataclass
class ReturnCurvePanel:
    """N daily return curves on one shared grid, stored as an N x T matrix."""

    values: np.ndarray
    grid: np.ndarray
    day_indices: np.ndarray
    demeaned: bool = False
    mean_curve: Optional[np.ndarray] = None
    day_starts: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = as_matrix(self.values, "panel values")
        self.grid = np.asarray(self.grid, dtype=float)
        self.day_indices = np.asarray(self.day_indices, dtype=int)
        if self.values.shape[1] != self.grid.size:
            raise ValueError("grid length must match the number of columns")
        if self.values.shape[0] != self.day_indices.size:
            raise ValueError("day_indices length must match the number of rows")
        if self.demeaned:
            if self.mean_curve is None:
                raise ValueError("demeaned panel must carry its mean_curve")
            col_means = self.values.mean(axis=0)
            if self.n_days and np.abs(col_means).max() > 1e-12 * max(1.0, np.abs(self.values).max()):
                raise ValueError("demeaned panel has nonzero column means")

    @property
    def n_days(self) -> int:
        return self.values.shape[0]

    @property
    def n_points(self) -> int:
        return self.values.shape[1]

    def curve(self, i: int) -> ReturnCurve:
        start = None if self.day_starts is None else int(self.day_starts[i])
        return ReturnCurve(int(self.day_indices[i]), self.values[i], self.grid, start)

    @property
    def curves(self) -> list[ReturnCurve]:
        return [self.curve(i) for i in range(self.n_days)]


def parse_grid_step(step) -> int:
    """Parse a grid step into whole seconds. Accepts ints or '15min'/'1h'/'900s'."""
    if isinstance(step, (int, np.integer)):
        seconds = int(step)
    elif isinstance(step, str):
        m = _DURATION_RE.match(step)
        if not m:
            raise ConfigError(f"cannot parse grid step {step!r}")
        seconds = int(m.group(1)) * _DURATION_UNITS[m.group(2).lower() if m.group(2) else None]
    else:
        raise ConfigError(f"grid step must be int seconds or a duration string, got {type(step)}")
    if seconds <= 0 or SECONDS_PER_DAY % seconds != 0:
        raise ConfigError(f"grid step of {seconds}s does not divide a 24h day evenly")
    return seconds


def load_price_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a `timestamp,price` CSV into (unix seconds, price) arrays.

    The timestamp format (ISO-8601 or unix seconds) is detected once per
    file from the first data row.
    """
    frame = pd.read_csv(path)
    cols = {c.strip().lower(): c for c in frame.columns}
    if "timestamp" not in cols or "price" not in cols:
        raise ConfigError(f"{path}: expected header with 'timestamp' and 'price' columns")
    raw_ts = frame[cols["timestamp"]]
    first = str(raw_ts.iloc[0]).strip() if len(raw_ts) else "0"
    try:
        float(first)
        numeric = True
    except ValueError:
        numeric = False
    if numeric:
        ts = raw_ts.astype(np.int64).to_numpy()
    else:
        parsed = pd.to_datetime(raw_ts, utc=True, format="ISO8601")
        ts = (parsed.astype("int64") // 1_000_000_000).to_numpy()
    prices = frame[cols["price"]].astype(float).to_numpy()
    return ts, prices


def _build_curves(timestamps, prices, grid_step, offset_steps, fill):
    ts = np.asarray(timestamps, dtype=np.int64)
    px = np.asarray(prices, dtype=float)
    if ts.ndim != 1 or px.shape != ts.shape:
        raise ValueError("timestamps and prices must be 1-d arrays of equal length")
    if ts.size < 2:
        raise ValueError("need at least two prices")
    if np.any(px <= 0) or not np.all(np.isfinite(px)):
        bad = int(np.argmax(~((px > 0) & np.isfinite(px))))
        raise NonPositivePrice(f"non-positive price {px[bad]} at timestamp {ts[bad]}")
    if np.any(np.diff(ts) <= 0):
        raise ValueError("timestamps must be strictly increasing")
    if fill not in ("ffill", "strict"):
        raise ConfigError(f"unknown fill policy {fill!r}")

    step = parse_grid_step(grid_step)
    periods = SECONDS_PER_DAY // step
    offset = int(offset_steps) * step

    rel = ts - offset
    if fill == "strict":
        off_grid = rel % step != 0
        if np.any(off_grid):
            bad = int(np.argmax(off_grid))
            raise GridMisaligned(f"timestamp {ts[bad]} is not on the {step}s grid")

    # Grid points covered by the observation range.
    first = offset + step * int(np.ceil(rel[0] / step))
    last = offset + step * int(np.floor(rel[-1] / step))
    if last <= first:
        raise ValueError("price range does not span a full grid interval")
    grid_ts = np.arange(first, last + step, step, dtype=np.int64)

    # Last observed price at or before each grid point.
    idx = np.searchsorted(ts, grid_ts, side="right") - 1
    grid_px = px[idx]
    exact = ts[idx] == grid_ts
    if fill == "strict" and not np.all(exact):
        bad = int(np.argmax(~exact))
        raise GridMisaligned(f"no price at grid point {grid_ts[bad]} in strict mode")

    returns = 100.0 * np.diff(np.log(grid_px))
    ret_ts = grid_ts[1:]

    # A return at tau belongs to the day (day_start, day_start + 24h].
    day_ids = (ret_ts - offset - 1) // SECONDS_PER_DAY
    curves: list[ReturnCurve] = []
    grid_labels = np.arange(1, periods + 1, dtype=float) / periods
    n_filled = 0
    day_index = 0
    for day in np.unique(day_ids):
        sel = day_ids == day
        if int(sel.sum()) != periods:
            continue  # incomplete first/last day
        day_start = int(day) * SECONDS_PER_DAY + offset
        raw_in_day = int(np.count_nonzero((ts > day_start) & (ts <= day_start + SECONDS_PER_DAY)))
        if raw_in_day == 0:
            raise EmptyDay(f"day starting at {day_start} has no raw price observations")
        n_filled += int(np.count_nonzero(~exact[1:][sel]))
        day_index += 1
        curves.append(ReturnCurve(day_index, returns[sel], grid_labels, day_start))

    meta = {"grid_step": step, "fill": fill, "offset_steps": int(offset_steps), "n_filled": n_filled}
    return curves, meta


def compute_return_curves(
    timestamps,
    prices,
    grid_step,
    offset_steps: int = 0,
    fill: str = "ffill",
) -> list[ReturnCurve]:
    """Snap prices to the grid and build one curve of T percent log-returns per complete day.

    The return at grid time tau is 100*(ln p(tau) - ln p(tau - step)); the
    first return of a day therefore uses the previous day's closing price.
    Incomplete leading/trailing days are dropped.

    fill='ffill' carries the last observed price forward over grid gaps
    (a gap becomes a zero return); fill='strict' rejects any gap or
    off-grid timestamp instead.
    """
    curves, _ = _build_curves(timestamps, prices, grid_step, offset_steps, fill)
    return curves


def panel_from_curves(curves: list[ReturnCurve], meta: Optional[dict] = None) -> ReturnCurvePanel:
    if not curves:
        raise ValueError("no curves to assemble")
    grid = curves[0].grid
    for c in curves[1:]:
        if c.grid.shape != grid.shape or not np.array_equal(c.grid, grid):
            raise ValueError("all curves must share one grid")
    values = np.vstack([c.values for c in curves])
    day_indices = np.array([c.day_index for c in curves], dtype=int)
    day_starts = None
    if all(c.day_start is not None for c in curves):
        day_starts = np.array([c.day_start for c in curves], dtype=np.int64)
    return ReturnCurvePanel(values, grid, day_indices, False, None, day_starts, dict(meta or {}))


def ingest_prices(timestamps, prices, grid_step, offset_steps=0, fill="ffill") -> ReturnCurvePanel:
    """compute_return_curves + panel assembly, keeping fill metadata."""
    curves, meta = _build_curves(timestamps, prices, grid_step, offset_steps, fill)
    return panel_from_curves(curves, meta)


def demean_panel(panel: ReturnCurvePanel) -> ReturnCurvePanel:
    """Subtract the per-gridpoint average return over days; records the mean curve."""
    if panel.demeaned:
        raise AlreadyDemeaned("panel is already demeaned")
    mean_curve = panel.values.mean(axis=0)
    return ReturnCurvePanel(
        panel.values - mean_curve, panel.grid.copy(), panel.day_indices.copy(), True,
        mean_curve, None if panel.day_starts is None else panel.day_starts.copy(),
        dict(panel.meta),
    )


def restore_mean(panel: ReturnCurvePanel) -> ReturnCurvePanel:
    """Inverse of demean_panel."""
    if not panel.demeaned:
        raise ValueError("panel is not demeaned")
    values = panel.values + panel.mean_curve
    return ReturnCurvePanel(
        values, panel.grid.copy(), panel.day_indices.copy(), False, None,
        None if panel.day_starts is None else panel.day_starts.copy(), dict(panel.meta),
    )


def save_panel(panel: ReturnCurvePanel, prefix) -> tuple[str, str]:
    """Write `<prefix>.csv` (one row per day) and a `<prefix>.json` sidecar."""
    prefix = str(prefix)
    csv_path, json_path = prefix + ".csv", prefix + ".json"
    frame = pd.DataFrame(panel.values, columns=[f"r{t + 1:04d}" for t in range(panel.n_points)])
    frame.insert(0, "day", panel.day_indices)
    if panel.day_starts is not None:
        frame.insert(1, "day_start", panel.day_starts)
    frame.to_csv(csv_path, index=False, float_format="%.17g")
    sidecar = {
        "grid_step": panel.meta.get("grid_step"),
        "N": int(panel.n_days),
        "T": int(panel.n_points),
        "demeaned": bool(panel.demeaned),
        "mean_curve": None if panel.mean_curve is None else [float(v) for v in panel.mean_curve],
        "grid": [float(g) for g in panel.grid],
        "fill": panel.meta.get("fill"),
        "offset_steps": panel.meta.get("offset_steps"),
        "n_filled": panel.meta.get("n_filled"),
    }
    with open(json_path, "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, json_path


def load_panel(prefix) -> ReturnCurvePanel:
    prefix = str(prefix)
    frame = pd.read_csv(prefix + ".csv")
    with open(prefix + ".json") as fh:
        sidecar = json.load(fh)
    value_cols = [c for c in frame.columns if c.startswith("r")]
    values = frame[value_cols].to_numpy(dtype=float)
    day_indices = frame["day"].to_numpy(dtype=int)
    day_starts = frame["day_start"].to_numpy(dtype=np.int64) if "day_start" in frame.columns else None
    grid = np.asarray(sidecar["grid"], dtype=float)
    mean_curve = sidecar.get("mean_curve")
    meta = {k: sidecar.get(k) for k in ("grid_step", "fill", "offset_steps", "n_filled")}
    return ReturnCurvePanel(
        values, grid, day_indices, bool(sidecar["demeaned"]),
        None if mean_curve is None else np.asarray(mean_curve, dtype=float),
        day_starts, meta,
    )
