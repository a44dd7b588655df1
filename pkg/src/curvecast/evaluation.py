"""Forecast-quality metrics and comparison tests."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from ._validation import as_vector, check_same_length
from .exceptions import InvalidBounds, SeriesTooShort


def rmse(forecast, realized) -> float:
    forecast = as_vector(np.ravel(forecast), "forecast")
    realized = as_vector(np.ravel(realized), "realized")
    check_same_length(forecast, realized, "forecast", "realized")
    return float(np.sqrt(np.mean((forecast - realized) ** 2)))


def mae(forecast, realized) -> float:
    forecast = as_vector(np.ravel(forecast), "forecast")
    realized = as_vector(np.ravel(realized), "realized")
    check_same_length(forecast, realized, "forecast", "realized")
    return float(np.mean(np.abs(forecast - realized)))


def sign_rate(forecast, realized) -> float:
    """Fraction of points whose forecast sign matches the realized sign.

    An exact zero forecast only counts as a hit against an exact zero
    realization, so flat forecasts cannot inflate the rate.
    """
    forecast = as_vector(np.ravel(forecast), "forecast")
    realized = as_vector(np.ravel(realized), "realized")
    check_same_length(forecast, realized, "forecast", "realized")
    return float(np.mean(np.sign(forecast) == np.sign(realized)))


def interval_score(lower, upper, realized, omega_level: float) -> np.ndarray:
    """Pointwise interval score: width plus 2/omega times any violation distance."""
    lower = as_vector(np.ravel(lower), "lower")
    upper = as_vector(np.ravel(upper), "upper")
    realized = as_vector(np.ravel(realized), "realized")
    check_same_length(lower, upper, "lower", "upper")
    check_same_length(lower, realized, "bounds", "realized")
    if np.any(lower > upper):
        raise InvalidBounds("lower bound exceeds upper bound")
    if not 0.0 < omega_level < 1.0:
        raise InvalidBounds(f"omega_level must be in (0, 1), got {omega_level}")
    width = upper - lower
    under = np.where(realized < lower, lower - realized, 0.0)
    over = np.where(realized > upper, realized - upper, 0.0)
    return width + (2.0 / omega_level) * (under + over)


def mean_interval_score(lower, upper, realized, omega_level: float) -> float:
    """Interval score averaged over the curve's grid points."""
    return float(interval_score(lower, upper, realized, omega_level).mean())


def coverage_rate(lower, upper, realized) -> float:
    lower = as_vector(np.ravel(lower), "lower")
    upper = as_vector(np.ravel(upper), "upper")
    realized = as_vector(np.ravel(realized), "realized")
    check_same_length(lower, upper, "lower", "upper")
    check_same_length(lower, realized, "bounds", "realized")
    if np.any(lower > upper):
        raise InvalidBounds("lower bound exceeds upper bound")
    return float(np.mean((realized >= lower) & (realized <= upper)))


def diebold_mariano(errors_a, errors_b, loss: str = "squared", max_lag=None):
    """Equal-predictive-accuracy test on the loss differential.

    Uses a Newey-West long-run variance with Bartlett weights; the lag
    defaults to floor(n^(1/3)). Identical losses return (0.0, 1.0) by
    convention. Two-sided Normal p-value.
    """
    a = as_vector(np.ravel(errors_a), "errors_a", min_len=10)
    b = as_vector(np.ravel(errors_b), "errors_b", min_len=10)
    check_same_length(a, b, "errors_a", "errors_b")
    if loss == "squared":
        d = a ** 2 - b ** 2
    elif loss == "absolute":
        d = np.abs(a) - np.abs(b)
    else:
        raise ValueError(f"loss must be 'squared' or 'absolute', got {loss!r}")
    n = d.size
    lag = int(np.floor(n ** (1.0 / 3.0))) if max_lag is None else int(max_lag)
    lag = min(lag, n - 1)
    dbar = float(d.mean())
    dc = d - dbar
    gamma0 = float(np.mean(dc * dc))
    lrv = gamma0
    for l in range(1, lag + 1):
        gamma_l = float(np.mean(dc[l:] * dc[:-l]))
        lrv += 2.0 * (1.0 - l / (lag + 1.0)) * gamma_l
    if lrv <= 0.0 or gamma0 == 0.0:
        if abs(dbar) < 1e-300:
            return 0.0, 1.0  # identical losses
        return float(np.sign(dbar) * np.inf), 0.0
    stat = dbar / np.sqrt(lrv / n)
    pval = 2.0 * float(norm.sf(abs(stat)))
    return float(stat), pval


def acf(series, max_lag: int):
    """Sample autocorrelations for lags 0..max_lag plus the 1.96/sqrt(n) band."""
    x = as_vector(np.ravel(series), "series", min_len=2)
    n = x.size
    if max_lag >= n:
        raise SeriesTooShort(f"max_lag {max_lag} requires a series longer than {max_lag}")
    xc = x - x.mean()
    denom = float(np.sum(xc * xc))
    if denom <= 0.0:
        raise SeriesTooShort("series has zero variance")
    values = np.empty(max_lag + 1)
    values[0] = 1.0
    for l in range(1, max_lag + 1):
        values[l] = float(np.sum(xc[l:] * xc[:-l])) / denom
    return values, 1.96 / np.sqrt(n)


def cross_acf(series_a, series_b, max_lag: int):
    """Sample cross-correlations corr(a_t, b_{t+l}) for l = 0..max_lag, with the band."""
    a = as_vector(np.ravel(series_a), "series_a", min_len=2)
    b = as_vector(np.ravel(series_b), "series_b", min_len=2)
    check_same_length(a, b, "series_a", "series_b")
    n = a.size
    if max_lag >= n:
        raise SeriesTooShort(f"max_lag {max_lag} requires series longer than {max_lag}")
    ac = a - a.mean()
    bc = b - b.mean()
    sa = np.sqrt(np.mean(ac * ac))
    sb = np.sqrt(np.mean(bc * bc))
    if sa <= 0.0 or sb <= 0.0:
        raise SeriesTooShort("a series has zero variance")
    values = np.empty(max_lag + 1)
    for l in range(max_lag + 1):
        values[l] = float(np.sum(ac[: n - l] * bc[l:])) / (n * sa * sb)
    return values, 1.96 / np.sqrt(n)


@dataclass
class BacktestReport:
    """Per-day and pooled forecast metrics plus pairwise comparison tests."""

    per_day: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    dm_tests: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    forecasts: list = field(default_factory=list)  # optional raw forecasts, not serialized
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "meta": self.meta,
            "per_day": self.per_day,
            "aggregates": self.aggregates,
            "dm_tests": self.dm_tests,
            "failures": self.failures,
        }

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def aggregate_rows(self) -> list[dict]:
        rows = []
        for method in sorted(self.aggregates):
            agg = self.aggregates[method]
            rows.append({
                "method": method,
                "rmse": agg["rmse"],
                "mae": agg["mae"],
                "sign_rate": agg["sign_rate"],
                "mean_interval_score": agg["mean_interval_score"],
                "coverage": agg["coverage"],
                "n_points": agg["n_points"],
            })
        return rows

    def save_csv(self, path) -> None:
        """Flat aggregate table: method, RMSE, MAE, Sign, mean interval score, coverage."""
        import pandas as pd

        pd.DataFrame(self.aggregate_rows()).to_csv(path, index=False, float_format="%.10g")

    def save_per_day_csv(self, path) -> None:
        import pandas as pd

        pd.DataFrame(self.per_day).to_csv(path, index=False, float_format="%.10g")

    def format_table(self) -> str:
        rows = self.aggregate_rows()
        if not rows:
            return "(empty report)\n"
        header = f"{'method':<12}{'RMSE':>10}{'MAE':>10}{'Sign':>9}{'S_mean':>10}{'Cover':>9}{'n':>8}"
        lines = [header, "-" * len(header)]
        for r in rows:
            lines.append(
                f"{r['method']:<12}{r['rmse']:>10.4f}{r['mae']:>10.4f}"
                f"{100 * r['sign_rate']:>8.1f}%{r['mean_interval_score']:>10.4f}"
                f"{100 * r['coverage']:>8.2f}%{r['n_points']:>8d}"
            )
        for t in self.dm_tests:
            lines.append(
                f"DM {t['method_a']} vs {t['method_b']}: stat={t['statistic']:.3f} "
                f"p={t['p_value']:.3f}"
            )
        if self.failures:
            lines.append(f"failures: {len(self.failures)} day-method fits skipped")
        return "\n".join(lines) + "\n"
