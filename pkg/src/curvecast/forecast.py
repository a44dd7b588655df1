"""One-day-ahead curve forecasts with pointwise intervals.

Point forecasts are mean + sum_j score_forecast_j * eigenfunction_j.
Pointwise variance adds the quadratic form of the score forecast
covariance in the eigenfunctions to the truncation-noise profile omega;
Gaussian quantiles turn it into an interval. The residual-band baseline
(Aue-style bands, tags *_AUE) instead scales the pointwise standard
deviation of in-sample forecast errors by coverage-calibrated factors.
"""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm

from ._validation import as_vector, check_symmetric_psd
from .curves import ReturnCurvePanel
from .evaluation import (
    BacktestReport,
    coverage_rate,
    diebold_mariano,
    interval_score,
    mae,
    rmse,
    sign_rate,
)
from .exceptions import (
    CurvecastError,
    InsufficientHistory,
    LengthMismatch,
    NonPsdCov,
)
from .fpca import FunctionalPCA
from .score_models import ArGarch, ArmaAuto, ScalarBekk, Var1, fit_var_sbekk

METHOD_ARGARCH = "ARGARCH"
METHOD_ARMA_AUE = "ARMA_AUE"
METHOD_VAR_SBEKK = "VAR_SBEKK"
METHOD_VAR_AUE = "VAR_AUE"
ALL_METHODS = (METHOD_ARGARCH, METHOD_ARMA_AUE, METHOD_VAR_SBEKK, METHOD_VAR_AUE)

_ARMA_MIN_HISTORY = 30
_AR_MIN_HISTORY = 8


@dataclass
class FunctionalForecast:
    """Point forecast curve with pointwise interval bounds at one nominal level."""

    point: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    method: str
    score_forecasts: np.ndarray
    score_variances: Optional[np.ndarray] = None  # (J, J); None for residual-band methods
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.point = np.asarray(self.point, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if not (self.point.shape == self.lower.shape == self.upper.shape):
            raise LengthMismatch("point/lower/upper must share one grid")
        if np.any(self.lower > self.point + 1e-12) or np.any(self.upper < self.point - 1e-12):
            raise ValueError("interval bounds must bracket the point forecast")
        if not 0.0 < self.level < 1.0:
            raise ValueError(f"level must be in (0, 1), got {self.level}")


def forecast_curve(basis: FunctionalPCA, score_fc, score_cov, level: float = 0.95,
                   method: str = "CUSTOM") -> FunctionalForecast:
    """Assemble a curve forecast from score forecasts and their covariance.

    ``score_cov`` may be a length-J vector of per-score variances (the
    diagonal assembly used by per-score models) or a full J x J matrix
    (the quadratic-form assembly used by the joint model). The two routes
    agree whenever the matrix is diagonal.
    """
    j = basis.n_components_
    score_fc = as_vector(score_fc, "score_fc")
    if score_fc.size != j:
        raise LengthMismatch(f"score_fc has length {score_fc.size}, basis truncation is {j}")
    xi = basis.eigenfunctions_[:j]
    point = basis.mean_curve_ + score_fc @ xi

    cov = np.asarray(score_cov, dtype=float)
    if cov.ndim == 1:
        if cov.size != j:
            raise LengthMismatch(f"score variance vector has length {cov.size}, expected {j}")
        if np.any(cov < -1e-12):
            raise NonPsdCov("negative score variance")
        variance = np.clip(cov, 0.0, None) @ (xi ** 2)
        score_variances = np.diag(np.clip(cov, 0.0, None))
    else:
        if cov.shape != (j, j):
            raise LengthMismatch(f"score covariance has shape {cov.shape}, expected ({j}, {j})")
        check_symmetric_psd(cov, "score covariance")
        variance = np.einsum("jt,jl,lt->t", xi, cov, xi)
        score_variances = cov
    variance = np.clip(variance + basis.omega_, 0.0, None)

    z = norm.ppf(0.5 + level / 2.0)
    half = z * np.sqrt(variance)
    return FunctionalForecast(point, point - half, point + half, level, method,
                              score_fc, score_variances)


def fit_argarch_scores(scores) -> list[ArGarch]:
    """Independent AR(1)-GARCH(1,1) fits, one per retained score column."""
    scores = np.asarray(scores, dtype=float)
    return [ArGarch().fit(scores[:, jj]) for jj in range(scores.shape[1])]


def forecast_argarch_day(basis: FunctionalPCA, fits: Sequence[ArGarch],
                         level: float = 0.95) -> FunctionalForecast:
    """One-day-ahead forecast from per-score AR-GARCH fits (diagonal assembly)."""
    j = basis.n_components_
    if len(fits) != j:
        raise LengthMismatch(f"got {len(fits)} fits for truncation {j}")
    means = np.empty(j)
    variances = np.empty(j)
    for jj, fit in enumerate(fits):
        means[jj], variances[jj] = fit.forecast()
    return forecast_curve(basis, means, variances, level, METHOD_ARGARCH)


def forecast_sbekk_day(basis: FunctionalPCA, var_fit: Var1, bekk_fit: ScalarBekk,
                       level: float = 0.95) -> FunctionalForecast:
    """One-day-ahead forecast from the VAR(1) mean and scalar-BEKK covariance."""
    score_fc = var_fit.forecast()
    h_next = bekk_fit.forecast(var_fit.residuals_[-1], bekk_fit.H_path_[-1])
    return forecast_curve(basis, score_fc, h_next, level, METHOD_VAR_SBEKK)


# ---------------------------------------------------------------------------
# Residual-band baseline
# ---------------------------------------------------------------------------

def _ols_ar1_forecast(history: np.ndarray) -> float:
    x, z = history[:-1], history[1:]
    denom = float(np.sum((x - x.mean()) ** 2))
    if denom <= 0:
        return float(history.mean())
    a = float(np.sum((x - x.mean()) * (z - z.mean())) / denom)
    c = float(z.mean() - a * x.mean())
    return c + a * float(history[-1])


def _arma_prefix_forecasts(scores: np.ndarray, j: int, n: int) -> np.ndarray:
    """Per-score forecasts of row k from an ARMA refit on rows [0, k); k in [j+1, n-1]."""
    ks = np.arange(j + 1, n)
    out = np.zeros((ks.size, scores.shape[1]))
    for jj in range(scores.shape[1]):
        col = scores[:, jj]
        for idx, k in enumerate(ks):
            hist = col[:k]
            if k >= _ARMA_MIN_HISTORY:
                try:
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore")
                        m = ArmaAuto().fit(hist)
                    out[idx, jj] = m.forecast(1)[0][0]
                    continue
                except CurvecastError:
                    pass
            if k >= _AR_MIN_HISTORY:
                out[idx, jj] = _ols_ar1_forecast(hist)
            # else: unconditional zero forecast for demeaned scores
    return out


def _arma_full_forecasts(scores: np.ndarray, j: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Full-sample ARMA per score: in-sample one-step predictions and the N+1 forecast."""
    preds = np.zeros((n, scores.shape[1]))
    ahead = np.zeros(scores.shape[1])
    for jj in range(scores.shape[1]):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            m = ArmaAuto().fit(scores[:, jj])
        preds[:, jj] = m.in_sample_one_step()
        ahead[jj] = m.forecast(1)[0][0]
    ks = np.arange(j + 1, n)
    return preds[ks], ahead


def _var_prefix_forecasts(scores: np.ndarray, j: int, n: int) -> np.ndarray:
    # below this history length an expanding VAR has too few residual degrees
    # of freedom to be usable; fall back to the unconditional zero forecast
    min_history = 2 * scores.shape[1] + 5
    ks = np.arange(j + 1, n)
    out = np.zeros((ks.size, scores.shape[1]))
    for idx, k in enumerate(ks):
        hist = scores[:k]
        if k >= min_history:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                out[idx] = Var1().fit(hist).forecast(hist[-1])
        # else zero forecast
    return out


def aue_bands(panel: ReturnCurvePanel, basis: FunctionalPCA, score_forecaster: str = "arma",
              level: float = 0.95, refit: str = "expanding",
              kappa_max: float = 6.0, kappa_step: float = 0.01) -> FunctionalForecast:
    """Constant-width pointwise forecast bands from in-sample forecast errors.

    For each cut k in [J+1, N-1] the retained scores of day k+1 are
    forecast by the chosen score model (refit on an expanding window, or
    fit once on the full sample when refit='full'), the fitted day-k+1
    curve is rebuilt, and the error standard deviation gamma(t) is
    computed with divisor (N-1)-(J+1). Scale factors (kappa_lo, kappa_hi)
    are then the cheapest grid pair whose empirical coverage of all
    in-sample errors reaches the nominal level.
    """
    if score_forecaster not in ("arma", "var"):
        raise ValueError(f"score_forecaster must be 'arma' or 'var', got {score_forecaster!r}")
    if refit not in ("expanding", "full"):
        raise ValueError(f"refit must be 'expanding' or 'full', got {refit!r}")
    values = panel.values if isinstance(panel, ReturnCurvePanel) else np.asarray(panel, dtype=float)
    n = values.shape[0]
    j = basis.n_components_
    if n <= j + 2:
        raise InsufficientHistory(f"need more than J + 2 = {j + 2} days, got {n}")
    scores = basis.scores_[:, :j]
    xi = basis.eigenfunctions_[:j]

    if score_forecaster == "arma":
        if refit == "expanding":
            fc = _arma_prefix_forecasts(scores, j, n)
            _, ahead = _arma_full_forecasts(scores, j, n)
        else:
            fc, ahead = _arma_full_forecasts(scores, j, n)
        method = METHOD_ARMA_AUE
    else:
        if refit == "expanding":
            fc = _var_prefix_forecasts(scores, j, n)
        else:
            var_full = Var1().fit(scores)
            fc = var_full.in_sample_one_step()[j:]
        ahead = Var1().fit(scores).forecast(scores[-1])
        method = METHOD_VAR_AUE

    ks = np.arange(j + 1, n)  # 1-based cut k -> 0-based target row k
    fitted = fc @ xi
    already_centered = isinstance(panel, ReturnCurvePanel) and panel.demeaned
    centered = values if already_centered else values - basis.mean_curve_
    errors = centered[ks] - fitted

    divisor = (n - 1) - (j + 1)
    if divisor <= 0:
        raise InsufficientHistory("too few in-sample errors for the band variance")
    gamma = np.sqrt(np.sum(errors ** 2, axis=0) / divisor)

    safe_gamma = np.where(gamma > 0, gamma, 1.0)
    u = (errors / safe_gamma).ravel()
    kappa_lo, kappa_hi, achieved = _search_kappas(u, level, kappa_max, kappa_step)

    point = basis.mean_curve_ + ahead @ xi
    return FunctionalForecast(
        point, point - kappa_lo * gamma, point + kappa_hi * gamma, level, method,
        np.asarray(ahead, dtype=float), None,
        extras={"kappa_lo": kappa_lo, "kappa_hi": kappa_hi, "gamma": gamma,
                "in_sample_coverage": achieved},
    )


def _search_kappas(u: np.ndarray, level: float, kappa_max: float, kappa_step: float):
    """Cheapest (kappa_lo, kappa_hi) grid pair with empirical coverage >= level.

    Ties in kappa_lo + kappa_hi prefer the most symmetric pair. Returns
    the achieved coverage as third element.
    """
    n = u.size
    if n == 0:
        return 0.0, 0.0, 1.0
    neg = np.sort(-u[u < 0])
    pos = np.sort(u[u >= 0])
    grid = np.arange(0.0, kappa_max + kappa_step / 2.0, kappa_step)
    cn = np.searchsorted(neg, grid + 1e-12, side="right")
    cp = np.searchsorted(pos, grid + 1e-12, side="right")
    required = level * n - 1e-9

    best = None
    for i, klo in enumerate(grid):
        need = required - cn[i]
        if need > cp[-1]:
            continue
        jdx = int(np.searchsorted(cp, need, side="left"))
        khi = grid[jdx]
        total = klo + khi
        asym = abs(klo - khi)
        key = (round(total, 10), round(asym, 10))
        if best is None or key < best[0]:
            best = (key, klo, khi, (cn[i] + cp[jdx]) / n)
    if best is None:
        return float(grid[-1]), float(grid[-1]), float((cn[-1] + cp[-1]) / n)
    return float(best[1]), float(best[2]), float(best[3])


# ---------------------------------------------------------------------------
# Rolling one-day-ahead backtest
# ---------------------------------------------------------------------------

@dataclass
class BacktestConfig:
    window: int = 250
    horizon_days: int = 10
    delta: float = 0.85
    level: float = 0.95
    methods: tuple = ("argarch", "arma_aue", "var_sbekk", "var_aue")
    weight: float = 1.0
    variance_targeting: bool = True
    aue_refit_var: str = "expanding"
    aue_refit_arma: str = "full"  # expanding auto-ARMA refits are very slow
    threads: int = 1
    keep_forecasts: bool = True


_METHOD_TAGS = {"argarch": METHOD_ARGARCH, "arma_aue": METHOD_ARMA_AUE,
                "var_sbekk": METHOD_VAR_SBEKK, "var_aue": METHOD_VAR_AUE}


def _forecast_one_day(values: np.ndarray, day: int, config: BacktestConfig):
    """Fit on the trailing window and produce every requested method's forecast."""
    window = values[day - config.window: day]
    mean_curve = window.mean(axis=0)
    demeaned = window - mean_curve
    panel = ReturnCurvePanel(
        demeaned, np.arange(1, window.shape[1] + 1) / window.shape[1],
        np.arange(1, window.shape[0] + 1), True, mean_curve,
    )
    basis = FunctionalPCA(delta=config.delta, weight=config.weight).fit(panel)
    j = basis.n_components_
    scores = basis.scores_[:, :j]

    out: dict[str, FunctionalForecast] = {}
    errors: dict[str, str] = {}
    var_pair = None

    for name in config.methods:
        try:
            if name == "argarch":
                fits = fit_argarch_scores(scores)
                out[name] = forecast_argarch_day(basis, fits, config.level)
            elif name == "arma_aue":
                out[name] = aue_bands(panel, basis, "arma", config.level, config.aue_refit_arma)
            elif name == "var_sbekk":
                if var_pair is None:
                    var_pair = fit_var_sbekk(scores, config.variance_targeting)
                out[name] = forecast_sbekk_day(basis, *var_pair, config.level)
            elif name == "var_aue":
                out[name] = aue_bands(panel, basis, "var", config.level, config.aue_refit_var)
            else:
                raise ValueError(f"unknown method {name!r}")
        except (CurvecastError, np.linalg.LinAlgError) as exc:
            errors[name] = f"{type(exc).__name__}: {exc}"
    return day, out, errors, j


def rolling_backtest(panel: ReturnCurvePanel, config: BacktestConfig) -> BacktestReport:
    """Refit everything on a trailing window and score one-day-ahead forecasts.

    The panel should be on the raw (not demeaned) scale; each window is
    demeaned internally and the window mean is folded into the point
    forecast. Evaluation days are the last ``horizon_days`` days.
    """
    unknown = [m for m in config.methods if m not in _METHOD_TAGS]
    if unknown:
        raise ValueError(f"unknown methods {unknown}")
    values = panel.values if isinstance(panel, ReturnCurvePanel) else np.asarray(panel, dtype=float)
    n = values.shape[0]
    report = BacktestReport(meta={
        "window": config.window, "horizon_days": config.horizon_days,
        "delta": config.delta, "level": config.level,
        "methods": list(config.methods),
    })
    if config.horizon_days == 0:
        return report
    if n < config.window + config.horizon_days:
        raise InsufficientHistory(
            f"need at least window + horizon_days = "
            f"{config.window + config.horizon_days} days, got {n}"
        )

    days = list(range(n - config.horizon_days, n))
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            day_results = list(pool.map(lambda d: _forecast_one_day(values, d, config), days))
    else:
        day_results = [_forecast_one_day(values, d, config) for d in days]
    day_results.sort(key=lambda r: r[0])

    pooled: dict[str, dict[str, list]] = {
        m: {"point": [], "lower": [], "upper": [], "realized": []} for m in config.methods
    }
    for day, forecasts, errors, j in day_results:
        realized = values[day]
        for name, msg in errors.items():
            report.failures.append({"day": int(day), "method": name, "error": msg})
        for name, fc in forecasts.items():
            scores_pp = interval_score(fc.lower, fc.upper, realized, 1.0 - config.level)
            record = {
                "day": int(day),
                "method": _METHOD_TAGS[name],
                "J": int(j),
                "rmse": rmse(fc.point, realized),
                "mae": mae(fc.point, realized),
                "sign_rate": sign_rate(fc.point, realized),
                "mean_interval_score": float(scores_pp.mean()),
                "coverage": coverage_rate(fc.lower, fc.upper, realized),
            }
            report.per_day.append(record)
            pooled[name]["point"].append(fc.point)
            pooled[name]["lower"].append(fc.lower)
            pooled[name]["upper"].append(fc.upper)
            pooled[name]["realized"].append(realized)
            if config.keep_forecasts:
                report.forecasts.append({"day": int(day), "method": _METHOD_TAGS[name],
                                         "forecast": fc, "realized": realized})

    pooled_errors: dict[str, np.ndarray] = {}
    for name in config.methods:
        if not pooled[name]["point"]:
            continue
        point = np.concatenate(pooled[name]["point"])
        lower = np.concatenate(pooled[name]["lower"])
        upper = np.concatenate(pooled[name]["upper"])
        realized = np.concatenate(pooled[name]["realized"])
        tag = _METHOD_TAGS[name]
        pooled_errors[tag] = realized - point
        report.aggregates[tag] = {
            "rmse": rmse(point, realized),
            "mae": mae(point, realized),
            "sign_rate": sign_rate(point, realized),
            "mean_interval_score": float(interval_score(lower, upper, realized, 1.0 - config.level).mean()),
            "coverage": coverage_rate(lower, upper, realized),
            "n_points": int(realized.size),
        }

    tags = list(pooled_errors)
    for ia in range(len(tags)):
        for ib in range(ia + 1, len(tags)):
            ea, eb = pooled_errors[tags[ia]], pooled_errors[tags[ib]]
            if ea.size == eb.size and ea.size >= 10:
                stat, pval = diebold_mariano(ea, eb, loss="squared")
                report.dm_tests.append({"method_a": tags[ia], "method_b": tags[ib],
                                        "statistic": stat, "p_value": pval})
    return report


def point_forecast_path(basis: FunctionalPCA, model, horizon: int) -> np.ndarray:
    """Multi-step point forecasts (no intervals) by iterating a fitted score model.

    ``model`` is either a list of per-score ArGarch fits or a Var1 fit.
    """
    j = basis.n_components_
    if isinstance(model, Var1):
        paths = model.forecast_path(horizon)
    else:
        paths = np.column_stack([m.forecast_path(horizon) for m in model])
        if paths.shape[1] != j:
            raise LengthMismatch(f"got {paths.shape[1]} score paths for truncation {j}")
    return basis.mean_curve_ + paths @ basis.eigenfunctions_[:j]


def save_forecast(fc: FunctionalForecast, prefix, realized=None, meta: Optional[dict] = None):
    """Write `<prefix>.csv` rows (t, point, lower, upper[, realized]) plus `<prefix>.json`."""
    import pandas as pd

    prefix = str(prefix)
    cols = {"t": np.arange(1, fc.point.size + 1), "point": fc.point,
            "lower": fc.lower, "upper": fc.upper}
    if realized is not None:
        cols["realized"] = np.asarray(realized, dtype=float)
    pd.DataFrame(cols).to_csv(prefix + ".csv", index=False, float_format="%.17g")
    payload = {"method": fc.method, "level": fc.level,
               "J": int(fc.score_forecasts.size)}
    payload.update(meta or {})
    with open(prefix + ".json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
