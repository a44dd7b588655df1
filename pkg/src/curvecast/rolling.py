"""Intraday forecasting of an incomplete day via two shifted-panel FPCAs.

A conventional-day panel and an auxiliary panel shifted back by k grid
steps are decomposed separately; the auxiliary scores of the incomplete
day predict the conventional-day scores through a per-response linear
regression, and the rebuilt curve's last k values are the forecast of
the unobserved tail.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import as_matrix, as_vector
from .exceptions import BadHorizon, InsufficientData, SingularDesign
from .fpca import FunctionalPCA


@dataclass
class ShiftedPanelPair:
    """Aligned conventional-day and k-step-back-shifted panels.

    The auxiliary panel has exactly one more curve than the target panel:
    its last curve ends at the incomplete day's observed prefix. Both
    panels are stored demeaned with their own sample means; the raw
    blocks are kept for overlap bookkeeping.
    """

    target_values: np.ndarray  # (n_days - 1, T) demeaned
    aux_values: np.ndarray  # (n_days, T) demeaned
    target_mean: np.ndarray
    aux_mean: np.ndarray
    target_raw: np.ndarray
    aux_raw: np.ndarray
    k: int

    @property
    def n_points(self) -> int:
        return self.target_values.shape[1]

    @property
    def n_days(self) -> int:
        return self.aux_values.shape[0]

    @property
    def overlap(self) -> int:
        return self.n_points - self.k


def build_shifted_panels(returns, n_points: int, k: int, n_days: int) -> ShiftedPanelPair:
    """Slice a flat return sequence into the target/auxiliary panel pair.

    The sequence must end at the incomplete day's last observed return;
    n_days auxiliary curves (each ending T - k steps into a conventional
    day) and n_days - 1 complete conventional-day curves are carved out
    backwards from there.
    """
    r = as_vector(returns, "returns", min_len=2)
    t = int(n_points)
    if t < 2:
        raise BadHorizon(f"need at least 2 grid points, got {t}")
    if not 1 <= k < t:
        raise BadHorizon(f"horizon k must be in [1, {t - 1}], got {k}")
    if n_days < 2:
        raise InsufficientData(f"need at least 2 days, got {n_days}")
    needed = n_days * t
    if r.size < needed:
        raise InsufficientData(f"need {needed} returns for {n_days} days of {t}, got {r.size}")

    length = r.size
    aux_raw = r[length - n_days * t:].reshape(n_days, t).copy()
    target_end = length - (t - k)
    target_raw = r[target_end - (n_days - 1) * t: target_end].reshape(n_days - 1, t).copy()

    aux_mean = aux_raw.mean(axis=0)
    target_mean = target_raw.mean(axis=0)
    return ShiftedPanelPair(
        target_raw - target_mean, aux_raw - aux_mean,
        target_mean, aux_mean, target_raw, aux_raw, int(k),
    )


# closed set of linear estimators for the score regression; nonlinear
# learners (SVM-style, tree ensembles) would slot in behind the same
# fit/predict surface if ever needed
ESTIMATORS = ("ols", "ridge", "lasso")


def _lasso_cd(x, y, penalty, tol=1e-12, max_iter=10000):
    """Coordinate descent for (1/2n)||y - Xc||^2 + penalty * ||c||_1."""
    n, p = x.shape
    norms = np.sum(x * x, axis=0) / n
    c = np.zeros(p)
    resid = y.copy()
    scale = max(1.0, float(np.abs(y).max()))
    for _ in range(max_iter):
        max_delta = 0.0
        for jj in range(p):
            if norms[jj] <= 0.0:
                continue
            old = c[jj]
            rho = float(x[:, jj] @ resid) / n + norms[jj] * old
            new = np.sign(rho) * max(abs(rho) - penalty, 0.0) / norms[jj]
            if new != old:
                resid -= (new - old) * x[:, jj]
                c[jj] = new
                max_delta = max(max_delta, abs(new - old))
        if max_delta < tol * scale:
            break
    return c


class CrossScoreRegression(BaseEstimator):
    """Per-response linear map from auxiliary scores to target scores.

    estimator='ols' solves least squares per response column;
    'ridge' adds an L2 penalty and 'lasso' an L1 penalty (coordinate
    descent), both applied on scale-standardized regressors so the
    penalty is comparable across score magnitudes. With penalty=0 the
    penalized estimators reduce to OLS.
    """

    def __init__(self, estimator: str = "ols", penalty: float = 0.0):
        self.estimator = estimator
        self.penalty = penalty

    def fit(self, alpha_scores, beta_scores):
        x = as_matrix(alpha_scores, "alpha_scores")
        y = as_matrix(beta_scores, "beta_scores")
        if x.shape[0] != y.shape[0]:
            raise ValueError("alpha and beta score matrices must have equal row counts")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}, got {self.estimator!r}")
        if self.penalty < 0:
            raise ValueError("penalty must be nonnegative")
        n, p = x.shape

        if self.estimator == "ols":
            if np.linalg.matrix_rank(x) < p:
                raise SingularDesign("auxiliary score columns are collinear")
            coefs, *_ = np.linalg.lstsq(x, y, rcond=None)
        else:
            scale = np.sqrt(np.mean(x * x, axis=0))
            scale = np.where(scale > 0, scale, 1.0)
            xs = x / scale
            if self.estimator == "ridge":
                gram = xs.T @ xs + self.penalty * np.eye(p)
                coefs_s = np.linalg.solve(gram, xs.T @ y)
            else:
                coefs_s = np.column_stack([
                    _lasso_cd(xs, y[:, jj], self.penalty) for jj in range(y.shape[1])
                ])
            coefs = coefs_s / scale[:, None]

        self.coefs_ = coefs
        fitted = x @ coefs
        ss_res = np.sum((y - fitted) ** 2, axis=0)
        ss_tot = np.sum((y - y.mean(axis=0)) ** 2, axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            r2 = 1.0 - ss_res / ss_tot
        r2 = np.where(ss_tot > 0, r2, np.where(ss_res <= 1e-12, 1.0, 0.0))
        self.r2_ = r2
        return self

    def predict(self, alpha_scores) -> np.ndarray:
        a = np.atleast_2d(np.asarray(alpha_scores, dtype=float))
        return a @ self.coefs_


def fit_cross_regression(alpha_scores, beta_scores, estimator: str = "ols",
                         penalty: float = 0.0) -> CrossScoreRegression:
    return CrossScoreRegression(estimator, penalty).fit(alpha_scores, beta_scores)


@dataclass
class RollingForecastResult:
    forecast_tail: np.ndarray
    full_curve: np.ndarray
    n_components: int
    regression: CrossScoreRegression
    extras: dict = field(default_factory=dict)


def rolling_forecast(pair: ShiftedPanelPair, delta: float = 0.85, estimator: str = "ols",
                     penalty: float = 0.0) -> RollingForecastResult:
    """Predict the incomplete day's last k returns from the shifted-panel pair.

    The truncation J comes from the CPV rule on the auxiliary panel
    (clipped to what both decompositions support); the same J is used for
    both score sets so the regression coefficient matrix is square.
    """
    aux_basis = FunctionalPCA(delta=delta).fit(pair.aux_values)
    target_basis = FunctionalPCA(delta=delta).fit(pair.target_values)
    j = min(aux_basis.n_components_, aux_basis.j_max_, target_basis.j_max_)

    alpha = aux_basis.scores_[:, :j]
    beta = target_basis.scores_[:, :j]
    reg = CrossScoreRegression(estimator, penalty).fit(alpha[:-1], beta)
    beta_next = reg.predict(alpha[-1])[0]

    full_curve = pair.target_mean + beta_next @ target_basis.eigenfunctions_[:j]
    tail = full_curve[pair.overlap:]
    return RollingForecastResult(
        tail, full_curve, j, reg,
        extras={"mean_r2": float(np.mean(reg.r2_)), "aux_cpv_j": int(aux_basis.n_components_)},
    )


def horizon_diagnostic(returns, n_points: int, k_range, delta: float = 0.85,
                       estimator: str = "ols", penalty: float = 0.0,
                       n_days: Optional[int] = None) -> list[dict]:
    """Mean step-5 regression R-squared at each horizon k, for decay plots."""
    r = as_vector(returns, "returns", min_len=n_points)
    rows = []
    for k in k_range:
        days = n_days if n_days is not None else r.size // n_points
        result = rolling_forecast(
            build_shifted_panels(r, n_points, int(k), days), delta, estimator, penalty
        )
        rows.append({"k": int(k), "mean_r2": float(np.mean(result.regression.r2_)),
                     "n_components": result.n_components})
    return rows


def rolling_origin_backtest(returns, n_points: int, k: int, window_days: int,
                            n_forecasts: int, delta: float = 0.85,
                            estimator: str = "ols", penalty: float = 0.0) -> dict:
    """Sequential one-origin-per-grid-step backtest of the k-step tail forecast.

    Each origin uses the trailing window_days days; the forecast is
    evaluated at the final tail point (the k-step-ahead return).
    """
    r = as_vector(returns, "returns", min_len=2)
    history = window_days * n_points
    first_origin = r.size - k - (n_forecasts - 1)
    if first_origin < history:
        raise InsufficientData(
            f"need {history + k + n_forecasts - 1} returns, got {r.size}"
        )
    rows = []
    for o in range(n_forecasts):
        p = first_origin + o
        pair = build_shifted_panels(r[:p], n_points, k, window_days)
        result = rolling_forecast(pair, delta, estimator, penalty)
        forecast = float(result.forecast_tail[-1])
        realized = float(r[p + k - 1])
        rows.append({
            "origin": int(p),
            "forecast": forecast,
            "realized": realized,
            "sign_hit": int(np.sign(forecast) == np.sign(realized)),
        })
    forecasts = np.array([row["forecast"] for row in rows])
    realizeds = np.array([row["realized"] for row in rows])
    return {
        "rows": rows,
        "rmse": float(np.sqrt(np.mean((forecasts - realizeds) ** 2))),
        "sign_rate": float(np.mean([row["sign_hit"] for row in rows])),
        "estimator": estimator,
        "penalty": penalty,
        "window_days": window_days,
        "k": int(k),
    }


def rolling_window_search(returns, n_points: int, k: int, window_range,
                          n_forecasts: int, delta: float = 0.85,
                          estimator: str = "ols", penalty: float = 0.0) -> dict:
    """Backtest every window size in window_range; the best sign rate wins."""
    summaries = [
        rolling_origin_backtest(returns, n_points, k, int(w), n_forecasts,
                                delta, estimator, penalty)
        for w in window_range
    ]
    best = max(summaries, key=lambda s: (s["sign_rate"], -s["rmse"]))
    return {"summaries": summaries, "best": best}
