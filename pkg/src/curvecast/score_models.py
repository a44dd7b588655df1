"""Dynamic models for eigenscore series.

Per-score AR(1)-GARCH(1,1) and auto-order ARMA baselines, a joint VAR(1),
and a scalar-BEKK(1,1) volatility model for VAR residuals. The GARCH and
BEKK quasi-likelihoods are Gaussian and maximized on transformed
parameters so the stationarity/positivity constraints hold by
construction; recursions run through scipy.signal.lfilter so likelihood
evaluations stay vectorized.
"""

from __future__ import annotations

import json
import warnings

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter
from scipy.special import expit
from sklearn.base import BaseEstimator

from ._validation import as_matrix, as_vector
from .exceptions import (
    DegenerateSeries,
    NonConvergence,
    NonPsdH,
    SingularRegressor,
)

_MIN_OBS = 30
_BIG = 1e12


# ---------------------------------------------------------------------------
# AR(1)-GARCH(1,1)
# ---------------------------------------------------------------------------

def ar_garch_loglik(y, mu, a, varsigma0, zeta, varsigma, grad: bool = False):
    """Gaussian log-likelihood of an AR(1)-GARCH(1,1), optionally with its gradient.

    The variance recursion is initialized at the sample variance of the
    AR residuals implied by (mu, a); the gradient accounts for that
    dependence. Returns ll or (ll, grad) with the gradient ordered as
    (mu, a, varsigma0, zeta, varsigma).
    """
    y = np.asarray(y, dtype=float)
    y_lag = y[:-1]
    e = y[1:] - mu - a * y_lag
    m = e.size
    ebar = e.mean()
    ec = e - ebar
    init = float(np.mean(ec * ec))
    if not np.isfinite(init) or init <= 0.0:
        if grad:
            return -np.inf, np.zeros(5)
        return -np.inf

    # v[k] = varsigma0 + zeta * e[k-1]^2 + varsigma * v[k-1], v[0] = init
    drive = varsigma0 + zeta * e[:-1] ** 2
    v = np.empty(m)
    v[0] = init
    if m > 1:
        v[1:] = lfilter([1.0], [1.0, -varsigma], drive, zi=[varsigma * init])[0]
    if not np.all(np.isfinite(v)) or v.min() <= 0.0:
        if grad:
            return -np.inf, np.zeros(5)
        return -np.inf

    ll = -0.5 * float(np.sum(np.log(2.0 * np.pi) + np.log(v) + e * e / v))
    if not grad:
        return ll

    # d ll / d v and d ll / d e weights
    wv = (e * e - v) / (2.0 * v * v)
    we = -e / v

    de_mu = -1.0
    de_a = -y_lag
    dinit_mu = 0.0  # constant shift cancels in the centered variance
    dinit_a = float(-2.0 / m * np.sum(ec * (y_lag - y_lag.mean())))

    def _filter_dv(u, d0):
        dv = np.empty(m)
        dv[0] = d0
        if m > 1:
            dv[1:] = lfilter([1.0], [1.0, -varsigma], u, zi=[varsigma * d0])[0]
        return dv

    e_prev = e[:-1]
    dv_mu = _filter_dv(zeta * 2.0 * e_prev * de_mu, dinit_mu)
    dv_a = _filter_dv(zeta * 2.0 * e_prev * de_a[:-1], dinit_a)
    dv_w0 = _filter_dv(np.ones(m - 1), 0.0)
    dv_z = _filter_dv(e_prev ** 2, 0.0)
    dv_vs = _filter_dv(v[:-1], 0.0)

    g = np.array([
        float(np.sum(wv * dv_mu) + np.sum(we) * de_mu),
        float(np.sum(wv * dv_a) + np.sum(we * de_a)),
        float(np.sum(wv * dv_w0)),
        float(np.sum(wv * dv_z)),
        float(np.sum(wv * dv_vs)),
    ])
    return ll, g


def _unpack_argarch(theta):
    mu = theta[0]
    a = np.tanh(theta[1])
    w0 = np.exp(np.clip(theta[2], -60.0, 60.0))
    s = expit(theta[3])
    f = expit(theta[4])
    return mu, a, w0, s * f, s * (1.0 - f)


def _pack_argarch(mu, a, w0, zeta, varsigma):
    s = min(max(zeta + varsigma, 1e-8), 1.0 - 1e-8)
    f = min(max(zeta / s, 1e-8), 1.0 - 1e-8)
    return np.array([
        mu,
        np.arctanh(np.clip(a, -1.0 + 1e-10, 1.0 - 1e-10)),
        np.log(max(w0, 1e-60)),
        np.log(s / (1.0 - s)),
        np.log(f / (1.0 - f)),
    ])


class ArGarch(BaseEstimator):
    """AR(1) conditional mean with GARCH(1,1) innovation variance, joint Gaussian QMLE.

    Fitted attributes follow the model notation: ``mu_`` and ``a_`` for
    the mean equation, ``varsigma0_``, ``zeta_`` (squared-innovation
    coefficient) and ``varsigma_`` (lagged-variance coefficient) for the
    variance recursion. ``cond_var_path_`` and ``residuals_`` have the
    same length as the series; their first entry holds the recursion
    initialization and a zero placeholder respectively.
    """

    def __init__(self, n_starts: int = 3, maxiter: int = 300):
        self.n_starts = n_starts
        self.maxiter = maxiter

    def fit(self, y):
        y = as_vector(y, "series", min_len=_MIN_OBS)
        series_var = float(np.var(y))
        if series_var <= 0.0:
            raise DegenerateSeries("series has zero sample variance")

        # OLS AR(1) start values
        x, z = y[:-1], y[1:]
        denom = float(np.sum((x - x.mean()) ** 2))
        a0 = float(np.sum((x - x.mean()) * (z - z.mean())) / denom) if denom > 0 else 0.0
        a0 = float(np.clip(a0, -0.95, 0.95))
        mu0 = float(z.mean() - a0 * x.mean())
        v0 = max(float(np.var(z - mu0 - a0 * x)), 1e-12 * series_var)

        start_sf = [(0.90, 0.10 / 0.90), (0.50, 0.40), (0.02, 0.50)][: self.n_starts]
        results = []
        for s, f in start_sf:
            zeta0, vs0 = s * f, s * (1.0 - f)
            theta0 = _pack_argarch(mu0, a0, v0 * (1.0 - s), zeta0, vs0)
            history: list[float] = []

            def nll_and_grad(theta):
                mu, a, w0, zt, vs = _unpack_argarch(theta)
                ll, g = ar_garch_loglik(y, mu, a, w0, zt, vs, grad=True)
                if not np.isfinite(ll):
                    return _BIG, np.zeros(5)
                s_ = zt + vs
                f_ = zt / s_ if s_ > 0 else 0.5
                jac = np.array([
                    g[0],
                    g[1] * (1.0 - a * a),
                    g[2] * w0,
                    (g[3] * f_ + g[4] * (1.0 - f_)) * s_ * (1.0 - s_),
                    (g[3] - g[4]) * s_ * f_ * (1.0 - f_),
                ])
                return -ll, -jac

            def track(theta):
                history.append(float(nll_and_grad(theta)[0]))

            opt = minimize(
                nll_and_grad, theta0, jac=True, method="L-BFGS-B",
                callback=track, options={"maxiter": self.maxiter},
            )
            results.append((float(opt.fun), opt, history))

        results.sort(key=lambda r: r[0])
        best_fun, best, best_hist = results[0]
        if not np.isfinite(best_fun) or best_fun >= _BIG:
            raise NonConvergence(
                "AR-GARCH likelihood could not be evaluated at any candidate",
                diagnostics={"starts": len(results), "funs": [r[0] for r in results]},
            )

        mu, a, w0, zt, vs = _unpack_argarch(best.x)
        self.mu_, self.a_ = float(mu), float(a)
        self.varsigma0_, self.zeta_, self.varsigma_ = float(w0), float(zt), float(vs)
        self.loglik_ = -best_fun
        self.series_var_ = series_var
        self.endog_ = y

        e = y[1:] - self.mu_ - self.a_ * y[:-1]
        init = float(np.var(e))
        drive = self.varsigma0_ + self.zeta_ * e[:-1] ** 2
        v = np.empty(e.size)
        v[0] = init
        if e.size > 1:
            v[1:] = lfilter([1.0], [1.0, -self.varsigma_], drive, zi=[self.varsigma_ * init])[0]
        self.residuals_ = np.concatenate([[0.0], e])
        self.cond_var_path_ = np.concatenate([[init], v])
        self.convergence_ = {
            "converged": bool(best.success),
            "iterations": int(best.nit),
            "grad_norm": float(np.max(np.abs(best.jac))),
            "restarts": len(results),
            "objective_path": [float(f) for f in best_hist],
            "message": str(best.message),
        }
        return self

    def forecast(self, last_obs=None, last_var=None, last_resid=None):
        """One-step conditional mean and variance from the end-of-sample state."""
        if last_obs is None:
            last_obs = float(self.endog_[-1])
        if last_var is None:
            last_var = float(self.cond_var_path_[-1])
        if last_resid is None:
            last_resid = float(self.residuals_[-1])
        mean = self.mu_ + self.a_ * last_obs
        variance = self.varsigma0_ + self.zeta_ * last_resid ** 2 + self.varsigma_ * last_var
        return float(mean), float(variance)

    def forecast_path(self, horizon: int):
        """Multi-step point forecast by iterating the mean recursion (no intervals)."""
        means = np.empty(horizon)
        prev = float(self.endog_[-1])
        for h in range(horizon):
            prev = self.mu_ + self.a_ * prev
            means[h] = prev
        return means

    def state_path(self, y):
        """Residual and conditional-variance paths on a new series, parameters fixed.

        Both outputs align with ``y``; index 0 holds the zero residual
        placeholder and the recursion initialization.
        """
        y = as_vector(y, "series", min_len=2)
        e = y[1:] - self.mu_ - self.a_ * y[:-1]
        init = float(np.var(e))
        drive = self.varsigma0_ + self.zeta_ * e[:-1] ** 2
        v = np.empty(e.size)
        v[0] = init
        if e.size > 1:
            v[1:] = lfilter([1.0], [1.0, -self.varsigma_], drive, zi=[self.varsigma_ * init])[0]
        return np.concatenate([[0.0], e]), np.concatenate([[init], v])

    def to_dict(self) -> dict:
        return {
            "model": "ar_garch",
            "mu": self.mu_, "a": self.a_,
            "varsigma0": self.varsigma0_, "zeta": self.zeta_, "varsigma": self.varsigma_,
            "loglik": self.loglik_,
            "series_var": self.series_var_,
            "convergence": {k: v for k, v in self.convergence_.items() if k != "objective_path"},
            "unit_variance_diagnostic": check_unit_variance_constraints(self),
        }


def forecast_ar_garch(fit: ArGarch, last_obs: float, last_var: float, last_resid: float):
    return fit.forecast(last_obs, last_var, last_resid)


# ---------------------------------------------------------------------------
# ARMA(p,q) baseline with automatic order selection
# ---------------------------------------------------------------------------

class ArmaAuto(BaseEstimator):
    """Gaussian ARMA fit over a (p, q) grid, picking the minimum-AICc orders.

    If no grid cell converges the model falls back to an AR(1) least
    squares fit and sets ``fallback_``.
    """

    def __init__(self, p_max: int = 2, q_max: int = 2):
        self.p_max = p_max
        self.q_max = q_max

    def fit(self, y):
        y = as_vector(y, "series", min_len=_MIN_OBS)
        if float(np.var(y)) <= 0.0:
            raise DegenerateSeries("series has zero sample variance")
        from statsmodels.tsa.arima.model import ARIMA

        best = None
        for p in range(self.p_max + 1):
            for q in range(self.q_max + 1):
                try:
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore")
                        res = ARIMA(y, order=(p, 0, q), trend="c").fit()
                    aicc = float(res.aicc)
                    if not np.isfinite(aicc):
                        continue
                    if best is None or aicc < best[0] - 1e-10:
                        best = (aicc, p, q, res)
                except Exception:
                    continue

        if best is None:
            x, z = y[:-1], y[1:]
            denom = float(np.sum((x - x.mean()) ** 2))
            a0 = float(np.sum((x - x.mean()) * (z - z.mean())) / denom) if denom > 0 else 0.0
            a0 = float(np.clip(a0, -0.99, 0.99))
            c0 = float(z.mean() - a0 * x.mean())
            resid = z - c0 - a0 * x
            self.p_, self.q_ = 1, 0
            self.ar_coefs_ = np.array([a0])
            self.ma_coefs_ = np.array([])
            self.intercept_ = c0
            self.innov_var_ = float(np.var(resid))
            self.residuals_ = np.concatenate([[0.0], resid])
            self.aicc_ = np.nan
            self.fallback_ = True
            self._res = None
            self.endog_ = y
            return self

        aicc, p, q, res = best
        self.p_, self.q_ = int(p), int(q)
        self.ar_coefs_ = np.asarray(res.arparams, dtype=float)
        self.ma_coefs_ = np.asarray(res.maparams, dtype=float)
        self.intercept_ = float(res.params[0]) if "const" in res.param_names else 0.0
        self.innov_var_ = float(res.params[-1])
        self.residuals_ = np.asarray(res.resid, dtype=float)
        self.aicc_ = aicc
        self.fallback_ = False
        self._res = res
        self.endog_ = y
        return self

    def forecast(self, horizon: int = 1):
        """Point forecasts and forecast variances for 1..horizon steps ahead."""
        if self._res is not None:
            fc = self._res.get_forecast(horizon)
            return (np.asarray(fc.predicted_mean, dtype=float),
                    np.asarray(fc.var_pred_mean, dtype=float))
        means = np.empty(horizon)
        prev = float(self.endog_[-1])
        acc_var = 0.0
        variances = np.empty(horizon)
        a = float(self.ar_coefs_[0])
        for h in range(horizon):
            prev = self.intercept_ + a * prev
            means[h] = prev
            acc_var = self.innov_var_ + a * a * acc_var
            variances[h] = acc_var
        return means, variances

    def in_sample_one_step(self) -> np.ndarray:
        """One-step-ahead in-sample predicted means, aligned with the series."""
        if self._res is not None:
            return np.asarray(self._res.get_prediction(dynamic=False).predicted_mean, dtype=float)
        a = float(self.ar_coefs_[0])
        pred = np.empty_like(self.endog_)
        pred[0] = self.intercept_ / (1.0 - a) if abs(a) < 1 else self.endog_[0]
        pred[1:] = self.intercept_ + a * self.endog_[:-1]
        return pred

    def apply_one_step(self, y) -> np.ndarray:
        """One-step-ahead predicted means on a new series, parameters fixed."""
        y = as_vector(y, "series", min_len=2)
        if self._res is not None:
            applied = self._res.apply(y)
            return np.asarray(applied.get_prediction(dynamic=False).predicted_mean, dtype=float)
        a = float(self.ar_coefs_[0])
        pred = np.empty_like(y)
        pred[0] = self.intercept_ / (1.0 - a) if abs(a) < 1 else y[0]
        pred[1:] = self.intercept_ + a * y[:-1]
        return pred

    def to_dict(self) -> dict:
        return {
            "model": "arma",
            "p": self.p_, "q": self.q_,
            "ar_coefs": self.ar_coefs_.tolist(),
            "ma_coefs": self.ma_coefs_.tolist(),
            "intercept": self.intercept_,
            "innov_var": self.innov_var_,
            "aicc": None if np.isnan(self.aicc_) else self.aicc_,
            "fallback": self.fallback_,
        }


# ---------------------------------------------------------------------------
# VAR(1) on the joint score vector
# ---------------------------------------------------------------------------

class Var1(BaseEstimator):
    """Equation-by-equation least squares VAR(1) with intercept."""

    def fit(self, scores):
        scores = as_matrix(scores, "scores")
        n, j = scores.shape
        if n < j + 2:
            raise ValueError(f"need at least J + 2 = {j + 2} rows, got {n}")
        x = np.column_stack([np.ones(n - 1), scores[:-1]])
        if np.linalg.matrix_rank(x) < j + 1:
            raise SingularRegressor("lagged score columns are collinear")
        coef, *_ = np.linalg.lstsq(x, scores[1:], rcond=None)
        self.intercept_ = coef[0].copy()
        self.Pi1_ = coef[1:].T.copy()
        self.residuals_ = scores[1:] - x @ coef
        m = self.residuals_.shape[0]
        self.Sigma_resid_ = self.residuals_.T @ self.residuals_ / m
        self.spectral_radius_ = float(np.abs(np.linalg.eigvals(self.Pi1_)).max())
        if self.spectral_radius_ >= 1.0:
            warnings.warn(
                f"VAR(1) is nonstationary on this sample (spectral radius "
                f"{self.spectral_radius_:.3f})", RuntimeWarning,
            )
        centered = scores - scores.mean(axis=0)
        self.score_marginal_cov_ = centered.T @ centered / n
        self.endog_ = scores
        return self

    def forecast(self, last_scores=None) -> np.ndarray:
        if last_scores is None:
            last_scores = self.endog_[-1]
        return self.intercept_ + self.Pi1_ @ np.asarray(last_scores, dtype=float)

    def forecast_path(self, horizon: int) -> np.ndarray:
        out = np.empty((horizon, self.Pi1_.shape[0]))
        prev = self.endog_[-1]
        for h in range(horizon):
            prev = self.intercept_ + self.Pi1_ @ prev
            out[h] = prev
        return out

    def in_sample_one_step(self, scores=None) -> np.ndarray:
        """Predicted score vectors for rows 1..N-1 given rows 0..N-2."""
        s = self.endog_ if scores is None else as_matrix(scores, "scores")
        return self.intercept_ + s[:-1] @ self.Pi1_.T

    def to_dict(self) -> dict:
        return {
            "model": "var1",
            "Pi1": self.Pi1_.tolist(),
            "intercept": self.intercept_.tolist(),
            "Sigma_resid": self.Sigma_resid_.tolist(),
            "spectral_radius": self.spectral_radius_,
        }


# ---------------------------------------------------------------------------
# Scalar BEKK(1,1)
# ---------------------------------------------------------------------------

def _sbekk_h_path(eps, b, a, g, h1):
    """H_1 = h1; H_i = b + a eps_{i-1} eps_{i-1}' + g H_{i-1} via a linear filter."""
    m, j = eps.shape
    h = np.empty((m, j, j))
    h[0] = h1
    if m > 1:
        outer = np.einsum("ij,ik->ijk", eps[:-1], eps[:-1])
        drive = (b + a * outer).reshape(m - 1, j * j)
        zi = (g * h1).reshape(1, j * j)
        h[1:] = lfilter([1.0], [1.0, -g], drive, axis=0, zi=zi)[0].reshape(m - 1, j, j)
    return h


def _sbekk_nll(eps, h):
    """0.5 * sum over i >= 2 of (J log 2pi + log det H_i + eps_i' H_i^-1 eps_i)."""
    m, j = eps.shape
    try:
        chol = np.linalg.cholesky(h[1:])
    except np.linalg.LinAlgError:
        return None
    logdet = 2.0 * np.sum(np.log(np.einsum("ijj->ij", chol)), axis=1)
    z = np.linalg.solve(chol, eps[1:, :, None])[..., 0]
    quad = np.sum(z * z, axis=1)
    return 0.5 * float(np.sum(j * np.log(2.0 * np.pi) + logdet + quad))


def _tril_indices(j):
    return np.tril_indices(j)


class ScalarBekk(BaseEstimator):
    """Scalar BEKK(1,1) conditional covariance, Gaussian QMLE.

    H_i = C C' + a eps_{i-1} eps_{i-1}' + g H_{i-1}, with H_1 set to the
    sample covariance. With variance targeting (default) C C' is pinned
    at (1 - a - g) * sample covariance, leaving (a, g) free; otherwise the
    lower-triangular C is estimated too.
    """

    def __init__(self, variance_targeting: bool = True, n_starts: int = 3, maxiter: int = 500):
        self.variance_targeting = variance_targeting
        self.n_starts = n_starts
        self.maxiter = maxiter

    def fit(self, residuals):
        eps = as_matrix(residuals, "residuals")
        m, j = eps.shape
        if m < j + 2:
            raise ValueError(f"need more rows than {j + 2}, got {m}")
        if m < 10 * j:
            warnings.warn(
                f"only {m} residual rows for J={j}; scalar BEKK estimates may be fragile",
                RuntimeWarning,
            )
        col_scale = np.sqrt(np.mean(eps ** 2, axis=0))
        if np.any(col_scale <= 0):
            raise DegenerateSeries("a residual column is identically zero")
        if np.any(np.abs(eps.mean(axis=0)) > 0.25 * col_scale):
            warnings.warn("residuals do not look column-centered", RuntimeWarning)

        sigma = eps.T @ eps / m
        h1 = sigma
        tril = _tril_indices(j)
        diag_pos = np.arange(j) * (np.arange(1, j + 1) + 2) // 2  # positions of diagonal in vech
        n_tril = j * (j + 1) // 2

        def unpack(theta):
            s = expit(theta[0])
            f = expit(theta[1])
            a, g = s * f, s * (1.0 - f)
            if self.variance_targeting:
                b = (1.0 - a - g) * sigma
                c = None
            else:
                vech = np.array(theta[2:], dtype=float)
                vech = vech.copy()
                vech[diag_pos] = np.exp(np.clip(vech[diag_pos], -40.0, 40.0))
                c = np.zeros((j, j))
                c[tril] = vech
                b = c @ c.T
            return a, g, b, c

        feasible_seen = {"any": False}

        def nll(theta):
            a, g, b, _ = unpack(theta)
            h = _sbekk_h_path(eps, b, a, g, h1)
            val = _sbekk_nll(eps, h)
            if val is None or not np.isfinite(val):
                return _BIG
            feasible_seen["any"] = True
            return val

        starts_ag = [(0.05, 0.90), (0.10, 0.80), (0.25, 0.50)][: self.n_starts]
        theta0s = []
        for a0, g0 in starts_ag:
            s0 = a0 + g0
            f0 = a0 / s0
            head = [np.log(s0 / (1 - s0)), np.log(f0 / (1 - f0))]
            if self.variance_targeting:
                theta0s.append(np.array(head))
            else:
                c0 = np.linalg.cholesky((1.0 - a0 - g0) * sigma + 1e-10 * np.eye(j))
                vech0 = c0[tril].copy()
                vech0[diag_pos] = np.log(np.maximum(vech0[diag_pos], 1e-10))
                theta0s.append(np.concatenate([head, vech0]))

        results = []
        for theta0 in theta0s:
            opt = minimize(nll, theta0, method="L-BFGS-B", options={"maxiter": self.maxiter})
            results.append((float(opt.fun), opt))
        results.sort(key=lambda r: r[0])
        best_fun, best = results[0]
        if not np.isfinite(best_fun) or best_fun >= _BIG:
            if not feasible_seen["any"]:
                raise NonPsdH(
                    "no candidate parameters produced a positive definite variance path"
                )
            raise NonConvergence("scalar BEKK estimation failed at every start")

        a, g, b, c = unpack(best.x)
        if c is None:
            c = np.linalg.cholesky(b + 1e-14 * np.eye(j))
        self.a_, self.g_ = float(a), float(g)
        self.C_ = c
        self.H_path_ = _sbekk_h_path(eps, c @ c.T, a, g, h1)
        self.loglik_ = -best_fun
        self.Sigma_marginal_ = (c @ c.T) / max(1.0 - a - g, 1e-12)
        self.residuals_ = eps
        self.convergence_ = {
            "converged": bool(best.success),
            "iterations": int(best.nit),
            "grad_norm": float(np.max(np.abs(best.jac))),
            "restarts": len(results),
            "variance_targeting": bool(self.variance_targeting),
            "message": str(best.message),
        }
        return self

    def forecast(self, last_resid=None, last_h=None) -> np.ndarray:
        """One-step conditional covariance C C' + a ee' + g H."""
        if last_resid is None:
            last_resid = self.residuals_[-1]
        if last_h is None:
            last_h = self.H_path_[-1]
        last_resid = np.asarray(last_resid, dtype=float)
        return self.C_ @ self.C_.T + self.a_ * np.outer(last_resid, last_resid) + self.g_ * np.asarray(last_h, dtype=float)

    def h_path(self, residuals, h1=None) -> np.ndarray:
        """Conditional covariance path on new residuals, parameters fixed.

        h1 defaults to the sample covariance of the supplied residuals.
        """
        eps = as_matrix(residuals, "residuals")
        if h1 is None:
            h1 = eps.T @ eps / eps.shape[0]
        return _sbekk_h_path(eps, self.C_ @ self.C_.T, self.a_, self.g_, np.asarray(h1, dtype=float))

    def to_dict(self) -> dict:
        return {
            "model": "sbekk",
            "C": self.C_.tolist(),
            "a": self.a_, "g": self.g_,
            "loglik": self.loglik_,
            "convergence": self.convergence_,
        }


def forecast_sbekk(fit: ScalarBekk, last_resid, last_h) -> np.ndarray:
    return fit.forecast(last_resid, last_h)


def fit_var_sbekk(scores, variance_targeting: bool = True) -> tuple[Var1, ScalarBekk]:
    """Two-step joint model: VAR(1) on scores, scalar BEKK on its residuals."""
    var_fit = Var1().fit(scores)
    bekk_fit = ScalarBekk(variance_targeting=variance_targeting).fit(var_fit.residuals_)
    return var_fit, bekk_fit


# ---------------------------------------------------------------------------
# Unit-marginal-variance diagnostic
# ---------------------------------------------------------------------------

def check_unit_variance_constraints(fit, bekk_fit=None, scores=None) -> dict:
    """Report how far a fit sits from the unit-marginal-variance identities.

    For an ArGarch fit: compares 1 - a^2 against varsigma0 / (sigma_beta^2
    * (1 - zeta - varsigma)), where sigma_beta^2 is the sample variance of
    the modeled series (1.0 when unknown). For a (Var1, ScalarBekk) pair:
    compares (S - Pi Pi' S) against C C' / (1 - a - g) after rescaling all
    quantities to the standardized-score scale, S being the marginal score
    covariance. Diagnostic only, never enforced during estimation.
    """
    if isinstance(fit, tuple) and bekk_fit is None:
        fit, bekk_fit = fit

    if bekk_fit is None:
        a = float(fit.a_)
        sig_beta2 = float(getattr(fit, "series_var_", 1.0))
        persistence = float(fit.zeta_) + float(fit.varsigma_)
        lhs = 1.0 - a * a
        rhs = float(fit.varsigma0_) / (sig_beta2 * (1.0 - persistence))
        resid = abs(lhs - rhs)
        scale = max(abs(rhs), 1e-12)
        return {
            "kind": "univariate",
            "lhs": lhs,
            "rhs": rhs,
            "abs_residual": resid,
            "rel_residual": resid / scale,
            "satisfied": bool(resid / scale < 1e-6),
        }

    var_fit, sb = fit, bekk_fit
    if scores is not None:
        scores = as_matrix(scores, "scores")
        centered = scores - scores.mean(axis=0)
        s_marg = centered.T @ centered / scores.shape[0]
    else:
        s_marg = np.asarray(var_fit.score_marginal_cov_, dtype=float)
    d = np.sqrt(np.clip(np.diag(s_marg), 1e-300, None))
    pi_std = (var_fit.Pi1_ / d[:, None]) * d[None, :]
    cct_std = (sb.C_ @ sb.C_.T) / np.outer(d, d)
    s_std = s_marg / np.outer(d, d)
    lhs = s_std - pi_std @ pi_std.T @ s_std
    rhs = cct_std / max(1.0 - sb.a_ - sb.g_, 1e-12)
    resid = float(np.linalg.norm(lhs - rhs, "fro"))
    scale = max(float(np.linalg.norm(lhs, "fro")), 1e-12)
    return {
        "kind": "multivariate",
        "abs_residual": resid,
        "rel_residual": resid / scale,
        "lhs": lhs.tolist(),
        "rhs": rhs.tolist(),
        "satisfied": bool(resid / scale < 1e-6),
    }


def save_fit(fit, path) -> None:
    """Serialize any score-model fit (parameters + convergence metadata) to JSON."""
    with open(path, "w") as fh:
        json.dump(fit.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
