"""Principal component decomposition of daily curve panels.

The panel is treated as N vectors on a T-point grid. The covariance
matrix C[t,s] = (1/N) sum_i X_i(t) X_i(s) is eigendecomposed under the
grid inner product <x,y> = w * sum_t x(t) y(t). With the default w=1 the
scores coincide with a plain PCA; w=1/T rescales to an integral-style
inner product without changing the retained subspace.
"""

from __future__ import annotations

import json
import warnings

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import as_matrix, as_vector
from .curves import ReturnCurvePanel
from .exceptions import (
    AllZeroEigenvalues,
    DegeneratePanel,
    IndexOutOfRange,
    NotDemeaned,
)

# below this gap (relative to the top eigenvalue) two eigenvalues are
# reported as near-degenerate: their ordering is numerically arbitrary
NEAR_DEGENERATE_RTOL = 1e-10


def select_num_components(eigenvalues, delta: float) -> int:
    """Smallest J whose leading eigenvalues explain a fraction >= delta.

    The denominator counts positive eigenvalues only.
    """
    lam = as_vector(eigenvalues, "eigenvalues")
    if np.any(np.diff(lam) > 1e-12 * max(1.0, lam[0] if lam.size else 1.0)):
        raise ValueError("eigenvalues must be nonincreasing")
    if np.any(lam < -1e-12 * max(1.0, abs(float(lam[0])))):
        raise ValueError("eigenvalues must be nonnegative")
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must be in (0, 1], got {delta}")
    total = float(lam[lam > 0].sum())
    if total <= 0.0:
        raise AllZeroEigenvalues("cannot select a truncation from all-zero eigenvalues")
    cpv = np.cumsum(np.maximum(lam, 0.0)) / total
    return int(np.argmax(cpv >= delta - 1e-15)) + 1


class FunctionalPCA(BaseEstimator):
    """Mean/eigenstructure of a curve panel with CPV truncation.

    Parameters
    ----------
    delta : float, default=0.85
        Cumulative-proportion-of-variance threshold for the retained
        number of components.
    weight : float or "grid", default=1.0
        Inner-product weight w; "grid" uses w = 1/T.
    j_max : int, optional
        Number of eigenpairs to keep. Defaults to min(N - 1, T).

    Attributes (after fit)
    ----------------------
    mean_curve_ : (T,) mean of the raw panel (zeros when fit on a plain
        pre-centered array with no mean information).
    eigenvalues_ : (j_max_,) nonincreasing, clipped at zero.
    eigenfunctions_ : (j_max_, T), orthonormal under the grid inner product,
        sign-normalized so each function's largest-magnitude value is positive.
    scores_ : (N, j_max_) projections of the demeaned curves.
    n_components_ : CPV-selected truncation J.
    cpv_ : (j_max_,) cumulative variance fractions.
    sigma2_resid_ : mean over days of the per-day sample variance of the
        truncation residual at J = n_components_.
    omega_ : (T,) pointwise residual variance sigma2_resid_ * diag(I - P_J).
    """

    def __init__(self, delta: float = 0.85, weight=1.0, j_max=None):
        self.delta = delta
        self.weight = weight
        self.j_max = j_max

    # -- helpers -----------------------------------------------------------

    def _weight_value(self, n_points: int) -> float:
        if isinstance(self.weight, str):
            if self.weight != "grid":
                raise ValueError(f"weight must be a float or 'grid', got {self.weight!r}")
            return 1.0 / n_points
        w = float(self.weight)
        if w <= 0:
            raise ValueError("weight must be positive")
        return w

    @staticmethod
    def _extract_values(panel):
        if isinstance(panel, ReturnCurvePanel):
            if not panel.demeaned:
                raise NotDemeaned("fit requires a demeaned panel")
            return panel.values, np.asarray(panel.mean_curve, dtype=float)
        x = as_matrix(panel, "X")
        mean = x.mean(axis=0)
        return x - mean, mean

    # -- estimator API -------------------------------------------------------

    def fit(self, X, y=None):
        """Fit on a demeaned ReturnCurvePanel or a raw (N, T) array.

        Plain arrays are centered internally and the column mean becomes
        ``mean_curve_``.
        """
        values, mean_curve = self._extract_values(X)
        n, t = values.shape
        if n < 3:
            raise ValueError(f"need at least 3 curves, got {n}")
        w = self._weight_value(t)
        j_max = min(n - 1, t) if self.j_max is None else int(self.j_max)
        if not 1 <= j_max <= min(n, t):
            raise ValueError(f"j_max must be in [1, min(N, T)], got {j_max}")

        cov = values.T @ values / n
        if not np.any(np.abs(cov) > 0):
            raise DegeneratePanel("panel has zero covariance everywhere")

        eigvals, eigvecs = np.linalg.eigh(cov)
        order = np.argsort(eigvals, kind="stable")[::-1][:j_max]
        eigvals = eigvals[order]
        eigvecs = eigvecs[:, order]
        if eigvals.min() < -1e-10 * max(1.0, eigvals.max()):
            raise DegeneratePanel(
                f"covariance produced a significantly negative eigenvalue {eigvals.min():.3e}"
            )
        eigvals = np.maximum(eigvals, 0.0)

        # Deterministic sign: largest-magnitude element of each function positive.
        flips = np.sign(eigvecs[np.argmax(np.abs(eigvecs), axis=0), np.arange(j_max)])
        flips[flips == 0] = 1.0
        eigvecs = eigvecs * flips

        gaps = eigvals[:-1] - eigvals[1:]
        material = eigvals[1:] > 1e-12 * max(eigvals[0], 1e-300)
        self.near_degenerate_ = bool(
            np.any(material & (gaps < NEAR_DEGENERATE_RTOL * max(eigvals[0], 1e-300)))
        )
        if self.near_degenerate_:
            warnings.warn(
                "near-degenerate eigenvalue pair: component ordering is numerically "
                "arbitrary", RuntimeWarning,
            )

        self.weight_ = w
        self.mean_curve_ = mean_curve
        self.eigenvalues_ = eigvals * w
        self.eigenfunctions_ = (eigvecs / np.sqrt(w)).T  # (j_max, T)
        self.scores_ = np.sqrt(w) * (values @ eigvecs)  # (N, j_max)
        self.j_max_ = j_max
        self.n_samples_ = n

        total = float(self.eigenvalues_[self.eigenvalues_ > 0].sum())
        if total <= 0.0:
            raise DegeneratePanel("all eigenvalues are zero")
        self.cpv_ = np.cumsum(self.eigenvalues_) / total
        self.n_components_ = select_num_components(self.eigenvalues_, self.delta)

        j = self.n_components_
        fitted = self.scores_[:, :j] @ self.eigenfunctions_[:j]
        resid = values - fitted
        self.sigma2_resid_ = float(np.mean(np.var(resid, axis=1, ddof=1))) if t > 1 else 0.0
        proj_diag = w * np.einsum("jt,jt->t", self.eigenfunctions_[:j], self.eigenfunctions_[:j])
        self.omega_ = self.sigma2_resid_ * np.clip(1.0 - proj_diag, 0.0, None)
        return self

    def _check_fitted(self):
        if not hasattr(self, "eigenvalues_"):
            raise RuntimeError("FunctionalPCA instance is not fitted")

    def transform(self, X):
        """Project curves (raw scale) onto the fitted eigenfunctions."""
        self._check_fitted()
        x = np.atleast_2d(np.asarray(X, dtype=float))
        centered = x - self.mean_curve_
        return self.weight_ * (centered @ self.eigenfunctions_.T)

    def inverse_transform(self, scores, n_components=None):
        """Rebuild curves from score vectors: mean + scores @ eigenfunctions."""
        self._check_fitted()
        s = np.atleast_2d(np.asarray(scores, dtype=float))
        j = s.shape[1] if n_components is None else int(n_components)
        if not 1 <= j <= self.j_max_ or j > s.shape[1]:
            raise IndexOutOfRange(f"n_components {j} outside [1, {min(self.j_max_, s.shape[1])}]")
        return self.mean_curve_ + s[:, :j] @ self.eigenfunctions_[:j]

    def reconstruct(self, i: int, n_components=None):
        """Fitted curve for sample i using the first n_components scores."""
        self._check_fitted()
        j = self.n_components_ if n_components is None else int(n_components)
        if not 0 <= i < self.n_samples_:
            raise IndexOutOfRange(f"sample index {i} outside [0, {self.n_samples_ - 1}]")
        if not 1 <= j <= self.j_max_:
            raise IndexOutOfRange(f"n_components {j} outside [1, {self.j_max_}]")
        return self.mean_curve_ + self.scores_[i, :j] @ self.eigenfunctions_[:j]

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        self._check_fitted()
        return {
            "mean_curve": self.mean_curve_.tolist(),
            "eigenvalues": self.eigenvalues_.tolist(),
            "eigenfunctions": self.eigenfunctions_.tolist(),
            "J": int(self.n_components_),
            "cpv": self.cpv_.tolist(),
            "sigma2_resid": self.sigma2_resid_,
            "omega": self.omega_.tolist(),
            "weight": self.weight_,
            "delta": self.delta,
            "n_samples": int(self.n_samples_),
            "near_degenerate": self.near_degenerate_,
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, payload: dict, scores=None) -> "FunctionalPCA":
        est = cls(delta=payload.get("delta", 0.85))
        est.weight_ = float(payload["weight"])
        est.mean_curve_ = np.asarray(payload["mean_curve"], dtype=float)
        est.eigenvalues_ = np.asarray(payload["eigenvalues"], dtype=float)
        est.eigenfunctions_ = np.asarray(payload["eigenfunctions"], dtype=float)
        est.n_components_ = int(payload["J"])
        est.cpv_ = np.asarray(payload["cpv"], dtype=float)
        est.sigma2_resid_ = float(payload["sigma2_resid"])
        est.omega_ = np.asarray(payload["omega"], dtype=float)
        est.j_max_ = est.eigenvalues_.size
        est.n_samples_ = int(payload.get("n_samples", 0))
        est.near_degenerate_ = bool(payload.get("near_degenerate", False))
        if scores is not None:
            est.scores_ = np.asarray(scores, dtype=float)
            est.n_samples_ = est.scores_.shape[0]
        return est

    @classmethod
    def load(cls, path, scores_path=None) -> "FunctionalPCA":
        with open(path) as fh:
            payload = json.load(fh)
        scores = np.loadtxt(scores_path, delimiter=",", ndmin=2) if scores_path else None
        return cls.from_dict(payload, scores)

    def save_scores(self, path) -> None:
        self._check_fitted()
        np.savetxt(path, self.scores_, delimiter=",", fmt="%.17g")


def fit_fpca(panel, delta: float = 0.85, weight=1.0, j_max=None) -> FunctionalPCA:
    """Convenience wrapper: FunctionalPCA(...).fit(panel)."""
    return FunctionalPCA(delta=delta, weight=weight, j_max=j_max).fit(panel)
