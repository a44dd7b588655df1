"""Synthetic curve panels driven by low-rank factor dynamics.

A panel is assembled as mean + sum_j beta_{i,j} * basis_j + noise, where
the latent unit-variance score processes follow one of three dynamics
(linear VAR, VAR with scalar-BEKK volatility, or independent AR-GARCH)
and the additive noise is projected onto the orthogonal complement of
the retained basis. True scores are returned for recovery tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.linalg import solve_discrete_lyapunov

from .curves import ReturnCurvePanel
from .exceptions import InvalidSpec

_STATIONARITY_TOL = 1e-10


def _spectral_radius(m) -> float:
    return float(np.abs(np.linalg.eigvals(m)).max())


def _sym_sqrt(m) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition."""
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


@dataclass
class LinearVarDynamics:
    """Scores follow beta_i = pi @ beta_{i-1} + eps_i with eps ~ N(0, sigma)."""

    pi: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        self.pi = np.ascontiguousarray(np.atleast_2d(np.asarray(self.pi, dtype=float)))
        self.sigma = np.ascontiguousarray(np.atleast_2d(np.asarray(self.sigma, dtype=float)))
        if self.pi.shape[0] != self.pi.shape[1] or self.pi.shape != self.sigma.shape:
            raise InvalidSpec("pi and sigma must be square matrices of equal size")
        if _spectral_radius(self.pi) >= 1.0:
            raise InvalidSpec("VAR coefficient matrix must have spectral radius < 1")
        if np.linalg.eigvalsh(0.5 * (self.sigma + self.sigma.T)).min() < -1e-10:
            raise InvalidSpec("innovation covariance must be PSD")

    @property
    def n_factors(self) -> int:
        return self.pi.shape[0]

    def marginal_variance(self) -> np.ndarray:
        return solve_discrete_lyapunov(self.pi, self.sigma)

    def heteroscedastic(self) -> bool:
        return False

    def simulate(self, n: int, burn_in: int, rng) -> np.ndarray:
        j = self.n_factors
        chol = np.linalg.cholesky(self.sigma + 1e-14 * np.eye(j))
        eps = rng.standard_normal((n + burn_in, j)) @ chol.T
        beta = np.zeros((n + burn_in, j))
        prev = np.zeros(j)
        for i in range(n + burn_in):
            prev = self.pi @ prev + eps[i]
            beta[i] = prev
        return beta[burn_in:]


@dataclass
class VarSbekkDynamics:
    """VAR(1) conditional mean with a scalar-BEKK conditional covariance."""

    pi: np.ndarray
    c: np.ndarray
    a: float
    g: float

    def __post_init__(self):
        self.pi = np.ascontiguousarray(np.atleast_2d(np.asarray(self.pi, dtype=float)))
        self.c = np.ascontiguousarray(np.atleast_2d(np.asarray(self.c, dtype=float)))
        self.a = float(self.a)
        self.g = float(self.g)
        if self.pi.shape != self.c.shape or self.pi.shape[0] != self.pi.shape[1]:
            raise InvalidSpec("pi and c must be square matrices of equal size")
        if _spectral_radius(self.pi) >= 1.0:
            raise InvalidSpec("VAR coefficient matrix must have spectral radius < 1")
        if self.a < 0 or self.g < 0 or self.a + self.g >= 1.0 - _STATIONARITY_TOL:
            raise InvalidSpec("need a >= 0, g >= 0 and a + g < 1")

    @property
    def n_factors(self) -> int:
        return self.pi.shape[0]

    def innovation_marginal(self) -> np.ndarray:
        return (self.c @ self.c.T) / (1.0 - self.a - self.g)

    def marginal_variance(self) -> np.ndarray:
        return solve_discrete_lyapunov(self.pi, self.innovation_marginal())

    def heteroscedastic(self) -> bool:
        return True

    def simulate(self, n: int, burn_in: int, rng) -> np.ndarray:
        j = self.n_factors
        b = self.c @ self.c.T
        h = self.innovation_marginal()
        eps_prev = np.zeros(j)
        beta = np.zeros((n + burn_in, j))
        prev = np.zeros(j)
        z = rng.standard_normal((n + burn_in, j))
        first = True
        for i in range(n + burn_in):
            if not first:
                h = b + self.a * np.outer(eps_prev, eps_prev) + self.g * h
            eps_prev = _sym_sqrt(h) @ z[i]
            prev = self.pi @ prev + eps_prev
            beta[i] = prev
            first = False
        return beta[burn_in:]


@dataclass
class UnivArGarchDynamics:
    """Independent per-score AR(1) means with GARCH(1,1) innovation variance."""

    a: np.ndarray
    varsigma0: np.ndarray
    zeta: np.ndarray
    varsigma: np.ndarray

    def __post_init__(self):
        arrays = [np.atleast_1d(np.asarray(v, dtype=float))
                  for v in (self.a, self.varsigma0, self.zeta, self.varsigma)]
        j = max(arr.size for arr in arrays)
        self.a, self.varsigma0, self.zeta, self.varsigma = (
            np.broadcast_to(arr, (j,)).astype(float) for arr in arrays
        )
        if np.any(np.abs(self.a) >= 1.0):
            raise InvalidSpec("AR coefficients must satisfy |a| < 1")
        if np.any(self.varsigma0 <= 0):
            raise InvalidSpec("GARCH intercepts must be positive")
        if np.any(self.zeta < 0) or np.any(self.varsigma < 0):
            raise InvalidSpec("GARCH coefficients must be nonnegative")
        if np.any(self.zeta + self.varsigma >= 1.0 - _STATIONARITY_TOL):
            raise InvalidSpec("GARCH stationarity requires zeta + varsigma < 1")

    @property
    def n_factors(self) -> int:
        return self.a.size

    def marginal_variance(self) -> np.ndarray:
        sig2_eps = self.varsigma0 / (1.0 - self.zeta - self.varsigma)
        return np.diag(sig2_eps / (1.0 - self.a ** 2))

    def heteroscedastic(self) -> bool:
        return True

    def simulate(self, n: int, burn_in: int, rng) -> np.ndarray:
        j = self.n_factors
        total = n + burn_in
        z = rng.standard_normal((total, j))
        nu = self.varsigma0 / (1.0 - self.zeta - self.varsigma)
        eps_prev = np.zeros(j)
        beta = np.zeros((total, j))
        prev = np.zeros(j)
        for i in range(total):
            if i > 0:
                nu = self.varsigma0 + self.zeta * eps_prev ** 2 + self.varsigma * nu
            eps_prev = np.sqrt(nu) * z[i]
            prev = self.a * prev + eps_prev
            beta[i] = prev
        return beta[burn_in:]


Dynamics = Union[LinearVarDynamics, VarSbekkDynamics, UnivArGarchDynamics]


def unit_variance_argarch(a, zeta, varsigma) -> UnivArGarchDynamics:
    """AR-GARCH dynamics whose implied marginal score variance is exactly 1."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    zeta = np.broadcast_to(np.asarray(zeta, dtype=float), a.shape)
    varsigma = np.broadcast_to(np.asarray(varsigma, dtype=float), a.shape)
    varsigma0 = (1.0 - a ** 2) * (1.0 - zeta - varsigma)
    return UnivArGarchDynamics(a, varsigma0, zeta, varsigma)


def unit_variance_var(pi) -> LinearVarDynamics:
    """Linear VAR dynamics with identity marginal score covariance."""
    pi = np.atleast_2d(np.asarray(pi, dtype=float))
    sigma = np.eye(pi.shape[0]) - pi @ pi.T
    if np.linalg.eigvalsh(0.5 * (sigma + sigma.T)).min() <= 0:
        raise InvalidSpec("I - pi pi' must be positive definite for unit marginal variance")
    return LinearVarDynamics(pi, sigma)


def unit_variance_sbekk(pi, a, g) -> VarSbekkDynamics:
    """VAR-sBEKK dynamics with identity marginal score covariance."""
    pi = np.atleast_2d(np.asarray(pi, dtype=float))
    sigma = np.eye(pi.shape[0]) - pi @ pi.T
    w = np.linalg.eigvalsh(0.5 * (sigma + sigma.T))
    if w.min() <= 0:
        raise InvalidSpec("I - pi pi' must be positive definite for unit marginal variance")
    c = np.linalg.cholesky((1.0 - a - g) * sigma)
    return VarSbekkDynamics(pi, c, a, g)


@dataclass
class KlFactorSpec:
    """Full description of a synthetic curve-generating process."""

    j0: int
    t: int
    mean_curve: np.ndarray
    eigenfunctions: np.ndarray  # (j0, t), orthonormal rows
    lambdas: np.ndarray  # (j0,) positive factor variances
    dynamics: Dynamics
    noise_sigma2: float = 0.0
    seed: int = 0
    enforce_unit_variance: bool = False

    def __post_init__(self):
        self.mean_curve = np.ascontiguousarray(np.asarray(self.mean_curve, dtype=float))
        self.eigenfunctions = np.ascontiguousarray(
            np.atleast_2d(np.asarray(self.eigenfunctions, dtype=float)))
        self.lambdas = np.atleast_1d(np.asarray(self.lambdas, dtype=float))
        if self.j0 < 1 or self.j0 > self.t:
            raise InvalidSpec(f"need 1 <= j0 <= t, got j0={self.j0}, t={self.t}")
        if self.mean_curve.shape != (self.t,):
            raise InvalidSpec("mean_curve must have length t")
        if self.eigenfunctions.shape != (self.j0, self.t):
            raise InvalidSpec("eigenfunctions must have shape (j0, t)")
        if self.lambdas.shape != (self.j0,) or np.any(self.lambdas <= 0):
            raise InvalidSpec("lambdas must be j0 positive reals")
        if self.noise_sigma2 < 0:
            raise InvalidSpec("noise_sigma2 must be nonnegative")
        gram = self.eigenfunctions @ self.eigenfunctions.T
        if np.abs(gram - np.eye(self.j0)).max() > 1e-10:
            raise InvalidSpec("eigenfunctions must be orthonormal")
        if self.dynamics.n_factors != self.j0:
            raise InvalidSpec("dynamics dimension must equal j0")
        if self.enforce_unit_variance:
            v = self.dynamics.marginal_variance()
            if np.abs(np.diag(v) - 1.0).max() > 1e-8:
                raise InvalidSpec(
                    "dynamics do not imply unit marginal score variance "
                    f"(diag {np.diag(v)})"
                )

    def to_dict(self) -> dict:
        kind = {LinearVarDynamics: "linear_var", VarSbekkDynamics: "var_sbekk",
                UnivArGarchDynamics: "univ_ar_garch"}[type(self.dynamics)]
        dyn: dict = {"kind": kind}
        if kind == "linear_var":
            dyn.update(pi=self.dynamics.pi.tolist(), sigma=self.dynamics.sigma.tolist())
        elif kind == "var_sbekk":
            dyn.update(pi=self.dynamics.pi.tolist(), c=self.dynamics.c.tolist(),
                       a=self.dynamics.a, g=self.dynamics.g)
        else:
            dyn.update(a=self.dynamics.a.tolist(), varsigma0=self.dynamics.varsigma0.tolist(),
                       zeta=self.dynamics.zeta.tolist(), varsigma=self.dynamics.varsigma.tolist())
        return {
            "j0": self.j0, "t": self.t,
            "mean_curve": self.mean_curve.tolist(),
            "eigenfunctions": self.eigenfunctions.tolist(),
            "lambdas": self.lambdas.tolist(),
            "dynamics": dyn,
            "noise_sigma2": self.noise_sigma2,
            "seed": self.seed,
            "enforce_unit_variance": self.enforce_unit_variance,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "KlFactorSpec":
        dyn = payload["dynamics"]
        kind = dyn["kind"]
        if kind == "linear_var":
            dynamics: Dynamics = LinearVarDynamics(dyn["pi"], dyn["sigma"])
        elif kind == "var_sbekk":
            dynamics = VarSbekkDynamics(dyn["pi"], dyn["c"], dyn["a"], dyn["g"])
        elif kind == "univ_ar_garch":
            dynamics = UnivArGarchDynamics(dyn["a"], dyn["varsigma0"], dyn["zeta"], dyn["varsigma"])
        else:
            raise InvalidSpec(f"unknown dynamics kind {kind!r}")
        return cls(
            j0=payload["j0"], t=payload["t"],
            mean_curve=payload["mean_curve"],
            eigenfunctions=payload["eigenfunctions"],
            lambdas=payload["lambdas"],
            dynamics=dynamics,
            noise_sigma2=payload.get("noise_sigma2", 0.0),
            seed=payload.get("seed", 0),
            enforce_unit_variance=payload.get("enforce_unit_variance", False),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "KlFactorSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def make_orthonormal_basis(t: int, j0: int, seed: int = 0, kind: str = "random") -> np.ndarray:
    """j0 orthonormal T-vectors, deterministic in the seed.

    kind='random' orthonormalizes seeded Gaussian draws; kind='fourier'
    orthonormalizes smooth sin/cos harmonics.
    """
    if j0 > t:
        raise InvalidSpec(f"cannot build {j0} orthonormal vectors in dimension {t}")
    if kind == "random":
        rng = np.random.default_rng(seed)
        raw = rng.standard_normal((t, j0))
    elif kind == "fourier":
        x = (np.arange(1, t + 1) - 0.5) / t
        cols = []
        harmonic = 1
        while len(cols) < j0:
            cols.append(np.sin(2 * np.pi * harmonic * x))
            if len(cols) < j0:
                cols.append(np.cos(2 * np.pi * harmonic * x))
            harmonic += 1
        raw = np.column_stack(cols[:j0])
    else:
        raise InvalidSpec(f"unknown basis kind {kind!r}")
    q, _ = np.linalg.qr(raw)
    q = q[:, :j0]
    flips = np.sign(q[np.argmax(np.abs(q), axis=0), np.arange(j0)])
    flips[flips == 0] = 1.0
    # contiguous layout so downstream products are bit-reproducible across
    # construction paths (a transposed view can take a different BLAS kernel)
    return np.ascontiguousarray((q * flips).T)


def simulate_panel(
    spec: KlFactorSpec, n_days: int, burn_in: int = 500
) -> tuple[ReturnCurvePanel, np.ndarray]:
    """Draw a panel of n_days curves plus the true (lambda-scaled) scores.

    The additive noise is projected onto the orthogonal complement of the
    spec basis, so <noise_i, basis_j> = 0 for all retained j.
    """
    if n_days < 1:
        raise InvalidSpec("n_days must be positive")
    if burn_in < 0:
        raise InvalidSpec("burn_in must be nonnegative")
    if spec.dynamics.heteroscedastic() and burn_in < 200:
        raise InvalidSpec("heteroscedastic dynamics need burn_in >= 200")
    rng = np.random.default_rng(spec.seed)
    std_scores = spec.dynamics.simulate(n_days, burn_in, rng)
    scores = std_scores * np.sqrt(spec.lambdas)

    values = spec.mean_curve + scores @ spec.eigenfunctions
    if spec.noise_sigma2 > 0:
        noise = rng.normal(0.0, np.sqrt(spec.noise_sigma2), size=(n_days, spec.t))
        noise -= (noise @ spec.eigenfunctions.T) @ spec.eigenfunctions
        values = values + noise

    grid = np.arange(1, spec.t + 1, dtype=float) / spec.t
    panel = ReturnCurvePanel(
        values, grid, np.arange(1, n_days + 1), False, None, None,
        {"source": "sim", "seed": spec.seed},
    )
    return panel, scores
