"""Shared test helpers: an independent eigensolver oracle and canonical specs."""

import numpy as np
import pytest

import curvecast as cc


def jacobi_eigh(a, tol=1e-14, max_sweeps=100):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Deliberately independent of numpy.linalg.eigh so it can serve as an
    oracle. Returns eigenvalues in nonincreasing order and eigenvectors
    as columns.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off < tol * max(1.0, np.abs(np.diag(a)).max()):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) < 1e-300:
                    continue
                theta = 0.5 * np.arctan2(2.0 * a[p, q], a[q, q] - a[p, p])
                c, s = np.cos(theta), np.sin(theta)
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                v = v @ rot
    order = np.argsort(np.diag(a), kind="stable")[::-1]
    return np.diag(a)[order], v[:, order]


def sign_align(vectors, reference):
    """Flip rows of `vectors` so each best matches the corresponding reference row."""
    out = vectors.copy()
    for i in range(out.shape[0]):
        if out[i] @ reference[i] < 0:
            out[i] = -out[i]
    return out


def example1_spec(seed, j0=3, t=24, lambdas=(1.0, 0.5, 0.25), noise=0.01):
    dyn = cc.unit_variance_var(np.diag([0.6, 0.4, 0.2][:j0]))
    return cc.KlFactorSpec(j0, t, np.zeros(t), cc.make_orthonormal_basis(t, j0, seed=5),
                           np.asarray(lambdas[:j0]), dyn, noise_sigma2=noise, seed=seed)


def example2_spec(seed, j0=3, t=24, a=0.08, g=0.90, lambdas=(1.0, 0.5, 0.25), noise=0.01):
    dyn = cc.unit_variance_sbekk(np.diag([0.6, 0.4, 0.2][:j0]), a, g)
    return cc.KlFactorSpec(j0, t, np.zeros(t), cc.make_orthonormal_basis(t, j0, seed=5),
                           np.asarray(lambdas[:j0]), dyn, noise_sigma2=noise, seed=seed)


def example3_spec(seed, j0=3, t=24, a=0.5, varsigma0=0.05, zeta=0.1, varsigma=0.8,
                  lambdas=(1.0, 0.5, 0.25), noise=0.01):
    dyn = cc.UnivArGarchDynamics(np.full(j0, a), np.full(j0, varsigma0),
                                 np.full(j0, zeta), np.full(j0, varsigma))
    return cc.KlFactorSpec(j0, t, np.zeros(t), cc.make_orthonormal_basis(t, j0, seed=5),
                           np.asarray(lambdas[:j0]), dyn, noise_sigma2=noise, seed=seed)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_demeaned_panel(rng, n, t):
    values = rng.standard_normal((n, t))
    values -= values.mean(axis=0)
    mean = rng.standard_normal(t)
    return cc.ReturnCurvePanel(values, np.arange(1, t + 1) / t, np.arange(1, n + 1),
                               True, mean)
