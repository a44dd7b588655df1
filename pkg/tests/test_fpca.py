import numpy as np
import pytest

import curvecast as cc
from curvecast.exceptions import (
    AllZeroEigenvalues,
    DegeneratePanel,
    IndexOutOfRange,
    NotDemeaned,
)

from conftest import jacobi_eigh, random_demeaned_panel


class TestSelectNumComponents:
    def test_single_component(self):
        assert cc.select_num_components([1.0, 0.0, 0.0], 0.85) == 1

    def test_cumulative_sum_case(self):
        # 0.8 < 0.85 after two components, so all three are needed
        assert cc.select_num_components([0.5, 0.3, 0.2], 0.85) == 3

    def test_boundary_is_inclusive(self):
        assert cc.select_num_components([0.9, 0.1], 0.9) == 1

    def test_all_zero_rejected(self):
        with pytest.raises(AllZeroEigenvalues):
            cc.select_num_components([0.0, 0.0], 0.85)

    def test_validation(self):
        with pytest.raises(ValueError):
            cc.select_num_components([0.2, 0.5], 0.85)  # increasing
        with pytest.raises(ValueError):
            cc.select_num_components([0.5, 0.3], 1.5)


class TestFitBasics:
    def test_all_zero_panel_degenerate(self):
        panel = cc.ReturnCurvePanel(np.zeros((5, 4)), np.arange(1, 5) / 4,
                                    np.arange(1, 6), True, np.zeros(4))
        with pytest.raises(DegeneratePanel):
            cc.FunctionalPCA().fit(panel)

    def test_requires_demeaned_panel(self, rng):
        values = rng.standard_normal((6, 4)) + 5.0
        panel = cc.ReturnCurvePanel(values, np.arange(1, 5) / 4, np.arange(1, 7))
        with pytest.raises(NotDemeaned):
            cc.FunctionalPCA().fit(panel)

    def test_rank_one_panel(self, rng):
        t = 8
        xi = rng.standard_normal(t)
        xi /= np.linalg.norm(xi)
        beta = rng.standard_normal(40)
        beta -= beta.mean()
        panel = np.outer(beta, xi)
        basis = cc.FunctionalPCA(delta=0.2).fit(panel)
        assert basis.n_components_ == 1
        assert basis.eigenvalues_[0] == pytest.approx(np.mean(beta ** 2), rel=1e-10)
        assert abs(basis.eigenfunctions_[0] @ xi) == pytest.approx(1.0, abs=1e-10)
        assert basis.eigenvalues_[1] == pytest.approx(0.0, abs=1e-10)
        # exact reconstruction from the single component
        for i in (0, 7):
            np.testing.assert_allclose(basis.reconstruct(i, 1), panel[i], atol=1e-10)

    def test_full_basis_reconstruction_identity(self, rng):
        raw = rng.standard_normal((10, 6)) * 2.0 + 1.0
        panel = cc.demean_panel(
            cc.ReturnCurvePanel(raw, np.arange(1, 7) / 6, np.arange(1, 11)))
        basis = cc.FunctionalPCA().fit(panel)
        assert basis.j_max_ == 6
        for i in range(10):
            np.testing.assert_allclose(basis.reconstruct(i, basis.j_max_), raw[i], atol=1e-8)

    def test_residual_variance_nonincreasing_in_components(self, rng):
        panel = random_demeaned_panel(rng, 20, 10)
        basis = cc.FunctionalPCA().fit(panel)
        prev = np.inf
        for j in range(1, basis.j_max_ + 1):
            resid = np.array([panel.values[i] + basis.mean_curve_ - basis.reconstruct(i, j)
                              for i in range(20)])
            cur = float(np.var(resid))
            assert cur <= prev + 1e-12
            prev = cur

    def test_reconstruct_bounds(self, rng):
        basis = cc.FunctionalPCA().fit(random_demeaned_panel(rng, 8, 5))
        with pytest.raises(IndexOutOfRange):
            basis.reconstruct(8, 1)
        with pytest.raises(IndexOutOfRange):
            basis.reconstruct(0, 0)
        with pytest.raises(IndexOutOfRange):
            basis.reconstruct(0, basis.j_max_ + 1)


class TestInvariants:
    def test_trace_identity(self, rng):
        panel = random_demeaned_panel(rng, 12, 7)
        basis = cc.FunctionalPCA().fit(panel)
        cov = panel.values.T @ panel.values / 12
        assert basis.eigenvalues_.sum() == pytest.approx(np.trace(cov), abs=1e-8)

    def test_scores_uncorrelated_with_eigenvalue_diagonal(self, rng):
        for _ in range(5):
            panel = random_demeaned_panel(rng, 15, 8)
            basis = cc.FunctionalPCA().fit(panel)
            gram = basis.scores_.T @ basis.scores_ / panel.n_days
            off = gram - np.diag(np.diag(gram))
            assert np.abs(off).max() <= 1e-6 * basis.eigenvalues_[0]
            np.testing.assert_allclose(np.diag(gram), basis.eigenvalues_, atol=1e-8)

    def test_score_columns_centered(self, rng):
        basis = cc.FunctionalPCA().fit(random_demeaned_panel(rng, 30, 6))
        assert np.abs(basis.scores_.mean(axis=0)).max() < 1e-8

    def test_eigenfunctions_orthonormal(self, rng):
        basis = cc.FunctionalPCA().fit(random_demeaned_panel(rng, 15, 9))
        gram = basis.eigenfunctions_ @ basis.eigenfunctions_.T
        np.testing.assert_allclose(gram, np.eye(basis.j_max_), atol=1e-8)

    def test_jacobi_oracle_agreement(self, rng):
        for _ in range(3):
            n, t = int(rng.integers(4, 9)), int(rng.integers(3, 7))
            panel = random_demeaned_panel(rng, n, t)
            basis = cc.FunctionalPCA(j_max=t).fit(panel)
            cov = panel.values.T @ panel.values / n
            vals, vecs = jacobi_eigh(cov)
            np.testing.assert_allclose(basis.eigenvalues_, np.maximum(vals, 0.0), atol=1e-8)
            for j in range(t):
                if vals[j] > 1e-10:
                    assert abs(basis.eigenfunctions_[j] @ vecs[:, j]) == pytest.approx(1.0, abs=1e-8)

    def test_omega_matches_projector_formula_and_nonnegative(self, rng):
        panel = random_demeaned_panel(rng, 25, 10)
        basis = cc.FunctionalPCA(delta=0.6).fit(panel)
        j = basis.n_components_
        proj_diag = np.einsum("jt,jt->t", basis.eigenfunctions_[:j], basis.eigenfunctions_[:j])
        np.testing.assert_allclose(basis.omega_, basis.sigma2_resid_ * (1.0 - proj_diag),
                                   atol=1e-12)
        assert np.all(basis.omega_ >= 0.0)

    def test_sign_convention(self, rng):
        basis = cc.FunctionalPCA().fit(random_demeaned_panel(rng, 12, 6))
        for f in basis.eigenfunctions_:
            assert f[np.argmax(np.abs(f))] > 0

    def test_near_degenerate_flag(self, rng):
        t = 6
        e1 = np.zeros(t)
        e1[0] = 1.0
        e2 = np.zeros(t)
        e2[1] = 1.0
        values = np.vstack([e1, -e1, e2, -e2])  # two exactly tied eigenvalues
        panel = cc.ReturnCurvePanel(values, np.arange(1, t + 1) / t, np.arange(1, 5),
                                    True, np.zeros(t))
        with pytest.warns(RuntimeWarning, match="near-degenerate"):
            basis = cc.FunctionalPCA().fit(panel)
        assert basis.near_degenerate_

        # a clean spectrum, including trailing zeros, must not warn
        xi = rng.standard_normal(t)
        xi /= np.linalg.norm(xi)
        beta = rng.standard_normal(10)
        beta -= beta.mean()
        rank1 = cc.FunctionalPCA().fit(np.outer(beta, xi))
        assert not rank1.near_degenerate_


class TestWeighting:
    def test_grid_weight_rescaling(self, rng):
        panel = random_demeaned_panel(rng, 14, 8)
        plain = cc.FunctionalPCA(weight=1.0).fit(panel)
        grid = cc.FunctionalPCA(weight="grid").fit(panel)
        t = panel.n_points
        np.testing.assert_allclose(grid.eigenvalues_, plain.eigenvalues_ / t, atol=1e-12)
        np.testing.assert_allclose(grid.eigenfunctions_, plain.eigenfunctions_ * np.sqrt(t),
                                   atol=1e-10)
        np.testing.assert_allclose(grid.scores_, plain.scores_ / np.sqrt(t), atol=1e-10)
        assert grid.n_components_ == plain.n_components_
        for i in (0, 5):
            np.testing.assert_allclose(grid.reconstruct(i, 3), plain.reconstruct(i, 3),
                                       atol=1e-10)


class TestTransformAndIo:
    def test_transform_matches_fitted_scores(self, rng):
        raw = rng.standard_normal((10, 6)) + 2.0
        panel = cc.demean_panel(cc.ReturnCurvePanel(raw, np.arange(1, 7) / 6,
                                                    np.arange(1, 11)))
        basis = cc.FunctionalPCA().fit(panel)
        np.testing.assert_allclose(basis.transform(raw), basis.scores_, atol=1e-10)

    def test_inverse_transform(self, rng):
        basis = cc.FunctionalPCA().fit(random_demeaned_panel(rng, 10, 6))
        curves = basis.inverse_transform(basis.scores_[:3])
        for i in range(3):
            np.testing.assert_allclose(curves[i], basis.reconstruct(i, basis.j_max_), atol=1e-10)

    def test_json_roundtrip(self, tmp_path, rng):
        basis = cc.FunctionalPCA(delta=0.7).fit(random_demeaned_panel(rng, 10, 5))
        basis.save(tmp_path / "b.json")
        basis.save_scores(tmp_path / "s.csv")
        loaded = cc.FunctionalPCA.load(tmp_path / "b.json", tmp_path / "s.csv")
        np.testing.assert_allclose(loaded.eigenvalues_, basis.eigenvalues_, atol=1e-15)
        np.testing.assert_allclose(loaded.eigenfunctions_, basis.eigenfunctions_, atol=1e-15)
        np.testing.assert_allclose(loaded.scores_, basis.scores_, atol=1e-15)
        np.testing.assert_allclose(loaded.omega_, basis.omega_, atol=1e-15)
        assert loaded.n_components_ == basis.n_components_

    def test_get_params_sklearn_contract(self):
        est = cc.FunctionalPCA(delta=0.7, weight="grid")
        params = est.get_params()
        assert params["delta"] == 0.7 and params["weight"] == "grid"
        est.set_params(delta=0.9)
        assert est.delta == 0.9
