import numpy as np
import pytest

import matchaffinity as ma
from matchaffinity import ConvergenceError, DataError

from conftest import random_unipartite_coupling, random_bipartite_coupling
from oracles import (double_loop_surplus, matching_objective,
                     projected_gradient_matching)

E = np.e
TWO_POINT_SAME = E / (2 * (E + 1 / E))
TWO_POINT_CROSS = (1 / E) / (2 * (E + 1 / E))


def two_point_coupling():
    support = ma.ProfileArray(np.array([[-1.0], [1.0]]),
                              np.zeros((2, 0), dtype=np.int64))
    weights = np.full((2, 2), 0.25)
    schema = ma.TraitSchema(("x",))
    return ma.EmpiricalCoupling(ma.UNIPARTITE, schema, support, support,
                                np.array([0.5, 0.5]), np.array([0.5, 0.5]),
                                weights, np.array([[0.0]]), np.zeros(0), 2)


class TestSurplusMatrix:
    def test_zero_model_gives_zero_matrix(self):
        rng = np.random.default_rng(0)
        coupling = random_unipartite_coupling(rng, n_points=5, k=2, n_cats=1)
        model = ma.AffinityModel(np.zeros((2, 2)), np.zeros(1))
        assert np.abs(ma.surplus_matrix(model, coupling)).max() == 0.0

    def test_single_cell_hand_value(self):
        support_x = ma.ProfileArray(np.array([[0.5]]), np.array([[0]]))
        support_y = ma.ProfileArray(np.array([[-1.0]]), np.array([[0]]))
        schema = ma.TraitSchema(("x",), (ma.CategoricalDef("c", ("a", "b")),))
        coupling = ma.EmpiricalCoupling(
            ma.BIPARTITE, schema, support_x, support_y, np.array([1.0]),
            np.array([1.0]), np.array([[1.0]]), np.array([[-0.5]]),
            np.array([1.0]), 2)
        model = ma.AffinityModel(np.array([[2.0]]), np.array([3.0]))
        phi = ma.surplus_matrix(model, coupling)
        assert phi[0, 0] == pytest.approx(2.0)

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(1)
        coupling = random_unipartite_coupling(rng, n_points=4, k=3, n_cats=2)
        a_mat = rng.standard_normal((3, 3))
        a_mat = (a_mat + a_mat.T) / 2
        lam = rng.standard_normal(2)
        model = ma.AffinityModel(a_mat, lam)
        phi = ma.surplus_matrix(model, coupling)
        expected = double_loop_surplus(
            a_mat, lam, coupling.support_x.continuous,
            coupling.support_y.continuous, coupling.support_x.labels,
            coupling.support_y.labels)
        np.testing.assert_allclose(phi, expected, atol=1e-14)

    def test_dimension_mismatch_raises(self):
        rng = np.random.default_rng(2)
        coupling = random_unipartite_coupling(rng, n_points=4, k=2)
        with pytest.raises(DataError):
            ma.surplus_matrix(ma.AffinityModel(np.eye(3)), coupling)


class TestSolve:
    def test_zero_surplus_gives_independence(self):
        rng = np.random.default_rng(3)
        cont = rng.standard_normal((6, 2))
        support = ma.ProfileArray(cont, np.zeros((6, 0), dtype=np.int64))
        f = np.full(6, 1 / 6)
        schema = ma.TraitSchema(("a", "b"))
        coupling = ma.EmpiricalCoupling(
            ma.UNIPARTITE, schema, support, support, f, f,
            np.full((6, 6), 1 / 36), np.zeros((2, 2)), np.zeros(0), 6)
        match = ma.solve(ma.AffinityModel(np.zeros((2, 2))), coupling)
        np.testing.assert_allclose(match.weights, np.outer(f, f), atol=1e-12)
        assert np.ptp(match.potential_a) == pytest.approx(0.0, abs=1e-10)
        assert match.social_gain == pytest.approx(0.0, abs=1e-12)

    def test_two_point_closed_form(self):
        match = ma.solve(ma.AffinityModel(np.array([[1.0]])),
                         two_point_coupling(), tol=1e-13)
        assert match.weights[0, 0] == pytest.approx(TWO_POINT_SAME, abs=1e-10)
        assert match.weights[0, 1] == pytest.approx(TWO_POINT_CROSS, abs=1e-10)
        assert match.weights[0, 0] == pytest.approx(0.44040, abs=5e-6)
        assert match.weights[0, 1] == pytest.approx(0.05960, abs=5e-6)

    def test_matches_projected_gradient_oracle(self):
        rng = np.random.default_rng(4)
        coupling = random_unipartite_coupling(rng, n_points=5, k=2)
        a_mat = rng.standard_normal((2, 2))
        model = ma.AffinityModel((a_mat + a_mat.T) / 2, sigma=1.0)
        match = ma.solve(model, coupling, tol=1e-12)
        phi = ma.surplus_matrix(model, coupling)
        _, oracle_value = projected_gradient_matching(
            phi, coupling.f, coupling.g, 1.0, symmetric=True)
        assert match.social_gain == pytest.approx(oracle_value, abs=1e-6)

    def test_never_beaten_by_oracle_coupling(self):
        rng = np.random.default_rng(5)
        coupling = random_bipartite_coupling(rng, mx=5, my=5, k=2)
        a_mat = rng.standard_normal((2, 2))
        model = ma.AffinityModel(a_mat, sigma=0.8)
        match = ma.solve(model, coupling, tol=1e-12)
        phi = ma.surplus_matrix(model, coupling)
        oracle_pi, oracle_value = projected_gradient_matching(
            phi, coupling.f, coupling.g, 0.8)
        assert match.social_gain >= oracle_value - 1e-8

    def test_feasibility_and_bitwise_symmetry(self):
        rng = np.random.default_rng(6)
        coupling = random_unipartite_coupling(rng, n_points=30, k=3, n_cats=1)
        a_mat = rng.standard_normal((3, 3))
        model = ma.AffinityModel((a_mat + a_mat.T) / 2, rng.standard_normal(1),
                                 sigma=0.7)
        match = ma.solve(model, coupling)
        assert match.residual <= 1e-10
        assert np.abs(match.weights - match.weights.T).max() == 0.0
        np.testing.assert_array_equal(match.potential_a, match.potential_b)

    def test_scale_invariance_of_coupling(self):
        rng = np.random.default_rng(7)
        coupling = random_unipartite_coupling(rng, n_points=8, k=2, n_cats=1)
        a_mat = rng.standard_normal((2, 2))
        a_mat = (a_mat + a_mat.T) / 2
        lam = rng.standard_normal(1)
        base = ma.solve(ma.AffinityModel(a_mat, lam, sigma=1.0), coupling,
                        tol=1e-12)
        for k in (0.5, 2.0, 10.0):
            scaled = ma.solve(ma.AffinityModel(a_mat * k, lam * k, sigma=k),
                              coupling, tol=1e-12)
            assert np.abs(scaled.weights - base.weights).max() <= 1e-10

    def test_gibbs_form_constant_across_cells(self):
        rng = np.random.default_rng(8)
        coupling = random_bipartite_coupling(rng, mx=6, my=4, k=2)
        model = ma.AffinityModel(rng.standard_normal((2, 2)), sigma=1.3)
        match = ma.solve(model, coupling, tol=1e-12)
        phi = ma.surplus_matrix(model, coupling)
        gap = (np.log(match.weights)
               - (phi - match.potential_a[:, None]
                  - match.potential_b[None, :]) / model.sigma)
        assert gap.max() - gap.min() <= 1e-8

    def test_nonconvergence_raises_with_residual(self):
        rng = np.random.default_rng(9)
        coupling = random_unipartite_coupling(rng, n_points=6, k=2)
        model = ma.AffinityModel(np.eye(2) * 4.0, sigma=1.0)
        with pytest.raises(ConvergenceError) as err:
            ma.solve(model, coupling, max_sweeps=2)
        assert err.value.residual > 0
        relaxed = ma.solve(model, coupling, max_sweeps=2, check=False)
        assert not relaxed.converged

    def test_tiny_sigma_rejected(self):
        with pytest.raises(DataError, match="sigma"):
            ma.AffinityModel(np.eye(2), sigma=1e-9)

    def test_asymmetric_matrix_rejected_on_unipartite(self):
        rng = np.random.default_rng(10)
        coupling = random_unipartite_coupling(rng, n_points=4, k=2)
        with pytest.raises(DataError, match="symmetric"):
            ma.solve(ma.AffinityModel(np.array([[1.0, 0.5], [0.2, 1.0]])),
                     coupling)


class TestSocialGain:
    def test_zero_model_zero_gain(self):
        rng = np.random.default_rng(11)
        coupling = random_unipartite_coupling(rng, n_points=5, k=2, n_cats=1)
        value = ma.social_gain(ma.AffinityModel(np.zeros((2, 2)), np.zeros(1)),
                               coupling)
        assert value == pytest.approx(0.0, abs=1e-12)

    def test_gain_scales_linearly(self):
        rng = np.random.default_rng(12)
        coupling = random_unipartite_coupling(rng, n_points=7, k=2)
        a_mat = rng.standard_normal((2, 2))
        model = ma.AffinityModel((a_mat + a_mat.T) / 2, sigma=1.0)
        base = ma.social_gain(model, coupling, tol=1e-12)
        doubled = ma.social_gain(model.scaled(2.0), coupling, tol=1e-12)
        assert doubled == pytest.approx(2.0 * base, abs=1e-8)

    def test_two_point_direct_summation(self):
        coupling = two_point_coupling()
        model = ma.AffinityModel(np.array([[1.0]]))
        match = ma.solve(model, coupling, tol=1e-13)
        phi = ma.surplus_matrix(model, coupling)
        direct = matching_objective(match.weights, phi, coupling.f,
                                    coupling.g, 1.0)
        assert match.social_gain == pytest.approx(direct, abs=1e-12)


class TestEquilibriumUtilities:
    def test_equal_potentials_split_surplus_evenly(self):
        coupling = two_point_coupling()
        model = ma.AffinityModel(np.array([[1.0]]))
        match = ma.solve(model, coupling, tol=1e-13)
        phi = ma.surplus_matrix(model, coupling)
        util = ma.equilibrium_utilities(match, phi)
        np.testing.assert_allclose(util, phi / 2.0, atol=1e-12)

    def test_pair_sum_reconstructs_surplus(self):
        rng = np.random.default_rng(13)
        coupling = random_unipartite_coupling(rng, n_points=6, k=2, n_cats=1)
        a_mat = rng.standard_normal((2, 2))
        model = ma.AffinityModel((a_mat + a_mat.T) / 2,
                                 rng.standard_normal(1), sigma=1.1)
        match = ma.solve(model, coupling, tol=1e-12)
        phi = ma.surplus_matrix(model, coupling)
        util = ma.equilibrium_utilities(match, phi)
        np.testing.assert_allclose(util + util.T, phi, atol=1e-12)

    def test_two_point_hand_values(self):
        coupling = two_point_coupling()
        model = ma.AffinityModel(np.array([[1.0]]))
        match = ma.solve(model, coupling, tol=1e-13)
        phi = ma.surplus_matrix(model, coupling)
        util = ma.equilibrium_utilities(match, phi)
        # identical potentials: U = phi/2 with phi = [[1,-1],[-1,1]]
        np.testing.assert_allclose(util, [[0.5, -0.5], [-0.5, 0.5]],
                                   atol=1e-10)
