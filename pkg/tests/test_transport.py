import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from polyot import kernels
from polyot.errors import ShapeError
from polyot.polygon import Polygon
from polyot.transport import (
    EPSILON_FLOOR,
    Marginals,
    SinkhornConfig,
    brute_force_assignment,
    build_cost,
    exact_assignment_value,
    hungarian_assignment,
    sharp_value,
    sinkhorn,
    uniform_marginals,
)

from oracles import pairwise_distances, permutation_minimum

costs = st.integers(2, 6).flatmap(
    lambda n: arrays(np.float64, (n, n), elements=st.floats(0.0, 1.0, allow_nan=False))
)


def test_config_validation():
    for bad in [dict(epsilon_rel=0), dict(max_iterations=0), dict(marginal_tolerance=0), dict(max_iterations=1.5)]:
        with pytest.raises(ValueError):
            SinkhornConfig(**bad)


def test_marginals_validation():
    with pytest.raises(ValueError):
        Marginals([0.5, 0.6], [1.0])
    with pytest.raises(ValueError):
        Marginals([1.5, -0.5], [1.0])
    with pytest.raises(ValueError):
        Marginals([], [1.0])


class TestBuildCost:
    def test_self_distance_zero_diagonal(self):
        p = Polygon([(0.1, 0.2), (0.7, 0.3), (0.4, 0.9)])
        np.testing.assert_array_equal(np.diag(build_cost(p, p)), 0.0)

    def test_three_four_five(self):
        assert build_cost(np.array([[0.0, 0.0]]), np.array([[0.6, 0.8]]))[0, 0] == pytest.approx(1.0, abs=1e-15)

    def test_matches_double_loop(self, rng):
        pred, ref = rng.random((10, 2)), rng.random((10, 2))
        np.testing.assert_allclose(build_cost(pred, ref), pairwise_distances(pred, ref), rtol=1e-15, atol=1e-15)

    def test_rectangular(self, rng):
        assert build_cost(rng.random((3, 2)), rng.random((7, 2))).shape == (3, 7)


class TestUniformMarginals:
    def test_two_two(self):
        m = uniform_marginals(2, 2)
        assert m.a.tolist() == [0.5, 0.5] and m.b.tolist() == [0.5, 0.5]

    def test_decagon_weights(self):
        m = uniform_marginals(10, 10)
        assert np.all(m.a == 0.1) and np.all(m.b == 0.1)

    def test_one_four(self):
        m = uniform_marginals(1, 4)
        assert m.a.tolist() == [1.0] and m.b.tolist() == [0.25] * 4

    @pytest.mark.parametrize("n,m", [(0, 3), (3, 0)])
    def test_zero_count(self, n, m):
        with pytest.raises(ValueError):
            uniform_marginals(n, m)


class TestSinkhorn:
    def test_zero_cost_matching(self):
        plan = sinkhorn(np.array([[0.0, 1.0], [1.0, 0.0]]), uniform_marginals(2, 2), SinkhornConfig(epsilon_rel=1e-3))
        assert plan.converged
        np.testing.assert_allclose(np.diag(plan.entries), 0.5, atol=1e-9)
        assert plan.entries[0, 1] <= 1e-6 and plan.entries[1, 0] <= 1e-6

    def test_constant_cost_gives_product(self):
        m = Marginals([0.2, 0.3, 0.5], [0.25, 0.75])
        plan = sinkhorn(np.full((3, 2), 0.7), m)
        np.testing.assert_allclose(plan.entries, np.outer(m.a, m.b), rtol=1e-13, atol=0)

    def test_five_by_five_vs_enumeration(self, rng):
        for _ in range(10):
            C = rng.random((5, 5))
            plan = sinkhorn(C, uniform_marginals(5, 5), SinkhornConfig(epsilon_rel=1e-3))
            assert abs(sharp_value(C, plan) - permutation_minimum(C.tolist()) / 5) <= 1e-3

    def test_epsilon_rule_and_floor(self):
        C = np.array([[0.0, 2.0], [2.0, 0.0]])
        assert sinkhorn(C, uniform_marginals(2, 2)).epsilon == pytest.approx(0.01)
        assert sinkhorn(np.zeros((2, 2)), uniform_marginals(2, 2)).epsilon == EPSILON_FLOOR

    def test_budget_exhaustion_is_not_an_error(self, rng):
        C = rng.random((6, 6))
        plan = sinkhorn(C, uniform_marginals(6, 6), SinkhornConfig(epsilon_rel=1e-3, max_iterations=1))
        assert not plan.converged
        assert plan.iterations_used == 1

    @pytest.mark.parametrize("bad", [np.nan, np.inf, -1.0])
    def test_bad_cost_raises(self, bad):
        C = np.ones((2, 2))
        C[0, 1] = bad
        with pytest.raises(ValueError):
            sinkhorn(C, uniform_marginals(2, 2))

    def test_nan_message(self):
        with pytest.raises(ValueError, match="NaN"):
            sinkhorn(np.array([[np.nan]]), uniform_marginals(1, 1))

    def test_marginal_shape_mismatch(self):
        with pytest.raises(ShapeError):
            sinkhorn(np.ones((2, 3)), uniform_marginals(2, 2))

    def test_rectangular_marginals(self, rng):
        C = build_cost(rng.random((4, 2)), rng.random((9, 2)))
        m = uniform_marginals(4, 9)
        plan = sinkhorn(C, m, SinkhornConfig(epsilon_rel=1e-3))
        assert plan.converged
        np.testing.assert_allclose(plan.entries.sum(axis=1), m.a, atol=1e-9)
        np.testing.assert_allclose(plan.entries.sum(axis=0), m.b, atol=1e-9)

    def test_zero_weight_points_get_no_mass(self, rng):
        C = rng.random((3, 4))
        m = Marginals([0.5, 0.0, 0.5], [0.25, 0.25, 0.0, 0.5])
        plan = sinkhorn(C, m)
        assert plan.converged
        assert np.all(plan.entries[1] == 0) and np.all(plan.entries[:, 2] == 0)

    def test_duplicate_points_allowed(self):
        pts = np.array([[0.2, 0.2], [0.2, 0.2], [0.8, 0.5]])
        plan = sinkhorn(build_cost(pts, pts), uniform_marginals(3, 3), SinkhornConfig(epsilon_rel=1e-3))
        assert plan.converged
        assert sharp_value(build_cost(pts, pts), plan) <= 1e-6

    def test_dual_value_is_entropic_objective(self, rng):
        C = rng.random((5, 5))
        m = uniform_marginals(5, 5)
        plan = sinkhorn(C, m, SinkhornConfig(epsilon_rel=0.1))
        P = plan.entries
        primal = math.fsum((C * P).ravel()) + plan.epsilon * math.fsum((P * (np.log(P) - 1)).ravel())
        assert plan.dual_value(m) == pytest.approx(primal, abs=1e-9)

    @given(costs)
    def test_converged_plans_feasible(self, C):
        n = len(C)
        m = uniform_marginals(n, n)
        plan = sinkhorn(C, m, SinkhornConfig(epsilon_rel=1e-2))
        assert np.all(plan.entries >= 0)
        if plan.converged:
            assert np.abs(plan.entries.sum(axis=1) - m.a).max() <= 1e-9
            assert np.abs(plan.entries.sum(axis=0) - m.b).max() <= 1e-9

    @given(costs, st.randoms(use_true_random=False))
    def test_row_permutation_equivariance(self, C, rnd):
        n = len(C)
        perm = list(range(n))
        rnd.shuffle(perm)
        cfg = SinkhornConfig(epsilon_rel=1e-2)
        base = sinkhorn(C, uniform_marginals(n, n), cfg)
        moved = sinkhorn(C[perm], uniform_marginals(n, n), cfg)
        np.testing.assert_allclose(moved.entries, base.entries[perm], atol=1e-9)
        assert abs(sharp_value(C[perm], moved) - sharp_value(C, base)) <= 1e-9

    @given(costs)
    def test_monotone_in_epsilon(self, C):
        n = len(C)
        m = uniform_marginals(n, n)
        fine = sharp_value(C, sinkhorn(C, m, SinkhornConfig(epsilon_rel=1e-3)))
        coarse = sharp_value(C, sinkhorn(C, m, SinkhornConfig(epsilon_rel=1e-1)))
        assert fine <= coarse + 1e-6

    @given(costs, st.floats(0.01, 100.0))
    def test_scale_equivariance(self, C, s):
        n = len(C)
        m = uniform_marginals(n, n)
        base = sinkhorn(C, m, SinkhornConfig(epsilon_rel=0.05))
        scaled = sinkhorn(s * C, m, SinkhornConfig(epsilon_rel=0.05))
        if base.epsilon > EPSILON_FLOOR and scaled.epsilon > EPSILON_FLOOR:
            np.testing.assert_allclose(scaled.entries, base.entries, atol=1e-9)
            assert sharp_value(s * C, scaled) == pytest.approx(s * sharp_value(C, base), rel=1e-9, abs=1e-12)

    def test_scale_equivariance_with_absolute_epsilon(self, rng):
        C = rng.random((6, 6))
        m = uniform_marginals(6, 6)
        base = sinkhorn(C, m, epsilon=0.01)
        scaled = sinkhorn(7.5 * C, m, epsilon=0.075)
        np.testing.assert_allclose(scaled.entries, base.entries, atol=1e-9)

    @given(costs)
    def test_entropic_gap_envelope(self, C):
        n = len(C)
        plan = sinkhorn(C, uniform_marginals(n, n), SinkhornConfig(epsilon_rel=1e-3))
        exact = exact_assignment_value(C)
        value = sharp_value(C, plan)
        # the bound uses the epsilon actually run, which is floored for tiny costs
        assert plan.epsilon == max(1e-3 * C.mean(), EPSILON_FLOOR)
        assert exact - 1e-9 <= value <= exact + plan.epsilon * math.log(n) * 10 + 1e-12

    def test_floored_epsilon_on_tiny_costs(self):
        C = np.array([[6.44705409e-10, 0.0], [0.0, 0.0]])
        plan = sinkhorn(C, uniform_marginals(2, 2), SinkhornConfig(epsilon_rel=1e-3))
        assert plan.epsilon == EPSILON_FLOOR
        assert sharp_value(C, plan) <= EPSILON_FLOOR * math.log(2)


class TestSharpValue:
    def test_zero_cost(self):
        assert sharp_value(np.zeros((3, 3)), np.full((3, 3), 1 / 9)) == 0.0

    def test_support_on_zero_entries(self):
        assert sharp_value(np.array([[0.0, 1.0], [1.0, 0.0]]), np.diag([0.5, 0.5])) == 0.0

    def test_matches_elementwise_sum(self, rng):
        C, P = rng.random((4, 6)), rng.random((4, 6))
        expected = sum(C[i, j] * P[i, j] for i in range(4) for j in range(6))
        assert sharp_value(C, P) == pytest.approx(expected, rel=1e-14)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            sharp_value(np.zeros((2, 2)), np.zeros((2, 3)))


class TestExactAssignment:
    def test_identity_matching(self):
        assert exact_assignment_value([[0, 1], [1, 0]]) == 0.0

    def test_all_equal(self):
        assert exact_assignment_value([[1, 1], [1, 1]]) == 1.0

    def test_non_square(self):
        with pytest.raises(ShapeError):
            exact_assignment_value(np.ones((2, 3)))

    def test_brute_force_and_hungarian_agree(self, rng):
        for _ in range(20):
            C = rng.random((7, 7))
            assert abs(brute_force_assignment(C)[0] - hungarian_assignment(C)[0]) <= 1e-12

    def test_hungarian_against_scipy(self, rng):
        optimize = pytest.importorskip("scipy.optimize")
        for n in [1, 3, 9, 10, 25]:
            C = rng.random((n, n))
            rows, cols = optimize.linear_sum_assignment(C)
            assert hungarian_assignment(C)[0] == pytest.approx(C[rows, cols].sum(), abs=1e-12)

    def test_returned_permutation_attains_value(self, rng):
        C = rng.random((6, 6))
        for solver in (brute_force_assignment, hungarian_assignment):
            total, sigma = solver(C)
            assert sorted(sigma) == list(range(6))
            assert total == pytest.approx(sum(C[i, sigma[i]] for i in range(6)), abs=1e-15)

    def test_ten_uses_hungarian_path(self, rng):
        C = rng.random((10, 10))
        assert exact_assignment_value(C) == pytest.approx(hungarian_assignment(C)[0] / 10, abs=0)


@pytest.mark.skipif(kernels.compiled is None, reason="compiled kernels not built")
def test_sinkhorn_backends_agree(rng):
    for n in [2, 5, 10, 30]:
        C = build_cost(rng.random((n, 2)), rng.random((n, 2)))
        m = uniform_marginals(n, n)
        eps = 0.01 * C.mean()
        args = (C, np.log(m.a), np.log(m.b), eps, np.zeros(n), np.zeros(n), 300, 1e-12)
        fp, gp, itp, *_ = kernels.python.sinkhorn_log(*args)
        fc, gc, itc, *_ = kernels.compiled.sinkhorn_log(*args)
        assert itp == itc
        np.testing.assert_allclose(fc, fp, atol=1e-12)
        np.testing.assert_allclose(gc, gp, atol=1e-12)
