import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asyncsprt import (
    CorrelationKernel,
    Scenario,
    ScenarioError,
    block_inverse,
    build_covariance,
    covariance_stack,
    eval_kernel,
    validate_scenario,
)
from asyncsprt.correlation import SingularCovarianceError, CovarianceMatrix, arrowhead

from helpers import gauss_jordan_inverse, random_scenario, random_times

SQEXP = CorrelationKernel.squared_exponential()
EXP = CorrelationKernel.exponential()


class TestKernel:
    def test_zero_distance_is_one(self):
        assert eval_kernel(SQEXP, 0.0) == 1.0
        assert eval_kernel(EXP, 0.0) == 1.0

    def test_reference_values(self):
        assert eval_kernel(SQEXP, 1.0) == pytest.approx(math.exp(-1.0), abs=1e-15)
        assert eval_kernel(SQEXP, 1.0) == pytest.approx(0.367879, abs=5e-7)
        assert eval_kernel(EXP, 2.0) == pytest.approx(0.135335, abs=5e-7)

    def test_length_scale(self):
        assert eval_kernel(CorrelationKernel.exponential(0.5), 1.0) == pytest.approx(math.exp(-2.0))
        assert eval_kernel(CorrelationKernel.squared_exponential(2.0), 1.0) == pytest.approx(math.exp(-0.25))

    def test_negative_distance_rejected(self):
        with pytest.raises(ValueError):
            eval_kernel(SQEXP, -1e-3)
        with pytest.raises(ValueError):
            eval_kernel(EXP, np.array([0.1, -0.2]))

    def test_tabulated_interpolates(self):
        k = CorrelationKernel.tabulated([0.0, 1.0, 2.0], [1.0, 0.5, 0.25])
        assert k(0.0) == 1.0
        assert k(0.5) == pytest.approx(0.75)
        assert k(1.5) == pytest.approx(0.375)
        with pytest.raises(ValueError):
            k(2.5)
        assert k.violations() == []

    @pytest.mark.parametrize(
        "d, v",
        [([0.1, 1.0], [1.0, 0.5]), ([0.0, 1.0], [0.9, 0.5]), ([0.0, 1.0, 2.0], [1.0, 0.5, 0.5]),
         ([0.0, 1.0], [1.0, 0.0]), ([0.0, 1.0, 1.0], [1.0, 0.6, 0.5])],
    )
    def test_tabulated_invariants(self, d, v):
        assert CorrelationKernel.tabulated(d, v).violations()

    @pytest.mark.parametrize("kernel", [SQEXP, EXP, CorrelationKernel.exponential(0.3),
                                        CorrelationKernel.tabulated([0, 1, 3], [1, 0.4, 0.1])])
    @given(a=st.floats(0, 3), b=st.floats(0, 3))
    def test_strictly_decreasing(self, kernel, a, b):
        if a == b:
            return
        lo, hi = min(a, b), max(a, b)
        # strictness is only resolvable in double precision for separated arguments
        assert eval_kernel(kernel, lo) >= eval_kernel(kernel, hi)
        if hi - lo > 1e-6:
            assert eval_kernel(kernel, lo) > eval_kernel(kernel, hi)
        assert 0 < eval_kernel(kernel, hi) <= 1

    def test_monotone_on_dense_grid(self):
        d = np.linspace(0, 3, 10_001)
        for k in (SQEXP, EXP, CorrelationKernel.tabulated([0, 1, 3], [1, 0.4, 0.1])):
            assert np.all(np.diff(k(d)) < 0)


class TestValidateScenario:
    def test_feasible_pair(self):
        s = Scenario.build(0.5, [0.6, 0.6])
        assert validate_scenario(s) == []

    def test_infeasible_pair_names_sum(self):
        s = Scenario.build(0.5, [0.8, 0.7])
        (msg,) = validate_scenario(s)
        assert "Σρ²=1.13" in msg and "≥ 1" in msg

    def test_zero_correlation(self):
        assert validate_scenario(Scenario.build(0.5, [0.0])) == []

    def test_margin_near_boundary(self):
        assert validate_scenario(Scenario.build(0.5, [math.sqrt(1 - 1e-10)]))
        assert validate_scenario(Scenario.build(0.5, [math.sqrt(1 - 1e-8)])) == []

    def test_lists_each_violation(self):
        s = Scenario.build(
            0.5, [0.9, 0.9], noise_variance=0.0, window=-1.0, t_fc=2.0,
            kernel=CorrelationKernel.exponential(-1.0),
        )
        v = validate_scenario(s)
        assert len(v) >= 5
        text = " ".join(v)
        for needle in ("Σρ²", "noise_variance", "window", "t_fc", "length_scale"):
            assert needle in text

    def test_short_tabulated_support(self):
        k = CorrelationKernel.tabulated([0, 0.5], [1, 0.5])
        s = Scenario.build(0.5, [0.3], kernel=k, window=1.0, t_fc=0.0)
        assert any("support" in v for v in validate_scenario(s))

    def test_shape_mismatch_raises(self):
        with pytest.raises(ValueError):
            Scenario(signals=[0.5, 0.5], correlations=[0.1], kernels=SQEXP)


class TestBuildCovariance:
    def test_synchronous_single_sensor(self):
        s = Scenario.build(0.5, [0.5], noise_variance=2.0)
        c = build_covariance(s, [0.0])
        np.testing.assert_array_equal(c.matrix, 2.0 * np.array([[1.0, 0.5], [0.5, 1.0]]))
        assert c.d_fc == pytest.approx(0.75)

    def test_uncorrelated_is_scaled_identity(self):
        s = Scenario.build(0.5, [0.0], noise_variance=1.7, window=2.0)
        for t in (0.0, 0.3, 2.0):
            np.testing.assert_array_equal(build_covariance(s, [t]).matrix, 1.7 * np.eye(2))

    def test_zero_rho_is_exactly_zero_for_any_kernel(self):
        k = CorrelationKernel.tabulated([0, 2], [1, 0.2])
        s = Scenario(signals=[1.0, 1.0], correlations=[0.0, 0.3], kernels=(k, SQEXP))
        c = build_covariance(s, [0.7, 0.7])
        assert c.r_fc[0] == 0.0

    def test_fc_entries_at_distance_one(self):
        s = Scenario.build(0.5, [0.2, -0.2], window=1.0, t_fc=0.0)
        c = build_covariance(s, [1.0, 1.0])
        e = math.exp(-1.0)
        np.testing.assert_allclose(c.matrix[:2, 2], [0.2 * e, -0.2 * e], rtol=0, atol=1e-15)
        np.testing.assert_array_equal(c.matrix[:2, :2], np.eye(2))
        assert c.matrix[2, 2] == 1.0

    def test_rejects_invalid_scenario(self):
        with pytest.raises(ScenarioError, match="Σρ²"):
            build_covariance(Scenario.build(0.5, [0.8, 0.7]), [0.0, 0.0])

    def test_rejects_times_outside_box(self):
        s = Scenario.build(0.5, [0.2], window=1.0)
        with pytest.raises(ScenarioError):
            build_covariance(s, [1.5])
        with pytest.raises(ScenarioError):
            build_covariance(s, [0.1, 0.2])

    def test_symmetric_bitwise_and_structured(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            s = random_scenario(rng)
            c = build_covariance(s, random_times(rng, s))
            assert np.array_equal(c.matrix, c.matrix.T)
            n = s.n_sensors
            np.testing.assert_array_equal(c.matrix[:n, :n], s.noise_variance * np.eye(n))
            np.testing.assert_array_equal(c.matrix[:n, n], s.noise_variance * c.r_fc)
            assert c.matrix[n, n] == s.noise_variance
            assert c.d_fc == pytest.approx(1 - c.r_fc @ c.r_fc, abs=1e-15)

    def test_stack_matches_single(self):
        rng = np.random.default_rng(7)
        s = random_scenario(rng, n=3)
        t = random_times(rng, s, 20).reshape(4, 5, 3)
        stack = covariance_stack(s, t)
        assert stack.shape == (4, 5, 4, 4)
        for i in range(4):
            for j in range(5):
                np.testing.assert_array_equal(stack[i, j], build_covariance(s, t[i, j]).matrix)

    def test_matrix_is_read_only(self):
        c = build_covariance(Scenario.build(0.5, [0.2]), [0.0])
        with pytest.raises(ValueError):
            c.matrix[0, 0] = 3.0

    def test_positive_definite_over_random_draws(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            s = random_scenario(rng, max_sum_sq=0.999)
            for t in random_times(rng, s, 40):
                c = build_covariance(s, t)
                assert c.is_positive_definite()
                assert np.linalg.eigvalsh(c.matrix).min() > 0


class TestBlockInverse:
    def test_identity_case(self):
        c = build_covariance(Scenario.build(0.5, [0.0], noise_variance=4.0), [0.0])
        np.testing.assert_allclose(block_inverse(c), np.eye(2) / 4.0, atol=1e-15)

    def test_two_by_two(self):
        c = build_covariance(Scenario.build(0.5, [0.5]), [0.0])
        expected = np.array([[4 / 3, -2 / 3], [-2 / 3, 4 / 3]])
        np.testing.assert_allclose(block_inverse(c), expected, atol=1e-15)
        np.testing.assert_allclose(gauss_jordan_inverse(c.matrix), expected, atol=1e-15)

    def test_singular_raises(self):
        r = np.array([0.6, 0.8])
        c = CovarianceMatrix(arrowhead(r, 1.0), r, 1.0 - r @ r, 1.0)
        with pytest.raises(SingularCovarianceError):
            block_inverse(c)

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(300):
            s = random_scenario(rng)
            c = build_covariance(s, random_times(rng, s))
            inv = block_inverse(c)
            np.testing.assert_allclose(inv, gauss_jordan_inverse(c.matrix), rtol=0, atol=1e-10)
            assert np.abs(inv @ c.matrix - np.eye(s.n_sensors + 1)).max() <= 1e-10

    @settings(max_examples=60, deadline=None)
    @given(
        rho=st.lists(st.floats(-0.6, 0.6), min_size=1, max_size=5),
        var=st.floats(0.05, 20.0),
        t=st.floats(0.0, 1.0),
    )
    def test_identity_product_property(self, rho, var, t):
        rho = np.array(rho)
        if rho @ rho >= 0.99:
            rho = rho / np.sqrt(rho @ rho) * 0.9
        s = Scenario.build(1.0, rho, noise_variance=var, window=1.0, t_fc=0.5)
        c = build_covariance(s, np.full(rho.size, t))
        prod = block_inverse(c) @ c.matrix
        assert np.abs(prod - np.eye(rho.size + 1)).max() <= 1e-10
