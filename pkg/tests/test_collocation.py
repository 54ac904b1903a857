import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conspinn.collocation import (AxisSamples, QuadGrid, TensorBatch, TimeGrid, epoch_seed, gauss_legendre,
                                  sample_gamma_minus, sample_uniform)
from conspinn.errors import InvalidInputError


class TestSampleUniform:
    def test_deterministic(self):
        a = sample_uniform(1, 5, 0.0, 1.0)
        b = sample_uniform(1, 5, 0.0, 1.0)
        np.testing.assert_array_equal(a.values, b.values)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 200), st.floats(-10, 10), st.floats(0.01, 10))
    def test_in_bounds_and_sorted(self, seed, n, lo, width):
        s = sample_uniform(seed, n, lo, lo + width, "v")
        assert s.values.size == n
        assert np.all((s.values >= lo) & (s.values <= lo + width))
        assert np.all(np.diff(s.values) >= 0)

    def test_law_of_large_numbers(self):
        assert 0.497 <= sample_uniform(3, 100_000, 0.0, 1.0).values.mean() <= 0.503

    def test_zero_count(self):
        with pytest.raises(InvalidInputError):
            sample_uniform(0, 0, 0.0, 1.0)

    def test_empty_interval(self):
        with pytest.raises(InvalidInputError):
            sample_uniform(0, 3, 1.0, 1.0)

    def test_epoch_seeds_give_distinct_streams(self):
        a = sample_uniform(epoch_seed(0, 1, 0), 8, 0, 1).values
        b = sample_uniform(epoch_seed(0, 2, 0), 8, 0, 1).values
        c = sample_uniform(epoch_seed(0, 1, 1), 8, 0, 1).values
        assert not np.array_equal(a, b) and not np.array_equal(a, c)


class TestGaussLegendre:
    def test_one_node(self):
        n, w = gauss_legendre(1, 2.0, 5.0)
        assert n[0] == pytest.approx(3.5) and w[0] == pytest.approx(3.0)

    def test_two_nodes(self):
        n, w = gauss_legendre(2, -1.0, 1.0)
        np.testing.assert_allclose(n, [-0.5773502691896258, 0.5773502691896258], rtol=1e-15)
        np.testing.assert_allclose(w, [1.0, 1.0], rtol=1e-15)

    def test_sixth_power(self):
        n, w = gauss_legendre(8, 0.0, 1.0)
        assert abs(np.sum(w * n**6) - 1 / 7) <= 1e-14

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 20), st.floats(-5, 5), st.floats(0.1, 10))
    def test_weights_positive_and_sum_to_length(self, n, lo, width):
        nodes, w = gauss_legendre(n, lo, lo + width)
        assert np.all(w > 0)
        assert w.sum() == pytest.approx(width, rel=1e-13)
        assert np.all((nodes > lo) & (nodes < lo + width))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 12), st.data())
    def test_polynomial_exactness(self, n, data):
        deg = data.draw(st.integers(0, 2 * n - 1))
        nodes, w = gauss_legendre(n, -1.0, 2.0)
        exact = (2.0 ** (deg + 1) - (-1.0) ** (deg + 1)) / (deg + 1)
        assert np.sum(w * nodes**deg) == pytest.approx(exact, rel=1e-12, abs=1e-12)


class TestGammaMinus:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 40))
    def test_membership_and_balance(self, seed, n):
        batch = sample_gamma_minus(seed, n, 5.0, 2.0)
        pts = batch.points()
        left = (pts[:, 1] == 0) & (pts[:, 2] > 0) & (pts[:, 2] < 5)
        right = (pts[:, 1] == 1) & (pts[:, 2] < 0) & (pts[:, 2] > -5)
        assert np.all(left | right)
        v = batch.axes[1].values
        assert abs(int((v > 0).sum()) - int((v < 0).sum())) <= 1
        assert np.all((pts[:, 0] >= 0) & (pts[:, 0] <= 2.0))

    def test_deterministic(self):
        a = sample_gamma_minus(4, 9, 5.0).points()
        b = sample_gamma_minus(4, 9, 5.0).points()
        np.testing.assert_array_equal(a, b)

    def test_cardinality(self):
        assert len(sample_gamma_minus(0, 7, 5.0)) == 49


class TestTensorBatch:
    def test_interior_cardinality(self):
        axes = tuple(sample_uniform(i, 16, 0, 1, a) for i, a in enumerate(("t", "x", "v")))
        batch = TensorBatch(axes, "interior")
        assert len(batch) == 16**3 and batch.points().shape == (4096, 3)

    def test_grid_order(self):
        axes = (AxisSamples("t", np.array([0.1, 0.2]), 0, 1), AxisSamples("x", np.array([0.5, 0.6, 0.7]), 0, 1))
        g = TensorBatch(axes, "interior").grid()
        np.testing.assert_array_equal(g[:3, 0], 0.1)
        np.testing.assert_array_equal(g[:3, 1], [0.5, 0.6, 0.7])

    def test_initial_prepends_zero_time(self):
        axes = (AxisSamples("x", np.array([0.25]), 0, 1), AxisSamples("v", np.array([1.0, 2.0]), -5, 5))
        np.testing.assert_array_equal(TensorBatch(axes, "initial").points(), [[0, 0.25, 1.0], [0, 0.25, 2.0]])

    def test_role_rules(self):
        x = AxisSamples("x", np.array([0.5]), 0, 1)
        t = AxisSamples("t", np.array([0.5]), 0, 1)
        with pytest.raises(InvalidInputError):
            TensorBatch((x,), "interior")
        with pytest.raises(InvalidInputError):
            TensorBatch((t, x), "initial")
        with pytest.raises(InvalidInputError):
            TensorBatch((t, AxisSamples("v", np.array([0.0]), -1, 1)), "boundary")
        with pytest.raises(InvalidInputError):
            TensorBatch((t,), "corner")

    def test_axis_validation(self):
        with pytest.raises(InvalidInputError):
            AxisSamples("x", np.array([1.5]), 0, 1)
        with pytest.raises(InvalidInputError):
            AxisSamples("x", np.array([]), 0, 1)
        with pytest.raises(InvalidInputError):
            AxisSamples("w", np.array([0.5]), 0, 1)


class TestGrids:
    def test_time_grid(self):
        g = TimeGrid.uniform(4, 2.0)
        np.testing.assert_allclose(g.values, [0.25, 0.75, 1.25, 1.75])
        assert g.M == 4 and g.weight == 0.5

    def test_time_grid_invalid(self):
        with pytest.raises(InvalidInputError):
            TimeGrid.uniform(0, 1.0)

    def test_quad_grid(self):
        q = QuadGrid.build((5, 7), ((0, 1), (-5, 5)))
        assert q.dimension == 2
        assert q.points().shape == (35, 2)
        w = q.flat_weights()
        assert np.all(w > 0) and w.sum() == pytest.approx(10.0, rel=1e-14)
        # x * v^2 integrates to 1/2 * 250/3
        assert np.dot(w, q.points()[:, 0] * q.points()[:, 1] ** 2) == pytest.approx(125 / 3, rel=1e-13)
