import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import ndimage

from semitube_lab.errors import DegenerateMaskError, DomainError, StencilTooSmallError
from semitube_lab.fields import (
    ExtendedField,
    FunctionField,
    GridField,
    MollifierKernel,
    PullbackField,
    QuadraticField,
    RegularGrid,
    SmoothMax,
    distance_field,
    gradient_at_nodes,
    hessian_at_nodes,
    mollify,
)


def alpha_quadratic(alpha=1.0):
    return QuadraticField.from_diagonal([1.0, 1.0, 1.0, -alpha])


class TestQuadratic:
    def test_zero_input(self):
        q = QuadraticField(0.0, np.zeros(2), np.diag([1.0, -1.0]))
        assert q.value(np.zeros(2)) == 0.0

    def test_substitution_on_the_quadric(self):
        assert alpha_quadratic().value(np.array([2.0, 0, 0, 2.0])) == 0.0

    def test_gradient_is_b_plus_2qx(self):
        g = alpha_quadratic().gradient(np.array([1.0, 0, 0, 1.0]))
        np.testing.assert_array_equal(g, [2.0, 0, 0, -2.0])

    def test_gradient_at_critical_point(self):
        np.testing.assert_array_equal(alpha_quadratic().gradient(np.zeros(4)), np.zeros(4))

    def test_hessian_is_constant(self, rng):
        H = alpha_quadratic().hessian(rng.normal(size=(5, 4)))
        for h in H:
            np.testing.assert_array_equal(h, np.diag([2.0, 2, 2, -2]))

    def test_linear_field_has_zero_hessian(self):
        q = QuadraticField(1.0, np.array([1.0, 2.0]), np.zeros((2, 2)))
        np.testing.assert_array_equal(q.hessian(np.ones(2)), np.zeros((2, 2)))

    def test_asymmetric_q_rejected(self):
        with pytest.raises(ValueError):
            QuadraticField(0.0, np.zeros(2), np.array([[1.0, 1.0], [0.0, 1.0]]))

    def test_vectorised_shapes(self, rng):
        q = alpha_quadratic()
        x = rng.normal(size=(3, 7, 4))
        assert q.value(x).shape == (3, 7)
        assert q.gradient(x).shape == (3, 7, 4)
        assert q.hessian(x).shape == (3, 7, 4, 4)


class TestGridField:
    def test_linear_interpolation_identity(self):
        grid = RegularGrid.covering([-1.0], [1.0], 0.1)
        f = GridField.sample(grid, lambda x: x[..., 0] ** 2)
        assert f.value(np.array([0.55])) == pytest.approx(0.305, abs=1e-12)

    def test_gradient_of_product(self):
        grid = RegularGrid.covering([-1.0, -1.0], [1.0, 1.0], 0.05)
        f = GridField.sample(grid, lambda x: x[..., 0] * x[..., 1])
        np.testing.assert_allclose(f.gradient(np.array([0.3, 0.7])), [0.7, 0.3], atol=1e-6)

    def test_hessian_of_saddle(self, rng):
        grid = RegularGrid.covering([-1.0, -1.0], [1.0, 1.0], 0.05)
        f = GridField.sample(grid, lambda x: x[..., 0] ** 2 - x[..., 1] ** 2)
        for p in rng.uniform(-0.8, 0.8, size=(20, 2)):
            np.testing.assert_allclose(f.hessian(p), np.diag([2.0, -2.0]), atol=1e-4)

    def test_out_of_bounds(self):
        grid = RegularGrid.covering([0.0], [1.0], 0.1)
        f = GridField.sample(grid, lambda x: x[..., 0])
        with pytest.raises(DomainError):
            f.value(np.array([1.5]))

    def test_boundary_adjacent_derivative_rejected(self):
        grid = RegularGrid.covering([0.0, 0.0], [1.0, 1.0], 0.1)
        f = GridField.sample(grid, lambda x: x[..., 0])
        with pytest.raises(DomainError):
            f.gradient(np.array([0.02, 0.5]))

    def test_sentinel_propagates(self):
        grid = RegularGrid.covering([0.0], [1.0], 0.5)
        f = GridField(grid, np.array([0.0, 1.0, -np.inf]))
        assert f.value(np.array([0.25])) == pytest.approx(0.5)
        assert f.value(np.array([0.75])) == -np.inf

    def test_nodal_differences_match_polynomial(self, rng):
        h = 0.05
        grid = RegularGrid.covering([-1.0] * 3, [1.0] * 3, h)
        x = grid.nodes()
        vals = x[..., 0] ** 2 * x[..., 1] + x[..., 2] ** 3
        idx = rng.integers(1, np.array(grid.shape) - 1, size=(50, 3))
        p = grid.point(idx)
        g_exact = np.stack([2 * p[:, 0] * p[:, 1], p[:, 0] ** 2, 3 * p[:, 2] ** 2], axis=1)
        np.testing.assert_allclose(gradient_at_nodes(vals, h, idx), g_exact, atol=10 * h**2)
        H = hessian_at_nodes(vals, h, idx)
        np.testing.assert_allclose(H[:, 0, 1], 2 * p[:, 0], atol=10 * h**2)
        np.testing.assert_allclose(H[:, 2, 2], 6 * p[:, 2], atol=10 * h**2)


class TestDerivedFields:
    def test_function_field_finite_differences(self):
        f = FunctionField(2, lambda x: np.sin(x[..., 0]) * x[..., 1])
        x = np.array([0.3, 2.0])
        np.testing.assert_allclose(f.gradient(x), [2 * np.cos(0.3), np.sin(0.3)], atol=1e-6)
        np.testing.assert_allclose(f.hessian(x), [[-2 * np.sin(0.3), np.cos(0.3)], [np.cos(0.3), 0.0]], atol=1e-4)

    def test_smooth_max_derivatives_match_finite_differences(self, rng):
        a = QuadraticField(0.0, np.array([1.0, 0.0]), np.zeros((2, 2)))
        b = QuadraticField(-0.5, np.zeros(2), np.eye(2))
        m = SmoothMax([a, b], 10.0)
        fd = FunctionField(2, m.value)
        for x in rng.uniform(-1, 1, size=(5, 2)):
            np.testing.assert_allclose(m.gradient(x), fd.gradient(x), atol=1e-6)
            np.testing.assert_allclose(m.hessian(x), fd.hessian(x), atol=1e-3)

    def test_smooth_max_upper_bound(self, rng):
        a = QuadraticField(0.0, np.array([1.0, 0.0]), np.zeros((2, 2)))
        b = QuadraticField(0.0, np.array([0.0, 1.0]), np.zeros((2, 2)))
        s = 40.0
        x = rng.normal(size=(100, 2))
        v = SmoothMax([a, b], s).value(x)
        hard = np.maximum(x[:, 0], x[:, 1])
        assert np.all(v >= hard - 1e-12)
        assert np.all(v <= hard + np.log(2) / s + 1e-12)

    def test_pullback_composition(self, rng):
        q = QuadraticField(0.0, np.zeros(2), np.diag([1.0, 3.0]))
        th = 0.7
        O = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        t = np.array([0.2, -1.0])
        f = PullbackField(q, O, t)
        x = rng.normal(size=(10, 2))
        np.testing.assert_allclose(f.value(x), q.value((x - t) @ O), atol=1e-12)

    def test_extended_field_ignores_other_coordinates(self):
        q = QuadraticField(-1.0, np.zeros(3), np.eye(3))
        e = ExtendedField(q, 4, [0, 1, 2])
        a = np.array([0.5, 0.0, 0.3, 0.0])
        b = np.array([0.5, 0.0, 0.3, 17.0])
        assert e.value(a) == e.value(b)
        assert e.hessian(a)[3].tolist() == [0.0] * 4


class TestDistanceField:
    def test_interval_center(self):
        grid = RegularGrid.covering([-0.25], [1.25], 0.25)
        mask = GridField(grid, (grid.nodes()[..., 0] >= 0) & (grid.nodes()[..., 0] <= 1))
        d = distance_field(mask)
        assert d.values[grid.nearest_index(np.array([0.5]))] == pytest.approx(0.75)
        # the nearest outside node of the centre is one spacing beyond the last inside node

    def test_single_inside_node(self):
        grid = RegularGrid.covering([0.0, 0.0], [1.0, 1.0], 0.25)
        vals = np.zeros(grid.shape, dtype=bool)
        vals[2, 2] = True
        d = distance_field(GridField(grid, vals))
        assert d.values[2, 2] == pytest.approx(0.25)
        assert d.values.sum() == pytest.approx(0.25)

    def test_ball_origin(self):
        grid = RegularGrid.covering([-1.1] * 3, [1.1] * 3, 0.05)
        x = grid.nodes()
        ball = GridField(grid, np.sum(x**2, -1) < 1.0)
        d = distance_field(ball)
        o = grid.nearest_index(np.zeros(3))
        assert abs(d.values[o] - 1.0) <= 0.05
        inside = ball.values
        err = np.abs(d.values[inside] - (1 - np.linalg.norm(x[inside], axis=-1)))
        assert err.max() <= 0.05

    def test_matches_scipy_oracle(self, rng):
        grid = RegularGrid((0.0, 0.0, 0.0), 0.1, (17, 13, 11))
        vals = rng.random(grid.shape) < 0.8
        vals[0, 0, 0] = False
        ref = ndimage.distance_transform_edt(vals) * 0.1
        np.testing.assert_allclose(distance_field(GridField(grid, vals)).values, ref, atol=1e-12)

    @pytest.mark.parametrize("fill", [True, False])
    def test_degenerate(self, fill):
        grid = RegularGrid.covering([0.0], [1.0], 0.25)
        with pytest.raises(DegenerateMaskError):
            distance_field(GridField(grid, np.full(grid.shape, fill)))


class TestMollify:
    def grid2(self):
        return RegularGrid.covering([-1.0, -1.0], [1.0, 1.0], 0.05)

    def test_kernel_normalised_and_radial(self):
        k = MollifierKernel(0.17, 0.05, 3)
        assert k.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(k.weights > 0)
        by_radius = {}
        for sq, w in zip(k.squared_norms, k.weights):
            by_radius.setdefault(int(sq), set()).add(round(float(w), 15))
        assert all(len(v) == 1 for v in by_radius.values())
        assert np.all(np.sqrt(k.squared_norms) * 0.05 < 0.17)

    def test_constant_preserved(self):
        f = GridField(self.grid2(), np.full(self.grid2().shape, 5.0))
        out = mollify(f, 0.2)
        assert np.allclose(out.values[out.defined], 5.0, atol=1e-12, rtol=0)

    def test_affine_preserved(self):
        f = GridField.sample(self.grid2(), lambda x: 2 * x[..., 0] - x[..., 1])
        out = mollify(f, 0.2)
        np.testing.assert_allclose(out.values[out.defined], f.values[out.defined], atol=1e-12)

    def test_convex_quadratic_shift(self):
        grid = self.grid2()
        f = GridField.sample(grid, lambda x: x[..., 0] ** 2)
        eps = 0.2
        k = MollifierKernel(eps, grid.spacing, 2)
        s = float(np.sum(k.weights * (k.offsets[:, 0] * grid.spacing) ** 2))
        out = mollify(f, eps)
        np.testing.assert_allclose(out.values[out.defined] - f.values[out.defined], s, atol=1e-12)
        assert s > 0

    def test_support_shrinks_by_eps(self):
        grid = self.grid2()
        f = GridField.sample(grid, lambda x: x[..., 0])
        out = mollify(f, 0.2)
        reach = MollifierKernel(0.2, grid.spacing, 2).offsets.max() * grid.spacing
        assert reach < 0.2
        pts = grid.nodes()[out.defined]
        assert pts.min() == pytest.approx(-1.0 + reach)
        assert pts.max() == pytest.approx(1.0 - reach)

    def test_small_stencil_rejected(self):
        f = GridField(self.grid2(), np.zeros(self.grid2().shape))
        with pytest.raises(StencilTooSmallError):
            mollify(f, 0.09)

    def test_fft_and_direct_agree(self, rng):
        grid = RegularGrid.covering([-1.0] * 3, [1.0] * 3, 0.1)
        vals = rng.normal(size=grid.shape)
        vals[rng.random(grid.shape) < 0.02] = -np.inf
        f = GridField(grid, vals)
        a = mollify(f, 0.25, method="direct")
        b = mollify(f, 0.25, method="fft")
        np.testing.assert_array_equal(a.defined, b.defined)
        np.testing.assert_allclose(a.values[a.defined], b.values[b.defined], atol=1e-10)

    def test_jensen_for_convex_samples(self, rng):
        grid = self.grid2()
        f = GridField.sample(grid, lambda x: np.exp(x[..., 0]) + x[..., 1] ** 4)
        out = mollify(f, 0.15)
        assert np.all(out.values[out.defined] >= f.values[out.defined] - 1e-12)

    @given(st.floats(0.1, 0.4), st.integers(0, 2**31))
    def test_order_preserving(self, eps, seed):
        r = np.random.default_rng(seed)
        grid = RegularGrid.covering([-1.0, -1.0], [1.0, 1.0], 0.05)
        f = r.normal(size=grid.shape)
        g = f + r.random(grid.shape)
        a = mollify(GridField(grid, f), eps, method="direct")
        b = mollify(GridField(grid, g), eps, method="direct")
        assert np.all(a.values[a.defined] <= b.values[b.defined])

    @given(st.floats(-5, 5), st.floats(0.1, 0.4))
    def test_constants_exact(self, c, eps):
        grid = RegularGrid.covering([-1.0, -1.0], [1.0, 1.0], 0.05)
        out = mollify(GridField(grid, np.full(grid.shape, c)), eps)
        assert np.allclose(out.values[out.defined], c, rtol=0, atol=1e-12)
