import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from semitube_lab.errors import DimensionError, DomainError, PreconditionError, ResolutionError
from semitube_lab.fields import FunctionField, GridField, RegularGrid
from semitube_lab.geometry import ImplicitDomain
from semitube_lab.semitube import (
    AnnulusUnion,
    TruncationWarning,
    check_exhaustion,
    complex_hessian_min_fd,
    exhaustion_function_hl,
    fiber_intervals,
    lift_invariant_function,
    make_semitube,
    pi_map,
    pi_push,
    to_complex,
    to_real,
)
from semitube_lab.shapes import ball, slab_extrusion, torus


def two_shell():
    """Base whose slice over ``z1 = 0`` is ``(-2, -1) u (1, 2)``."""
    rho = FunctionField(3, lambda x: (np.abs(x[..., 2]) - 1.5) ** 2 - 0.25 + x[..., 0] ** 2 + x[..., 1] ** 2)
    return ImplicitDomain(rho, [-1.0, -1.0, -2.5], [1.0, 1.0, 2.5])


def slab_distance(x):
    """Exact distance to the boundary of (unit disc) x (0, 1)."""
    r = np.hypot(x[..., 0], x[..., 1])
    return np.minimum(1 - r, np.minimum(x[..., 2], 1 - x[..., 2]))


class TestBasics:
    def test_semitube_membership_ignores_imaginary_part(self, rng):
        S = make_semitube(ball())
        z = rng.normal(size=(500, 2)) * 0.7 + 1j * rng.normal(size=(500, 2)) * 0.7
        shifted = z.copy()
        shifted[:, 1] += 1j * rng.normal(size=500) * 100
        np.testing.assert_array_equal(S.contains(z), S.contains(shifted))

    def test_membership_by_effective_coordinates(self):
        S = make_semitube(ball())
        assert S.contains(np.array([0.5 + 0.5j, 0.5 + 9j]))
        assert not S.contains(np.array([0.5 + 0.5j, 0.8 + 0j]))

    def test_base_dimension(self):
        with pytest.raises(DimensionError):
            make_semitube(ball(center=(0.0, 0.0)))

    def test_real_complex_roundtrip(self, rng):
        z = rng.normal(size=(4, 2)) + 1j * rng.normal(size=(4, 2))
        np.testing.assert_array_equal(to_complex(to_real(z)), z)

    def test_pi_map(self):
        np.testing.assert_allclose(pi_map(np.array([0, 0])), [0, 1])
        np.testing.assert_allclose(pi_map(np.array([1j, np.log(2) + 1j * np.pi])), [1j, -2], atol=1e-15)


class TestSlices:
    def test_ball_center(self):
        s = fiber_intervals(ball(), 0j)
        assert len(s) == 1
        np.testing.assert_allclose(s.intervals[0], (-1, 1), atol=1e-9)

    def test_ball_outside(self):
        assert len(fiber_intervals(ball(), 1.2 + 0j)) == 0

    def test_two_intervals(self):
        s = fiber_intervals(two_shell(), 0j)
        np.testing.assert_allclose(s.intervals, [(-2, -1), (1, 2)], atol=1e-9)

    @pytest.mark.parametrize("x1,x2", [(0.0, 0.0), (0.2, 0.3), (-0.3, 0.5)])
    def test_vertical_torus_cross_section(self, x1, x2):
        # axis along x1: slice is sqrt(x2^2 + x3^2) in (1 - s, 1 + s), s = sqrt(r^2 - x1^2)
        s = np.sqrt(0.4**2 - x1**2)
        outer = np.sqrt((1 + s) ** 2 - x2**2)
        inner = np.sqrt((1 - s) ** 2 - x2**2)
        sl = fiber_intervals(torus(1.0, 0.4, axis=0), complex(x1, x2))
        np.testing.assert_allclose(sl.intervals, [(-outer, -inner), (inner, outer)], atol=1e-8)

    def test_truncation_warning(self):
        with pytest.warns(TruncationWarning):
            s = fiber_intervals(ball(), 0j, x3_range=(-0.5, 0.5))
        assert s.truncated

    def test_narrow_intervals_flagged(self):
        rho = FunctionField(3, lambda x: np.abs(x[..., 2]) - 1e-3 + 0 * x[..., 0])
        D = ImplicitDomain(rho, [-1, -1, -1], [1, 1, 1])
        assert fiber_intervals(D, 0j, scan=65).narrow == [True]
        with pytest.raises(ResolutionError):
            pi_push(make_semitube(D), scan=65, strict=True).fiber(0j)

    def test_mask_base_slice(self):
        grid = RegularGrid.covering([-1.1] * 3, [1.1] * 3, 0.1)
        mask = GridField(grid, np.sum(grid.nodes() ** 2, -1) < 1.0)
        s = fiber_intervals(mask, 0j)
        assert len(s) == 1 and abs(s.intervals[0][0] + 1) <= 0.1


class TestPush:
    def test_ball_fiber(self):
        G = pi_push(make_semitube(ball()))
        (r, R), = G.fiber(0j).radii
        assert r == pytest.approx(np.exp(-1), abs=1e-9)
        assert R == pytest.approx(np.e, abs=1e-9)
        assert r * R == pytest.approx(1.0, abs=1e-9)

    def test_two_annuli(self):
        G = pi_push(make_semitube(two_shell()))
        f = G.fiber(0j)
        np.testing.assert_allclose(f.radii, [(np.exp(-2), np.exp(-1)), (np.e, np.exp(2))], atol=1e-8)
        assert f.radii[0][1] < f.radii[1][0]

    def test_slab_fiber(self):
        G = pi_push(make_semitube(slab_extrusion("disc", (0.0, 1.0), sharpness=400)))
        (r, R), = G.fiber(0j).radii
        assert r == pytest.approx(1.0, abs=1e-3) and R == pytest.approx(np.e, abs=1e-2)

    def test_annulus_union_validation(self):
        with pytest.raises(PreconditionError):
            AnnulusUnion(((1.0, 2.0), (1.5, 3.0)))
        assert list(AnnulusUnion(((0.0, 1.0), (2.0, np.inf))).contains([0.5, 1.5, 1e9])) == [True, False, True]

    def test_rotational_invariance(self, rng):
        G = pi_push(make_semitube(torus(1.0, 0.4, axis=0)))
        z1 = rng.uniform(-0.4, 0.4, 300) + 1j * rng.uniform(-1.4, 1.4, 300)
        w = rng.uniform(0.1, 5, 300) * np.exp(1j * rng.uniform(0, 2 * np.pi, 300))
        a = G.contains(np.stack([z1, w], -1))
        b = G.contains(np.stack([z1, w * np.exp(1j * rng.uniform(0, 2 * np.pi, 300))], -1))
        np.testing.assert_array_equal(a, b)

    def test_covering_forward(self, rng):
        S = make_semitube(ball())
        G = pi_push(S)
        z = rng.uniform(-1, 1, (10_000, 2)) + 1j * rng.uniform(-1, 1, (10_000, 2)) * np.array([1, 10])
        z = z[S.contains(z)]
        assert len(z) > 1000
        assert G.contains(pi_map(z)).all()

    def test_covering_backward(self, rng):
        S = make_semitube(ball())
        G = pi_push(S)
        n = 10_000
        zeta = np.stack([rng.uniform(-1, 1, n) + 1j * rng.uniform(-1, 1, n),
                         rng.uniform(-3, 3, n) + 1j * rng.uniform(-3, 3, n)], -1)
        inside = G.contains(zeta)
        assert inside.sum() > 1000
        for k in (-2, 0, 3):
            pre = np.stack([zeta[:, 0], np.log(np.abs(zeta[:, 1])) + 1j * (np.angle(zeta[:, 1]) + 2 * np.pi * k)], -1)
            np.testing.assert_array_equal(S.contains(pre), inside)


class TestLift:
    def test_constant(self, rng):
        v = lift_invariant_function(lambda x: np.full(x.shape[:-1], 3.0))
        assert np.all(v(rng.normal(size=5) + 0j, rng.normal(size=5) + 1j) == 3.0)

    def test_real_part(self):
        v = lift_invariant_function(lambda x: x[..., 2])
        assert v(0.3 + 0.1j, 2.0 - 1.0j) == pytest.approx(np.log(np.sqrt(5)))

    def test_zero_rejected(self):
        v = lift_invariant_function(lambda x: x[..., 2])
        with pytest.raises(DomainError):
            v(0j, 0j)

    @given(st.floats(0, 2 * np.pi), st.integers(0, 2**31))
    def test_phase_invariance(self, theta, seed):
        r = np.random.default_rng(seed)
        v = lift_invariant_function(lambda x: np.sin(x[..., 0]) * x[..., 2] ** 3 + x[..., 1])
        z = r.normal(size=10) + 1j * r.normal(size=10)
        w = r.normal(size=10) + 1j * r.normal(size=10)
        np.testing.assert_array_equal(v(z, w), v(z, w * np.exp(1j * theta))) if theta == 0 else \
            np.testing.assert_allclose(v(z, w), v(z, w * np.exp(1j * theta)), rtol=1e-13, atol=1e-13)


class TestExhaustionFunction:
    u = staticmethod(lambda x: -np.log(np.maximum(slab_distance(x), 1e-300)))

    def test_blow_up_at_inner_circle(self):
        vt = exhaustion_function_hl(self.u)
        radii = 1 + np.geomspace(0.3, 1e-8, 40)
        vals = vt(np.full(40, 0j), radii + 0j)
        assert np.all(np.diff(vals) > 0) and vals[-1] > 15

    def test_dominates_both_branches(self, rng):
        vt = exhaustion_function_hl(self.u)
        z = 0.5 * (rng.normal(size=200) + 1j * rng.normal(size=200))
        w = np.exp(rng.uniform(0.05, 0.95, 200)) * np.exp(1j * rng.uniform(0, 7, 200))
        v = vt(z, w)
        assert np.all(v >= vt.branch(z, w))
        assert np.all(v >= np.abs(z) ** 2 + np.abs(w) ** 2)

    def test_sublevel_bounded_and_psh(self, rng):
        G = pi_push(make_semitube(slab_extrusion("disc", (0.0, 1.0), sharpness=400)))
        vt = exhaustion_function_hl(self.u)
        n = 4000
        z1 = 0.95 * np.sqrt(rng.random(n)) * np.exp(2j * np.pi * rng.random(n))
        w = np.exp(rng.uniform(0.01, 0.99, n)) * np.exp(2j * np.pi * rng.random(n))
        pts = np.stack([z1, w], -1)
        chk = check_exhaustion(vt, G, pts, level=9.0, psh_points=pts[:200])
        assert chk.n_sublevel > 100
        assert chk.bounded and chk.min_fiber_gap > 0
        # -log of the distance to a convex set is convex, hence psh after the lift
        assert chk.psh_min >= -1e-3

    def test_fd_complex_hessian_of_norm(self):
        vals = complex_hessian_min_fd(lambda z, w: np.abs(z) ** 2 + np.abs(w) ** 2, np.array([[0.3 + 0.1j, 1.2 - 0.4j]]))
        assert vals[0] == pytest.approx(1.0, abs=1e-4)
