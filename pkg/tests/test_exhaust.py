import warnings

import numpy as np
import pytest

from semitube_lab.classify import complex_hessian
from semitube_lab.errors import EmptyDomainError, NoRegularValueError, PreconditionError
from semitube_lab.exhaust import (
    ExhaustionStage,
    StageTruncationWarning,
    build_exhaustion,
    build_u,
    bump,
    component_of,
    delta_candidates,
    distance_from_u,
    make_stage,
    pick_delta,
    regularize,
    shrink,
    stage_levi_eigs,
    verify_stage,
)
from semitube_lab.fields import GridField, RegularGrid
from semitube_lab.semitube import make_semitube
from semitube_lab.shapes import ball, slab_extrusion


@pytest.fixture(scope="module")
def ball_setup():
    grid = RegularGrid.covering([-1.1] * 3, [1.1] * 3, 0.04)
    G = make_semitube(ball())
    return G, grid, build_u(G, grid)


@pytest.fixture(scope="module")
def slab_setup():
    G = make_semitube(slab_extrusion("disc", (0.0, 1.0), radius=0.6, sharpness=400))
    grid = RegularGrid.covering([-0.7, -0.7, -0.1], [0.7, 0.7, 1.1], 0.02)
    return G, grid


class TestU:
    def test_slab_center(self):
        G = make_semitube(slab_extrusion("rectangle", (0.0, 1.0), rect_lo=(-3, -3), rect_hi=(3, 3), sharpness=400))
        grid = RegularGrid.covering([-3.2, -3.2, -0.25], [3.2, 3.2, 1.25], 0.05)
        u = build_u(G, grid)
        c = grid.nearest_index(np.array([0.0, 0.0, 0.5]))
        # nodes on x3 = 0 and x3 = 1 are outside, half a unit from the centre node
        assert u.values[c] == pytest.approx(-np.log(0.5), abs=1e-12)
        assert u.values[c] == pytest.approx(0.693, abs=5e-4)

    def test_ball_origin(self, ball_setup):
        _, grid, u = ball_setup
        o = grid.nearest_index(np.zeros(3))
        assert abs(u.values[o]) <= -np.log(1 - 0.04)

    def test_blow_up_along_ray(self, ball_setup):
        _, grid, u = ball_setup
        o = grid.nearest_index(np.zeros(3))
        ray = u.values[o[0]:, o[1], o[2]]
        ray = ray[np.isfinite(ray)]
        assert np.all(np.diff(ray) > 0) and len(ray) > 20
        assert u.values[grid.nearest_index(np.array([1.08, 0, 0]))] == -np.inf

    def test_distance_roundtrip(self, ball_setup):
        _, _, u = ball_setup
        d = distance_from_u(u)
        assert np.all(d.values[np.isfinite(u.values)] > 0)
        assert np.all(d.values[~np.isfinite(u.values)] == 0)


class TestShrink:
    def test_half_radius(self, ball_setup):
        _, grid, u = ball_setup
        mask = shrink(distance_from_u(u), 0.5)
        r = np.linalg.norm(grid.nodes()[mask], axis=1)
        assert r.max() <= 0.5 + 0.04
        outside = np.linalg.norm(grid.nodes()[~mask], axis=1)
        assert outside.min() >= 0.5 - 0.04

    def test_too_large(self, ball_setup):
        _, _, u = ball_setup
        with pytest.raises(EmptyDomainError):
            shrink(distance_from_u(u), 1.5)

    def test_small_eps_is_full_inside(self, ball_setup):
        _, _, u = ball_setup
        np.testing.assert_array_equal(shrink(distance_from_u(u), 1e-9), np.isfinite(u.values))


class TestRegularize:
    def test_monotone_in_eps(self, ball_setup):
        _, _, u = ball_setup
        us = [regularize(u, e) for e in (0.3, 0.2, 0.12)]
        common = us[0].defined
        for a, b in zip(us, us[1:]):
            assert np.all(b.defined[common])
            assert np.all(a.values[common] >= b.values[common])
        for x in us:
            assert np.all(x.values[x.defined] >= u.values[x.defined])

    def test_support_inside_g_eps(self, ball_setup):
        _, grid, u = ball_setup
        ue = regularize(u, 0.2)
        assert np.all(distance_from_u(u).values[ue.defined] >= 0.2 - 0.04)


class TestBump:
    def test_values(self):
        grid = RegularGrid.covering([-1.0] * 3, [1.0] * 3, 0.25)
        z = GridField(grid, np.zeros(grid.shape))
        b = bump(z, 0.3)
        assert b.values[grid.nearest_index(np.zeros(3))] == 0.0
        assert b.values[grid.nearest_index(np.array([0.0, 0.0, 1.0]))] == pytest.approx(0.3)
        assert b.values[grid.nearest_index(np.array([1.0, 1.0, 1.0]))] == pytest.approx(0.9)

    def test_complex_hessian_of_bump(self):
        eps = 0.3
        H = 2 * eps * np.diag([1.0, 1.0, 1.0, 0.0])
        np.testing.assert_allclose(complex_hessian(H), eps * np.diag([1.0, 0.5]))

    def test_bump_only_stage_passes_with_exact_floor(self):
        eps = 0.25
        grid = RegularGrid.covering([-1.0] * 3, [1.0] * 3, 0.05)
        ut = bump(GridField(grid, np.zeros(grid.shape)), eps)
        idx = np.argwhere(np.ones((5, 5, 5), bool)) + 10
        eigs = stage_levi_eigs(ut, idx)
        np.testing.assert_allclose(eigs, eps / 2, atol=1e-12)


class TestPickDelta:
    def test_ladder_lower_bound(self):
        c = delta_candidates(np.exp(-2))
        assert np.all(c > 0.5) and c[0] == pytest.approx(0.505)
        assert len(c) == 64

    def test_ladder_respects_previous(self):
        c = delta_candidates(0.1, delta_prev=0.44)
        assert np.all(c < 0.44) and np.all(c > -1 / np.log(0.1))

    def test_eps_range(self):
        with pytest.raises(PreconditionError):
            delta_candidates(1.5)

    def test_increasing_radial_profile(self):
        grid = RegularGrid.covering([-1.0] * 3, [1.0] * 3, 0.05)
        ut = GridField(grid, 1.5 + np.sum(grid.nodes() ** 2, -1))
        delta, log = pick_delta(ut, np.exp(-2))
        assert delta == delta_candidates(np.exp(-2))[0]
        assert len(log) == 1

    def test_local_max_rejected(self):
        eps = np.exp(-2)
        cands = delta_candidates(eps)
        level = 1.0 / cands[0]
        grid = RegularGrid.covering([-1.0] * 3, [1.0] * 3, 0.05)
        p = grid.point(grid.nearest_index(np.array([0.2, -0.1, 0.0])))
        ut = GridField(grid, level - np.sum((grid.nodes() - p) ** 2, -1))
        delta, log = pick_delta(ut, eps)
        assert log[0]["delta"] == cands[0] and log[0]["offending"] > 0
        assert delta == cands[1]

    def test_no_regular_value(self):
        # a constant field crosses no ladder level, so no candidate qualifies
        grid = RegularGrid.covering([-1.0] * 3, [1.0] * 3, 0.1)
        eps = np.exp(-2)
        level = 1.0 / delta_candidates(eps)[0]
        with pytest.raises(NoRegularValueError):
            pick_delta(GridField(grid, np.full(grid.shape, level)), eps)

    def test_report_lists_offending_attempts(self):
        eps = np.exp(-2)
        grid = RegularGrid.covering([-1.0] * 3, [1.0] * 3, 0.1)
        # flat field at 1.95 with one spike: the first two ladder levels (1.980, 1.961)
        # only cross the cells around the spike, whose node gradient vanishes
        ut = GridField(grid, np.full(grid.shape, 1.95))
        ut.values[grid.nearest_index(np.zeros(3))] = 2.5
        with pytest.raises(NoRegularValueError) as exc:
            pick_delta(ut, eps, steps=2)
        attempts = exc.value.offending_cells
        assert len(attempts) == 2 and all(a["offending"] > 0 for a in attempts)


class TestComponents:
    def test_connected_is_itself(self):
        m = np.zeros((6, 6, 6), bool)
        m[1:5, 1:5, 1:5] = True
        np.testing.assert_array_equal(component_of(m, (2, 2, 2)), m)

    def test_two_boxes(self):
        m = np.zeros((8, 8, 8), bool)
        m[0:3, 0:3, 0:3] = True
        m[5:8, 5:8, 5:8] = True
        c = component_of(m, (1, 1, 1))
        assert c.sum() == 27 and not c[6, 6, 6]

    def test_diagonal_touch_is_disconnected(self):
        m = np.zeros((4, 4, 4), bool)
        m[0:2, 0:2, 0:2] = True
        m[2:4, 2:4, 2:4] = True
        assert component_of(m, (0, 0, 0)).sum() == 8

    def test_basepoint_outside(self):
        with pytest.raises(PreconditionError):
            component_of(np.zeros((3, 3, 3), bool), (1, 1, 1))


class TestExhaustion:
    def test_ball_nested_and_concentric(self, ball_setup):
        G, grid, _ = ball_setup
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", StageTruncationWarning)
            seq = build_exhaustion(G, np.zeros(3), 3, grid)
        assert seq.nested()
        eps = [s.eps for s in seq.stages]
        deltas = [s.delta for s in seq.stages]
        assert all(a > b for a, b in zip(eps, eps[1:]))
        assert all(a > b for a, b in zip(deltas, deltas[1:]))
        assert all(s.delta > s.minorant for s in seq.stages)
        for s in seq.stages:
            r = np.linalg.norm(grid.nodes()[s.component], axis=1)
            out = np.linalg.norm(grid.nodes()[~s.component & np.isfinite(s.ut.values)], axis=1)
            # radial symmetry up to grid effects: inner and outer radii within a few cells
            assert r.max() - out.min() < 4 * grid.spacing

    def test_truncation(self, ball_setup):
        G, grid, _ = ball_setup
        with pytest.warns(StageTruncationWarning):
            seq = build_exhaustion(G, np.zeros(3), 6, grid)
        assert len(seq.stages) < 6 and seq.warnings

    def test_basepoint_outside(self, ball_setup):
        G, grid, _ = ball_setup
        with pytest.raises(PreconditionError):
            build_exhaustion(G, np.array([1.05, 0, 0]), 1, grid)

    def test_slab_stages_pass(self, slab_setup):
        G, grid = slab_setup
        seq = build_exhaustion(G, np.array([0.0, 0.0, 0.5]), 2, grid, eps0=0.2)
        for k in range(2):
            rep = seq.verify(k, samples=1000, rng=np.random.default_rng(k))
            assert rep.ok, rep.to_dict()

    def test_forced_small_delta_breaks_containment(self, slab_setup):
        G, grid = slab_setup
        u = build_u(G, grid)
        eps = 4 * grid.spacing
        ut = bump(regularize(u, eps), eps)
        good, _ = pick_delta(ut, eps)
        st_good = make_stage(ut, eps, good, grid.nearest_index(np.array([0.0, 0.0, 0.5])))
        bad = 0.5 * (-1 / np.log(eps))
        st_bad = make_stage(ut, eps, bad, grid.nearest_index(np.array([0.0, 0.0, 0.5])))
        d = distance_from_u(u)
        assert verify_stage(st_good, d).containment
        rep = verify_stage(st_bad, d)
        assert not rep.containment and not rep.delta_above_minorant

    def test_coverage_of_deep_points(self, slab_setup, rng):
        G, grid = slab_setup
        seq = build_exhaustion(G, np.array([0.0, 0.0, 0.5]), 3, grid, eps0=0.2)
        pts = np.c_[0.6 * np.sqrt(rng.random(3000)) * np.cos(2 * np.pi * rng.random(3000)),
                    np.zeros(3000), rng.random(3000)]
        pts[:, 1] = 0.0
        theta = 2 * np.pi * rng.random(3000)
        r = np.hypot(pts[:, 0], pts[:, 1])
        pts[:, 0], pts[:, 1] = r * np.cos(theta), r * np.sin(theta)
        deep = seq.distance.value(pts) > seq.coverage_threshold()
        assert deep.sum() > 500
        assert seq.covered(pts[deep]).all()
