import math

import numpy as np
import pytest

from patchflow import analysis, geometry
from patchflow.analysis import (
    TEST_FIELDS,
    beurling_interior,
    commutator_identity,
    diagnostics,
    even_kernel_from_grad,
    holder_normal,
    pv_boundary,
    pv_solid_even,
    refined_clip_contour,
    vasin_profile,
)
from patchflow.errors import GeometryError, NonConvexError, ResolutionError
from patchflow.geometry import Contour, make_bump_contour, make_ellipse_contour
from patchflow.kernels import cauchy, euler_vorticity


def star_contour(n=128):
    t = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    r = 1.0 + 0.35 * np.cos(3.0 * t)
    return Contour(np.column_stack([r * np.cos(t), r * np.sin(t)]))


class TestTestFields:
    @pytest.mark.parametrize("name", sorted(TEST_FIELDS))
    def test_gradient_matches_finite_differences(self, name):
        f = TEST_FIELDS[name]
        rng = np.random.default_rng(5)
        pts = rng.uniform(-2.0, 2.0, size=(50, 2))
        h = 1e-6
        g = f.grad(pts)
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            fd = (f.value(pts + e) - f.value(pts - e)) / (2.0 * h)
            assert np.max(np.abs(g[:, j] - fd)) < 1e-8

    @pytest.mark.parametrize("name", sorted(TEST_FIELDS))
    def test_hessian_matches_finite_differences(self, name):
        f = TEST_FIELDS[name]
        rng = np.random.default_rng(6)
        pts = rng.uniform(-2.0, 2.0, size=(20, 2))
        h = 1e-5
        hess = f.hessian(pts)
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            fd = (f.grad(pts + e) - f.grad(pts - e)) / (2.0 * h)
            assert np.max(np.abs(hess[:, :, j] - fd)) < 1e-6


class TestPvBoundary:
    def test_convergent_ladder_on_smooth_contour(self):
        c = make_ellipse_contour(2.0, 1.0, 0.0, 4096)
        spacing = float(c.chord_lengths().max())
        res = pv_boundary(c, cauchy(), 1, 1, 0, eps_min=4.0 * spacing)
        d = res.differences()
        assert np.all(np.diff(d) < 0.0)
        # smooth boundary: truncation differences scale at least like eps
        assert d[-1] <= d[0] * (res.epsilons[-2] / res.epsilons[0]) ** 0.8
        assert np.isfinite(res.extrapolated_limit)
        assert abs(res.extrapolated_limit - res.truncated_values[-1]) < 2.0 * d[-1] + 1e-12

    def test_holder_weight_subtraction_reduces_sensitivity(self):
        c = make_ellipse_contour(2.0, 1.0, 0.0, 4096)
        spacing = float(c.chord_lengths().max())
        x0 = c.markers[0]

        def phi(pts):
            return np.abs(pts[..., 1]) ** 0.6 + 1.0

        def phi_centered(pts):
            return phi(pts) - phi(x0[None, :])

        raw = pv_boundary(c, cauchy(), 1, 1, 0, 4.0 * spacing, phi=phi)
        cen = pv_boundary(c, cauchy(), 1, 1, 0, 4.0 * spacing, phi=phi_centered)
        one = pv_boundary(c, cauchy(), 1, 1, 0, 4.0 * spacing)
        # exact linearity of the truncated sums
        split = cen.truncated_values + float(phi(x0[None, :])[0]) * one.truncated_values
        assert np.max(np.abs(raw.truncated_values - split)) < 1e-12
        # the centered integrand is absolutely convergent: smaller tail differences
        assert cen.differences()[-1] < raw.differences()[-1]

    def test_eps_below_resolution_rejected(self):
        c = make_ellipse_contour(2.0, 1.0, 0.0, 256)
        with pytest.raises(ResolutionError):
            pv_boundary(c, cauchy(), 1, 1, 0, eps_min=1e-4)


class TestPvSolid:
    def test_symmetric_point_cancels(self):
        # even kernel with zero circle mean over a symmetric configuration:
        # the truncated integrals vanish identically at the mirror marker
        c = make_ellipse_contour(2.0, 1.0, 0.0, 2048)
        L = even_kernel_from_grad(cauchy(), 1, 0)
        res = pv_solid_even(c, L, 0, [2.0 ** (-m) for m in range(1, 7)])
        assert np.max(np.abs(res.truncated_values)) < 1e-12

    def test_generic_point_converges(self):
        c = make_ellipse_contour(2.0, 1.0, 0.0, 2048)
        L = even_kernel_from_grad(cauchy(), 1, 0)
        res = pv_solid_even(c, L, 256, [2.0 ** (-m) for m in range(1, 8)])
        d = res.differences()
        assert np.all(np.diff(d) < 0.0)
        assert np.isfinite(res.extrapolated_limit)

    def test_zero_circle_mean_of_grad_kernels(self):
        phi = 2.0 * np.pi * (np.arange(1024) + 0.5) / 1024
        e = np.column_stack([np.cos(phi), np.sin(phi)])
        for k in (cauchy(), euler_vorticity()):
            for i in range(2):
                for l in range(2):
                    L = even_kernel_from_grad(k, i, l)
                    assert abs(L(e).mean()) < 1e-15

    def test_nonconvex_rejected(self):
        L = even_kernel_from_grad(cauchy(), 0, 0)
        with pytest.raises(NonConvexError):
            pv_solid_even(star_contour(), L, 0, [0.5, 0.25])


class TestVasinProfile:
    def test_ellipse_products_vanish_toward_boundary(self):
        # analytic boundary: second derivatives stay bounded, so the
        # product m * d^(1-gamma) decays as d -> 0 (the bound is slack)
        c = make_ellipse_contour(2.0, 1.0, 0.0, 8192)
        prof = vasin_profile(c, cauchy(), 0.5, np.geomspace(6e-3, 1e-1, 6))
        assert prof.products[0] < 0.5 * prof.products[-1]
        assert np.all(np.diff(prof.products) > 0.0)

    def test_bump_products_bounded(self):
        c = make_bump_contour(0.5, 0.1, 4000)
        prof = vasin_profile(c, cauchy(), 0.5, np.geomspace(3e-3, 1e-1, 6))
        assert prof.products.max() / prof.products.min() < 20.0
        assert prof.loglog_slope() >= -0.6

    def test_far_from_bump_is_smooth(self):
        c = make_bump_contour(0.5, 0.1, 4000)
        prof = vasin_profile(
            c, cauchy(), 0.5, np.geomspace(3e-3, 1e-1, 5), probe_indices=[2000]
        )
        assert prof.products[0] < prof.products[-1]

    def test_resolution_enforced(self):
        c = make_bump_contour(0.5, 0.1, 512)
        with pytest.raises(ResolutionError):
            vasin_profile(c, cauchy(), 0.5, [1e-4, 1e-1])


class TestBeurling:
    def test_axis_aligned_values(self):
        c = make_ellipse_contour(2.0, 1.0, 0.0, 512)
        bs = beurling_interior(c, np.array([0.3, 0.1]))
        assert abs(bs.dz - (-1.0 / 3.0)) < 1e-4
        assert abs(bs.dzbar - 1.0) < 1e-4

    def test_tilted_constancy(self):
        th = math.pi / 6.0
        c = make_ellipse_contour(2.0, 1.0, th, 512)
        fr = geometry.frames(c)
        expect = -(1.0 / 3.0) * np.exp(-2j * th)
        rng = np.random.default_rng(9)
        rot = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
        vals = []
        for _ in range(10):
            phi, r = rng.uniform(0.0, 2.0 * np.pi), math.sqrt(rng.uniform(0.0, 0.36))
            z = rot @ np.array([2.0 * r * math.cos(phi), 1.0 * r * math.sin(phi)])
            vals.append(beurling_interior(c, z, frame=fr).dz)
        vals = np.array(vals)
        assert np.max(np.abs(vals - expect)) < 1e-4
        assert vals.std() <= 1e-4 / 3.0 + 1e-6

    def test_disc_beurling_vanishes(self):
        c = make_ellipse_contour(1.5, 1.5, 0.0, 512)
        bs = beurling_interior(c, np.array([0.2, -0.3]))
        assert abs(bs.dz) < 1e-6
        assert abs(bs.dzbar - 1.0) < 1e-6

    def test_near_boundary_rejected(self):
        c = make_ellipse_contour(2.0, 1.0, 0.0, 512)
        with pytest.raises(GeometryError):
            beurling_interior(c, np.array([1.95, 0.0]))


class TestCommutatorIdentity:
    def test_linear_field_exactly_zero(self):
        c = make_ellipse_contour(2.0, 1.0, 0.0, 256)
        r = commutator_identity(c, cauchy(), TEST_FIELDS["linear"], 0)
        assert r.ds == 0.0
        assert r.db == 0.0

    def test_quadratic_field_on_ellipse(self):
        c = make_ellipse_contour(2.0, 1.0, 0.0, 256)
        r = commutator_identity(c, cauchy(), TEST_FIELDS["quadratic"], 0)
        assert r.defect <= 1e-3
        assert r.defect <= 3.0 * r.tol

    def test_swapped_indices_antisymmetric(self):
        c = make_ellipse_contour(2.0, 1.0, 0.0, 256)
        f = TEST_FIELDS["quadratic"]
        r12 = commutator_identity(c, cauchy(), f, 0, i=0, j=1, component=1)
        r21 = commutator_identity(c, cauchy(), f, 0, i=1, j=0, component=1)
        assert r21.ds == pytest.approx(-r12.ds, abs=1e-12)
        assert r21.db == pytest.approx(-r12.db, abs=1e-12)
        assert r21.defect <= 3.0 * r21.tol

    def test_nonconvex_rejected(self):
        with pytest.raises(NonConvexError):
            commutator_identity(star_contour(), cauchy(), TEST_FIELDS["quadratic"], 0)

    def test_odd_marker_rejected(self):
        c = make_ellipse_contour(2.0, 1.0, 0.0, 256)
        with pytest.raises(GeometryError):
            commutator_identity(c, cauchy(), TEST_FIELDS["quadratic"], 3)

    def test_clip_contour_reuse_matches(self):
        c = make_ellipse_contour(2.0, 1.0, 0.0, 256)
        clip = refined_clip_contour(c)
        f = TEST_FIELDS["trig"]
        r1 = commutator_identity(c, cauchy(), f, 64)
        r2 = commutator_identity(c, cauchy(), f, 64, clip_contour=clip)
        assert r1.ds == pytest.approx(r2.ds, abs=1e-14)
        assert r1.db == r2.db


class TestHolderNormal:
    def test_unit_circle_value(self):
        # sup over chord angles of 2 sin(D/2)/(2 sin(D/2))^(1/2) = sqrt(2) at D = pi
        h = holder_normal(make_ellipse_contour(1.0, 1.0, 0.0, 256), 0.5)
        assert h == pytest.approx(math.sqrt(2.0), abs=2e-2)

    def test_scaled_circle_homogeneity(self):
        h1 = holder_normal(make_ellipse_contour(1.0, 1.0, 0.0, 512), 0.5)
        h4 = holder_normal(make_ellipse_contour(4.0, 4.0, 0.0, 512), 0.5)
        assert h4 == pytest.approx(h1 / 2.0, rel=1e-6)

    def test_refinement_monotone_within_two_percent(self):
        c1 = make_ellipse_contour(2.0, 1.0, 0.3, 256)
        c2 = make_ellipse_contour(2.0, 1.0, 0.3, 1024)
        h1, h2 = holder_normal(c1, 0.5), holder_normal(c2, 0.5)
        assert h2 >= h1 * (1.0 - 0.02)
        assert abs(h2 - h1) / h2 < 0.02

    def test_bump_local_seminorm_diverges_only_above_gamma(self):
        # gamma = 0.5 seminorm of the C^(1+1/2) apex stays bounded; the
        # 0.9 seminorm grows under refinement once pair separations reach
        # the singular scale (the global maximum masks it at coarse N)
        vals05, vals09 = [], []
        for n in (32768, 65536, 131072):
            c = make_bump_contour(0.5, 0.1, n)
            s = 2.0 * np.pi * np.arange(n) / n
            wrapped = np.mod(s + np.pi, 2.0 * np.pi) - np.pi
            local = np.where(np.abs(wrapped) <= 0.1)[0]
            fr = geometry.frames(c)
            vals05.append(holder_normal(c, 0.5, frame=fr, indices=local))
            vals09.append(holder_normal(c, 0.9, frame=fr, indices=local))
        assert vals09[2] > 1.3 * vals09[1] > 1.3 * 1.3 * vals09[0]
        assert max(vals05) < 1.05 * min(vals05)

    def test_bump_global_gamma_seminorm_bounded(self):
        vals = [holder_normal(make_bump_contour(0.5, 0.1, n), 0.5) for n in (512, 1024, 2048)]
        assert max(vals) < 1.02 * min(vals)


class TestDiagnostics:
    def test_ellipse_record(self):
        c = make_ellipse_contour(2.0, 1.0, 0.0, 256)
        rec = diagnostics(c, 0.0)
        assert rec.sum_ab == pytest.approx(3.0, abs=1e-12)
        assert rec.skew_inv == pytest.approx(0.0, abs=1e-12)
        assert rec.t == 0.0

    def test_disc_record(self):
        r = 2.0
        c = make_ellipse_contour(r, r, 0.0, 512)
        rec = diagnostics(c, 1.0)
        assert rec.fitted.a == pytest.approx(r, abs=1e-10)
        assert rec.fitted.theta == 0.0
        # circle seminorm scales like radius^(-gamma)
        assert rec.holder_normal == pytest.approx(math.sqrt(2.0 / r), abs=2e-2)

    def test_matches_standalone_operations(self):
        c = make_ellipse_contour(1.7, 0.9, 0.4, 256)
        rec = diagnostics(c, 2.5)
        assert rec.area == geometry.area(c)
        assert rec.perimeter == geometry.perimeter(c)
        assert np.array_equal(rec.centroid, geometry.centroid(c))
        st = geometry.fit_ellipse(c)
        assert rec.fitted == st
        assert rec.holder_normal == holder_normal(c, 0.5)
