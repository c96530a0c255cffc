import numpy as np
import pytest

from cwsopt.errors import DegenerateEmbedding, NonPositiveRadius
from cwsopt.shape_gradient import _ball_radius_gradient, smooth_reach
from cwsopt.surfaces import (FourierSurface, area, coefficient_basis, eval_mesh,
                             geometry_report, min_distance, principal_curvatures, replicate,
                             reach_terms, smooth_min_distance, softmin)

from conftest import torus


def test_torus_points():
    mesh = eval_mesh(torus(3, 1), 64, 64)
    np.testing.assert_allclose(mesh.points[0, 0], [4, 0, 0], atol=1e-15)
    np.testing.assert_allclose(mesh.points[16, 0], [3, 0, 1], atol=1e-15)


def test_nonpositive_radius():
    with pytest.raises(NonPositiveRadius):
        eval_mesh(FourierSurface(1, {(0, 0): 1.0, (1, 0): 2.0}, {(1, 0): 1.0}), 16, 16)


def test_degenerate_and_inverted():
    with pytest.raises(DegenerateEmbedding):
        eval_mesh(FourierSurface(1, {(0, 0): 3.0}, {}), 16, 16)
    with pytest.raises(DegenerateEmbedding, match="orientation"):
        eval_mesh(FourierSurface(1, {(0, 0): 3.0, (1, 0): 1.0}, {(1, 0): -1.0}), 16, 16)


def test_grid_too_small():
    with pytest.raises(ValueError):
        eval_mesh(torus(3, 1), 3, 16)


def test_canonical_modes():
    s = FourierSurface(1, {(0, 0): 3.0, (1, 0): 1.0, (0, -1): 0.2, (0, 1): 0.1},
                       {(1, 0): 1.0, (0, -1): 0.2})
    assert s.r_cos[(0, 1)] == pytest.approx(0.3)
    assert s.z_sin[(0, 1)] == pytest.approx(-0.2)
    with pytest.raises(ValueError):
        FourierSurface(1, {(0, 0): 3.0}, {(0, 0): 1.0})
    with pytest.raises(ValueError):
        FourierSurface(1, {(3, 0): 1.0}, {}, m_max=2)


def test_vector_roundtrip(shaped_problem):
    cws = shaped_problem[0]
    x = cws.vector()
    again = cws.with_vector(x)
    np.testing.assert_array_equal(again.vector(), x)
    ids = cws.coefficient_ids()
    assert len(ids) == len(set(ids))
    assert ("Z", 0, 0) not in ids and ("R", 0, -1) not in ids


def test_normals_frame(shaped_problem):
    mesh = eval_mesh(shaped_problem[0], 32, 32)
    nu = mesh.normal
    np.testing.assert_allclose(np.linalg.norm(nu, axis=-1), 1.0, atol=1e-12)
    assert np.max(np.abs(np.sum(nu * mesh.du, -1))) <= 1e-12 * np.max(np.abs(mesh.du))
    assert np.max(np.abs(np.sum(nu * mesh.dv, -1))) <= 1e-12 * np.max(np.abs(mesh.dv))
    assert np.all(np.sum(mesh.cross * nu, -1) < 0)
    # outward: the normal at the outboard midplane points away from the axis
    assert nu[0, 0, 0] > 0.9


def test_area_torus():
    mesh = eval_mesh(torus(3, 1), 64, 64)
    assert area(mesh) == pytest.approx(4 * np.pi ** 2 * 3, rel=1e-3)


def test_area_convergence(shaped_problem):
    cws = shaped_problem[0]
    ref = area(eval_mesh(cws, 128, 128))
    errs = [abs(area(eval_mesh(cws, n, n)) - ref) for n in (8, 16, 32)]
    for coarse, fine in zip(errs, errs[1:]):
        assert fine <= max(coarse / 4, 1e-12 * ref)


def test_second_derivatives_spectral():
    s = FourierSurface(1, {(0, 0): 3.0, (1, 0): 1.0, (1, 1): 0.1, (2, -1): 0.05},
                       {(1, 0): 1.0, (1, 1): 0.1, (2, 1): 0.03})
    mesh = eval_mesh(s, 32, 32)

    def dspec(f, axis):
        k = np.fft.fftfreq(f.shape[axis], 1.0 / f.shape[axis])
        shape = [1, 1, 1]
        shape[axis] = -1
        return np.real(np.fft.ifft(2j * np.pi * k.reshape(shape) * np.fft.fft(f, axis=axis),
                                   axis=axis))

    np.testing.assert_allclose(dspec(mesh.points, 0), mesh.du, atol=1e-11)
    np.testing.assert_allclose(dspec(mesh.points, 1), mesh.dv, atol=1e-11)
    np.testing.assert_allclose(dspec(mesh.du, 0), mesh.duu, atol=1e-10)
    np.testing.assert_allclose(dspec(mesh.du, 1), mesh.duv, atol=1e-10)
    np.testing.assert_allclose(dspec(mesh.dv, 1), mesh.dvv, atol=1e-10)


def test_period_replication():
    s3 = FourierSurface(3, {(0, 0): 3.0, (1, 0): 1.0, (1, 1): 0.1}, {(1, 0): 1.0, (1, 1): 0.1})
    s1 = s3.with_nfp(1)
    full3 = replicate(eval_mesh(s3, 16, 16).points, 3)  # (3, n_u, n_v, 3)
    full1 = eval_mesh(s1, 16, 48).points
    stacked = np.concatenate([full3[q] for q in range(3)], axis=1)
    np.testing.assert_allclose(stacked, full1, atol=1e-12)


def test_torus_curvatures():
    r, r0 = 1.0, 3.0
    mesh = eval_mesh(torus(r0, r), 32, 16)
    k = np.sort(np.abs(principal_curvatures(mesh)), axis=-1)
    theta = 2 * np.pi * mesh.u[:, None]
    expected = np.sort(np.stack(np.broadcast_arrays(
        np.full((32, 16), 1 / r), np.abs(np.cos(theta) / (r0 + r * np.cos(theta)))), -1), -1)
    np.testing.assert_allclose(k, expected, atol=1e-12)


@pytest.mark.parametrize("r0,r", [(3, 1), (5, 1), (3, 2)])
def test_reach_torus(r0, r):
    rep = geometry_report(eval_mesh(torus(r0, r), 64, 64))
    assert rep.reach_estimate == pytest.approx(min(r, r0 - r), rel=0.02)
    assert rep.reach_estimate <= 1 / rep.kappa_max + 1e-12


def test_concentric_distance():
    a = eval_mesh(torus(3, 1), 64, 64)
    b = eval_mesh(torus(3, 0.5), 64, 64)
    assert min_distance(a, b) == pytest.approx(0.5, abs=1e-9)
    assert geometry_report(a, b).min_distance_to == pytest.approx(0.5, abs=1e-9)
    sm = smooth_min_distance(a, b, 1e-3)
    # log-sum-exp bias is at most tau * log(#pairs)
    assert sm <= 0.5 and sm > 0.5 - 1e-3 * np.log((64 * 64) ** 2) - 1e-12


def test_softmin_limits():
    v = np.array([1.0, 1.5, 2.0])
    for tau in (1e-1, 1e-2, 1e-3):
        s, w = softmin(v, tau)
        assert s <= 1.0 and w.sum() == pytest.approx(1.0)
    assert softmin(v, 1e-4)[0] == pytest.approx(1.0, abs=1e-12)


def test_basis_examples():
    s = FourierSurface(3, {(0, 0): 3.0, (1, 0): 1.0}, {(1, 0): 1.0}, m_max=1, n_max=1)
    mesh = eval_mesh(s, 16, 16)
    b = coefficient_basis(s, mesh)
    k_r00 = b.ids.index(("R", 0, 0))
    k_z10 = b.ids.index(("Z", 1, 0))
    phi = 2 * np.pi * mesh.v / 3
    e_r = np.stack([np.cos(phi), np.sin(phi), 0 * phi], -1)
    np.testing.assert_allclose(b.theta[k_r00], np.broadcast_to(e_r, (16, 16, 3)), atol=1e-15)
    np.testing.assert_allclose(b.theta_u[k_r00], 0.0, atol=1e-15)
    expect = np.zeros((16, 16, 3))
    expect[..., 2] = np.sin(2 * np.pi * mesh.u)[:, None]
    np.testing.assert_allclose(b.theta[k_z10], expect, atol=1e-15)


def test_basis_matches_finite_differences(shaped_problem):
    cws = shaped_problem[0]
    mesh = eval_mesh(cws, 16, 16)
    b = coefficient_basis(cws, mesh)
    x0 = cws.vector()
    h = 1e-6
    for k in range(len(b)):
        e = np.zeros_like(x0)
        e[k] = h
        mp = eval_mesh(cws.with_vector(x0 + e), 16, 16)
        mm = eval_mesh(cws.with_vector(x0 - e), 16, 16)
        for name, field in (("points", b.theta), ("du", b.theta_u), ("dv", b.theta_v)):
            fd = (getattr(mp, name) - getattr(mm, name)) / (2 * h)
            np.testing.assert_allclose(field[k], fd, atol=1e-8)


def test_ball_radius_derivative():
    s = FourierSurface(1, {(0, 0): 3.0, (1, 0): 1.0, (1, 1): 0.1}, {(1, 0): 1.0, (1, 1): 0.1},
                       m_max=1, n_max=1)
    mesh = eval_mesh(s, 16, 16)
    b = coefficient_basis(s, mesh)
    rng = np.random.default_rng(3)
    i = rng.integers(0, 256, 12)
    j = (i + 128) % 256

    def ratios(surf):
        m = eval_mesh(surf, 16, 16)
        p = m.points.reshape(-1, 3)
        n = m.normal.reshape(-1, 3)
        r = p[i] - p[j]
        return np.sum(r * r, -1) / (2 * np.abs(np.sum(r * n[i], -1)))

    grad = _ball_radius_gradient(mesh, b, i, j)
    x0 = s.vector()
    h = 1e-6
    for k in range(len(b)):
        e = np.zeros_like(x0)
        e[k] = h
        fd = (ratios(s.with_vector(x0 + e)) - ratios(s.with_vector(x0 - e))) / (2 * h)
        np.testing.assert_allclose(grad[k], fd, rtol=1e-6, atol=1e-7)


def test_smooth_reach_gradient_near_tie():
    # inner-equator bottleneck and toroidal curvature radius nearly coincide
    s = FourierSurface(1, {(0, 0): 3.0, (1, 0): 1.9, (1, 1): 0.02}, {(1, 0): 1.9, (1, 1): 0.02},
                       m_max=1, n_max=1)
    mesh = eval_mesh(s, 32, 32)
    terms = reach_terms(mesh, 0.25, window=0.05)
    assert len(terms.curv_radius) and len(terms.pair_radius)
    b = coefficient_basis(s, mesh)
    tau = 1e-2
    _, grad = smooth_reach(mesh, s, b, tau)
    x0 = s.vector()
    h = 1e-6
    for k in range(len(b)):
        e = np.zeros_like(x0)
        e[k] = h
        fp = smooth_reach(eval_mesh(s.with_vector(x0 + e), 32, 32), None, None, tau)[0]
        fm = smooth_reach(eval_mesh(s.with_vector(x0 - e), 32, 32), None, None, tau)[0]
        assert grad[k] == pytest.approx((fp - fm) / (2 * h), rel=1e-5, abs=1e-8)
