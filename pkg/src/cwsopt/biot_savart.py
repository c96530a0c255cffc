"""Biot-Savart kernel, surface-current fields and the normal-field operator.

The kernel is ``K(x, y) = (x - y) / |x - y|^3`` with no ``mu0 / 4 pi`` factor,
so ``B = int_S K(x, y) x j(x) dmu(x)`` satisfies ``oint B . dl = 4 pi I``.
Multiply by ``MU0_OVER_4PI`` to obtain tesla.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .currents import (CurrentPotential, SurfaceCurrent, flat_basis, potential_modes,
                       push_forward)
from .errors import CoincidentPoints, TooCloseToSurface
from .surfaces import SurfaceMesh, mode_angles, replicate

MU0_OVER_4PI = 1e-7
KERNEL_EPS = 1e-9
DEFAULT_GUARD = 0.05

# rows of pair blocks processed at once
_CHUNK_PAIRS = 4_000_000


def _offsets(x, y, eps):
    r = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    d2 = np.sum(r * r, -1)
    if np.any(d2 < eps * eps):
        raise CoincidentPoints(f"|x - y| below kernel guard {eps:g}")
    return r, d2


def kernel(x, y, eps: float = KERNEL_EPS) -> np.ndarray:
    """K(x, y) = (x - y)/|x - y|^3, broadcasting over leading axes."""
    r, d2 = _offsets(x, y, eps)
    return r / (d2 * np.sqrt(d2))[..., None]


def kernel_jacobian_apply(x, y, h, eps: float = KERNEL_EPS) -> np.ndarray:
    """D_x K(x, y) h = h/|r|^3 - 3 <r, h> r/|r|^5 with r = x - y."""
    r, d2 = _offsets(x, y, eps)
    h = np.asarray(h, dtype=float)
    d3 = d2 * np.sqrt(d2)
    return h / d3[..., None] - 3.0 * (np.sum(r * h, -1) / (d3 * d2))[..., None] * r


def check_separation(points: np.ndarray, sources: np.ndarray, guard: float) -> float:
    d, _ = cKDTree(sources).query(points.reshape(-1, 3))
    dmin = float(np.min(d))
    if dmin < guard:
        raise TooCloseToSurface(
            f"evaluation point at distance {dmin:.4g} m from the source surface "
            f"(guard {guard:g} m)")
    return dmin


def _chunks(n_rows: int, n_cols: int):
    step = max(1, _CHUNK_PAIRS // max(1, n_cols))
    for start in range(0, n_rows, step):
        yield slice(start, min(n_rows, start + step))


def bs_field(mesh: SurfaceMesh, current: SurfaceCurrent, points,
             guard: float = DEFAULT_GUARD) -> np.ndarray:
    """Field of the surface current at ``points`` (shape (..., 3)).

    The source is the full surface: the one-period current is rotated onto
    every field period.
    """
    points = np.asarray(points, dtype=float)
    shape = points.shape
    y = points.reshape(-1, 3)
    src = mesh.full_points()
    check_separation(y, src, guard)
    # j dmu = (X^u psi_u + X^v psi_v) du dv
    flux = current.xu[..., None] * mesh.du + current.xv[..., None] * mesh.dv
    a = replicate(flux, mesh.nfp).reshape(-1, 3) / (mesh.n_u * mesh.n_v)
    out = np.empty_like(y)
    for sl in _chunks(len(y), len(src)):
        r = src[None, :, :] - y[sl, None, :]
        d2 = np.sum(r * r, -1)
        k = r / (d2 * np.sqrt(d2))[..., None]
        out[sl] = np.sum(np.cross(k, a[None]), axis=1)
    return out.reshape(shape)


@dataclass(frozen=True, eq=False)
class TargetSpec:
    """Plasma boundary, target normal field and quadrature weights.

    ``b_normal`` holds the target value of <B, nu> on the one-period plasma grid.
    Weights default to the full-surface area weights of the plasma mesh.
    """

    plasma_mesh: SurfaceMesh
    b_normal: np.ndarray
    quad_weights: np.ndarray | None = None

    def __post_init__(self):
        b = np.asarray(self.b_normal, dtype=float)
        if b.shape != self.plasma_mesh.shape:
            raise ValueError(f"target grid {b.shape} does not match plasma mesh "
                             f"{self.plasma_mesh.shape}")
        object.__setattr__(self, "b_normal", b)
        w = self.plasma_mesh.weights if self.quad_weights is None else np.asarray(self.quad_weights)
        if w.shape != b.shape or not np.all(w > 0):
            raise ValueError("quadrature weights must be positive on the plasma grid")
        object.__setattr__(self, "quad_weights", w)

    @classmethod
    def from_bmn(cls, plasma_mesh: SurfaceMesh, bmn: dict) -> "TargetSpec":
        """Target from sine coefficients: sum B_mn sin(2 pi (m u + n v))."""
        b = np.zeros(plasma_mesh.shape)
        if bmn:
            modes = np.array(list(bmn), dtype=float)
            coef = np.array(list(bmn.values()), dtype=float)
            b = np.tensordot(coef, np.sin(mode_angles(modes, plasma_mesh.u, plasma_mesh.v)), axes=1)
        return cls(plasma_mesh, b)

    @classmethod
    def zero(cls, plasma_mesh: SurfaceMesh) -> "TargetSpec":
        return cls(plasma_mesh, np.zeros(plasma_mesh.shape))

    @property
    def nfp(self) -> int:
        return self.plasma_mesh.nfp

    def cloud(self):
        """Full plasma-boundary cloud: points, normals and per-point area weights."""
        pm = self.plasma_mesh
        pts = pm.full_points()
        nrm = pm.full_normals()
        w = np.tile((self.quad_weights / pm.nfp).ravel(), pm.nfp)
        return pts, nrm, w


@dataclass(frozen=True, eq=False)
class NormalFieldOperator:
    """<B, nu> on the one-period plasma grid as ``A @ x + a0``."""

    A: np.ndarray
    a0: np.ndarray
    target: TargetSpec
    m_max: int
    n_max: int
    i_pol: float
    i_tor: float

    @property
    def weights(self) -> np.ndarray:
        return self.target.quad_weights.ravel()

    @property
    def g(self) -> np.ndarray:
        return self.target.b_normal.ravel()

    def normal_field(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x + self.a0

    def residual(self, x: np.ndarray) -> np.ndarray:
        return self.normal_field(x) - self.g

    def chi2_b(self, x: np.ndarray) -> float:
        r = self.residual(x)
        return float(np.sum(self.weights * r * r))


def _normal_kernel_blocks(mesh: SurfaceMesh, y, nu):
    """Period-summed <nu_p x K(x_s, y_p), psi_a(x_s)> for a = u, v, shape (P, n_u n_v)."""
    q = mesh.nfp
    src = replicate(mesh.points, q).reshape(q, -1, 3)
    du = replicate(mesh.du, q).reshape(q, -1, 3)
    dv = replicate(mesh.dv, q).reshape(q, -1, 3)
    n_src = src.shape[1]
    gu = np.zeros((len(y), n_src))
    gv = np.zeros((len(y), n_src))
    for sl in _chunks(len(y), q * n_src):
        for p in range(q):
            r = src[p][None] - y[sl, None]
            d2 = np.sum(r * r, -1)
            k = r / (d2 * np.sqrt(d2))[..., None]
            g = np.cross(nu[sl, None], k)
            gu[sl] += np.sum(g * du[p][None], -1)
            gv[sl] += np.sum(g * dv[p][None], -1)
    return gu, gv


def assemble_normal_operator(mesh: SurfaceMesh, target: TargetSpec, m_max: int, n_max: int,
                             i_pol: float = 0.0, i_tor: float = 0.0,
                             guard: float = DEFAULT_GUARD) -> NormalFieldOperator:
    """Dense operator from potential coefficients to the plasma normal field.

    Uses the shared field-period symmetry: rows are the one-period plasma grid.
    """
    pm = target.plasma_mesh
    if pm.nfp != mesh.nfp:
        raise ValueError(f"CWS has {mesh.nfp} field periods but the plasma has {pm.nfp}")
    y = pm.points.reshape(-1, 3)
    nu = pm.normal.reshape(-1, 3)
    check_separation(y, mesh.full_points(), guard)
    gu, gv = _normal_kernel_blocks(mesh, y, nu)
    scale = 1.0 / (mesh.n_u * mesh.n_v)
    bu, bv = flat_basis(potential_modes(m_max, n_max), mesh.u, mesh.v)
    bu = bu.reshape(bu.shape[0], -1)
    bv = bv.reshape(bv.shape[0], -1)
    A = (gu @ bu.T + gv @ bv.T) * scale
    a0 = (i_pol * gu.sum(1) + i_tor * gv.sum(1)) * scale
    return NormalFieldOperator(A, a0, target, m_max, n_max, float(i_pol), float(i_tor))


def adjoint_fields(mesh: SurfaceMesh, cloud_points, cloud_weights, k, current: SurfaceCurrent,
                   guard: float = DEFAULT_GUARD, all_periods: bool = False):
    """Z(x) = sum a_p K(x, y_p) x k_p and Zhat(x) = sum a_p D_xK(x, y_p)^T (k_p x j(x)).

    Evaluated at the one-period grid of ``mesh`` (or, with ``all_periods``, at
    the full replicated grid, leading axis = period). The cloud (points y_p,
    weights a_p, vectors k_p) is taken as given, so it must cover the plasma.
    """
    y = np.asarray(cloud_points, dtype=float).reshape(-1, 3)
    a = np.asarray(cloud_weights, dtype=float).ravel()
    kw = np.asarray(k, dtype=float).reshape(-1, 3) * a[:, None]
    if all_periods:
        x = mesh.full_points()
        j = replicate(current.vectors, mesh.nfp).reshape(-1, 3)
        shape = (mesh.nfp,) + mesh.points.shape
    else:
        x = mesh.points.reshape(-1, 3)
        j = current.vectors.reshape(-1, 3)
        shape = mesh.points.shape
    check_separation(y, mesh.full_points(), guard)
    z = np.empty_like(x)
    zh = np.empty_like(x)
    for sl in _chunks(len(x), len(y)):
        r = x[sl, None] - y[None]
        d2 = np.sum(r * r, -1)
        d3 = d2 * np.sqrt(d2)
        z[sl] = np.sum(np.cross(r, kw[None]) / d3[..., None], axis=1)
        # D_xK is symmetric, so its transpose applies with the same formula
        c = np.cross(kw[None], j[sl, None])
        zh[sl] = (np.sum(c / d3[..., None], axis=1)
                  - 3.0 * np.sum((np.sum(r * c, -1) / (d3 * d2))[..., None] * r, axis=1))
    return z.reshape(shape), zh.reshape(shape)


def boundary_adjoint_fields(mesh: SurfaceMesh, op: NormalFieldOperator, x: np.ndarray,
                            current: SurfaceCurrent, guard: float = DEFAULT_GUARD):
    """Adjoint fields for the plasma normal-field residual, k = (<B, nu> - g) nu."""
    pts, nrm, w = op.target.cloud()
    res = np.tile(op.residual(x), op.target.nfp)
    return adjoint_fields(mesh, pts, w, res[:, None] * nrm, current, guard)


def normal_field_of(surface_mesh: SurfaceMesh, pot: CurrentPotential, target: TargetSpec,
                    guard: float = DEFAULT_GUARD) -> np.ndarray:
    """<B, nu> on the plasma grid by direct Biot-Savart evaluation."""
    b = bs_field(surface_mesh, push_forward(pot, surface_mesh), target.plasma_mesh.points, guard)
    return np.sum(b * target.plasma_mesh.normal, -1)

