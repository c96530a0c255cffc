"""Stellarator-symmetric toroidal surfaces: Fourier description, meshing and geometry.

A surface is stored as cosine coefficients of the cylindrical radius and sine
coefficients of the height,

    R(u, v) = sum R_mn cos(2 pi (m u + n v)),   Z(u, v) = sum Z_mn sin(2 pi (m u + n v)),

with toroidal angle phi = 2 pi v / nfp.  A mesh samples one field period
``v in [0, 1)``; full-surface integrals are ``nfp`` times the one-period sum.
All derivatives are evaluated from the differentiated series.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateEmbedding, NonPositiveRadius

TWO_PI = 2.0 * np.pi

CoeffId = tuple  # ("R" | "Z", m, n)


def _canonical(coeffs: Mapping, kind: str) -> dict:
    out: dict = {}
    for (m, n), value in coeffs.items():
        m, n, value = int(m), int(n), float(value)
        if m < 0:
            raise ValueError(f"{kind}_{m},{n}: poloidal index must be >= 0")
        if m == 0 and n < 0:
            # cos is even and sin is odd in n when m = 0
            n = -n
            value = value if kind == "R" else -value
        if kind == "Z" and m == 0 and n == 0:
            if value != 0.0:
                raise ValueError("Z_0,0 multiplies sin(0) and must be zero")
            continue
        out[(m, n)] = out.get((m, n), 0.0) + value
    return out


def mode_ids(kind: str, m_max: int, n_max: int) -> list:
    """Stable ordering of the independent modes of one series."""
    ids = []
    for m in range(m_max + 1):
        for n in range(-n_max, n_max + 1):
            if m == 0 and n < 0:
                continue
            if kind in ("Z", "Phi") and m == 0 and n == 0:
                continue
            ids.append((m, n))
    return ids


@dataclass(frozen=True, eq=False)
class FourierSurface:
    """Truncated Fourier description of a stellarator-symmetric torus.

    ``r_cos`` and ``z_sin`` map ``(m, n)`` to a coefficient in meters. Entries
    with ``m = 0, n < 0`` are folded onto ``n > 0``. ``m_max``/``n_max``
    default to the largest indices present and fix the free coefficient set.
    """

    nfp: int
    r_cos: Mapping = field(default_factory=dict)
    z_sin: Mapping = field(default_factory=dict)
    m_max: int | None = None
    n_max: int | None = None

    def __post_init__(self):
        if int(self.nfp) < 1:
            raise ValueError("nfp must be a positive integer")
        object.__setattr__(self, "nfp", int(self.nfp))
        r = _canonical(self.r_cos, "R")
        z = _canonical(self.z_sin, "Z")
        keys = list(r) + list(z)
        m_max = self.m_max if self.m_max is not None else max([k[0] for k in keys], default=0)
        n_max = self.n_max if self.n_max is not None else max([abs(k[1]) for k in keys], default=0)
        for m, n in keys:
            if m > m_max or abs(n) > n_max:
                raise ValueError(f"mode ({m},{n}) exceeds truncation ({m_max},{n_max})")
        object.__setattr__(self, "r_cos", r)
        object.__setattr__(self, "z_sin", z)
        object.__setattr__(self, "m_max", int(m_max))
        object.__setattr__(self, "n_max", int(n_max))

    @classmethod
    def torus(cls, major: float, minor: float, nfp: int = 1, **kw) -> "FourierSurface":
        return cls(nfp, {(0, 0): major, (1, 0): minor}, {(1, 0): minor}, **kw)

    def coefficient_ids(self) -> list:
        ids = [("R", m, n) for m, n in mode_ids("R", self.m_max, self.n_max)]
        ids += [("Z", m, n) for m, n in mode_ids("Z", self.m_max, self.n_max)]
        return ids

    def get(self, cid: CoeffId) -> float:
        kind, m, n = cid
        table = self.r_cos if kind == "R" else self.z_sin
        return table.get((m, n), 0.0)

    def vector(self, ids: Sequence | None = None) -> np.ndarray:
        ids = self.coefficient_ids() if ids is None else ids
        return np.array([self.get(c) for c in ids], dtype=float)

    def with_vector(self, x: Iterable[float], ids: Sequence | None = None) -> "FourierSurface":
        ids = self.coefficient_ids() if ids is None else ids
        r, z = dict(self.r_cos), dict(self.z_sin)
        for (kind, m, n), value in zip(ids, x):
            (r if kind == "R" else z)[(m, n)] = float(value)
        return FourierSurface(self.nfp, r, z, self.m_max, self.n_max)

    def truncated(self, m_max: int, n_max: int) -> "FourierSurface":
        """Same surface with a (larger) free-coefficient truncation."""
        return FourierSurface(self.nfp, self.r_cos, self.z_sin, m_max, n_max)

    def scaled(self, factor: float) -> "FourierSurface":
        r = {k: factor * v for k, v in self.r_cos.items()}
        z = {k: factor * v for k, v in self.z_sin.items()}
        return FourierSurface(self.nfp, r, z, self.m_max, self.n_max)

    def with_nfp(self, nfp: int) -> "FourierSurface":
        """Re-express the same geometric surface with a different period count.

        Only valid when every toroidal index stays an integer, i.e. when
        ``n * self.nfp`` is divisible by ``nfp`` for all nonzero modes.
        """
        def remap(table):
            out = {}
            for (m, n), value in table.items():
                if (n * self.nfp) % nfp:
                    raise ValueError(f"mode n={n} not representable with nfp={nfp}")
                out[(m, n * self.nfp // nfp)] = value
            return out

        return FourierSurface(nfp, remap(self.r_cos), remap(self.z_sin))


def _trig(kind: str, order: int, angle: np.ndarray) -> np.ndarray:
    # order-th derivative of cos/sin with respect to its argument
    k = order % 4
    if kind == "cos":
        return (np.cos, lambda a: -np.sin(a), lambda a: -np.cos(a), np.sin)[k](angle)
    return (np.sin, np.cos, lambda a: -np.sin(a), lambda a: -np.cos(a))[k](angle)


def mode_angles(modes: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """2 pi (m u + n v) for each mode row, shape (K, n_u, n_v)."""
    m = modes[:, 0][:, None, None]
    n = modes[:, 1][:, None, None]
    return TWO_PI * (m * u[None, :, None] + n * v[None, None, :])


def _series(table: Mapping, kind: str, a: int, b: int, u, v) -> np.ndarray:
    """Sum of a_mn d^a/du^a d^b/dv^b trig(2 pi (m u + n v)) on the grid."""
    if not table:
        return np.zeros((u.size, v.size))
    modes = np.array(list(table.keys()), dtype=float)
    coef = np.array(list(table.values()))
    scale = coef * (TWO_PI * modes[:, 0]) ** a * (TWO_PI * modes[:, 1]) ** b
    return np.tensordot(scale, _trig(kind, a + b, mode_angles(modes, u, v)), axes=1)


def cylindrical_frame(v: np.ndarray, nfp: int):
    phi = TWO_PI * v / nfp
    e_r = np.stack([np.cos(phi), np.sin(phi), np.zeros_like(phi)], axis=-1)
    e_phi = np.stack([-np.sin(phi), np.cos(phi), np.zeros_like(phi)], axis=-1)
    return e_r, e_phi


def rotations(nfp: int) -> np.ndarray:
    """Rotation matrices about z by 2 pi q / nfp, q = 0..nfp-1."""
    a = TWO_PI * np.arange(nfp) / nfp
    c, s = np.cos(a), np.sin(a)
    rot = np.zeros((nfp, 3, 3))
    rot[:, 0, 0], rot[:, 0, 1], rot[:, 1, 0], rot[:, 1, 1] = c, -s, s, c
    rot[:, 2, 2] = 1.0
    return rot


def replicate(vectors: np.ndarray, nfp: int) -> np.ndarray:
    """Rotate a field of 3-vectors onto every period: (nfp, ...) + shape."""
    return np.einsum("qij,...j->q...i", rotations(nfp), vectors)


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """One field period of a surface sampled on the uniform (u, v) grid."""

    nfp: int
    u: np.ndarray
    v: np.ndarray
    radius: np.ndarray
    points: np.ndarray
    du: np.ndarray
    dv: np.ndarray
    duu: np.ndarray
    duv: np.ndarray
    dvv: np.ndarray
    cross: np.ndarray  # du x dv
    normal: np.ndarray  # outward, = -cross / |cross|
    area_elem: np.ndarray
    metric: np.ndarray
    metric_inv: np.ndarray

    @property
    def n_u(self) -> int:
        return self.u.size

    @property
    def n_v(self) -> int:
        return self.v.size

    @property
    def shape(self):
        return (self.u.size, self.v.size)

    @property
    def weights(self) -> np.ndarray:
        """Full-surface quadrature weights attached to one-period grid points."""
        return self.nfp * self.area_elem / (self.n_u * self.n_v)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(self.weights * values))

    def full_points(self) -> np.ndarray:
        return replicate(self.points, self.nfp).reshape(-1, 3)

    def full_normals(self) -> np.ndarray:
        return replicate(self.normal, self.nfp).reshape(-1, 3)

    def chart_coordinates(self) -> tuple:
        """(u, t) of every full-surface point, t = toroidal fraction in [0, 1)."""
        uu, vv = np.meshgrid(self.u, self.v, indexing="ij")
        q = np.arange(self.nfp)[:, None, None]
        t = (vv[None] + q) / self.nfp
        return np.broadcast_to(uu, t.shape).reshape(-1), t.reshape(-1)


def eval_mesh(surface: FourierSurface, n_u: int, n_v: int) -> SurfaceMesh:
    """Sample one field period of ``surface`` at u_i = i/n_u, v_j = j/n_v."""
    if n_u < 4 or n_v < 4:
        raise ValueError("n_u and n_v must be at least 4")
    u = np.arange(n_u) / n_u
    v = np.arange(n_v) / n_v
    rs = {ab: _series(surface.r_cos, "cos", *ab, u, v) for ab in
          [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]}
    zs = {ab: _series(surface.z_sin, "sin", *ab, u, v) for ab in
          [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]}
    radius = rs[0, 0]
    if np.any(radius <= 0.0):
        i, j = np.unravel_index(np.argmin(radius), radius.shape)
        raise NonPositiveRadius(
            f"R(u,v) = {radius[i, j]:.6g} <= 0 at (u,v) = ({u[i]:.4f}, {v[j]:.4f})")

    e_r, e_phi = cylindrical_frame(v, surface.nfp)
    e_r, e_phi = e_r[None], e_phi[None]
    e_z = np.array([0.0, 0.0, 1.0])
    dphi = TWO_PI / surface.nfp

    def vec(a_r, a_phi, a_z):
        return a_r[..., None] * e_r + a_phi[..., None] * e_phi + a_z[..., None] * e_z

    zero = np.zeros_like(radius)
    points = vec(radius, zero, zs[0, 0])
    du = vec(rs[1, 0], zero, zs[1, 0])
    dv = vec(rs[0, 1], radius * dphi, zs[0, 1])
    duu = vec(rs[2, 0], zero, zs[2, 0])
    duv = vec(rs[1, 1], rs[1, 0] * dphi, zs[1, 1])
    dvv = vec(rs[0, 2] - radius * dphi ** 2, 2.0 * rs[0, 1] * dphi, zs[0, 2])

    cross = np.cross(du, dv)
    area_elem = np.sqrt(np.sum(cross * cross, axis=-1))
    if not np.all(area_elem > 1e-14 * max(1.0, float(np.max(area_elem)))):
        raise DegenerateEmbedding("|du x dv| vanishes on the grid")
    normal = -cross / area_elem[..., None]

    g = np.empty(radius.shape + (2, 2))
    g[..., 0, 0] = np.sum(du * du, -1)
    g[..., 0, 1] = g[..., 1, 0] = np.sum(du * dv, -1)
    g[..., 1, 1] = np.sum(dv * dv, -1)
    mesh = SurfaceMesh(surface.nfp, u, v, radius, points, du, dv, duu, duv, dvv,
                       cross, normal, area_elem, g, np.linalg.inv(g))
    # divergence theorem: a positive enclosed volume means the normal points outward
    if mesh.integrate(np.sum(points * normal, -1)) <= 0.0:
        raise DegenerateEmbedding(
            "parametrization has the wrong orientation (normal points inward); "
            "flip the sign of the Z coefficients")
    return mesh


# ---------------------------------------------------------------- coefficients

@dataclass(frozen=True, eq=False)
class CoefficientBasis:
    """theta_k = d psi / d c_k and its chart derivatives, shape (K, n_u, n_v, 3)."""

    ids: list
    theta: np.ndarray
    theta_u: np.ndarray
    theta_v: np.ndarray

    def __len__(self):
        return len(self.ids)


def _mode_fields(ids: Sequence, u: np.ndarray, v: np.ndarray, nfp: int, second: bool = False):
    modes = np.array([(m, n) for _, m, n in ids], dtype=float).reshape(-1, 2)
    is_r = np.array([kind == "R" for kind, _, _ in ids])
    ang = mode_angles(modes, u, v)
    c, s = np.cos(ang), np.sin(ang)
    wm = (TWO_PI * modes[:, 0])[:, None, None]
    wn = (TWO_PI * modes[:, 1])[:, None, None]
    dphi = TWO_PI / nfp
    e_r, e_phi = cylindrical_frame(v, nfp)
    e_r, e_phi = e_r[None, None], e_phi[None, None]
    e_z = np.array([0.0, 0.0, 1.0])
    rr = is_r[:, None, None, None]

    def pick(r_part, z_part):
        return np.where(rr, r_part, z_part)

    S = lambda a: a[..., None]  # noqa: E731
    theta = pick(S(c) * e_r, S(s) * e_z)
    theta_u = pick(S(-wm * s) * e_r, S(wm * c) * e_z)
    theta_v = pick(S(-wn * s) * e_r + S(dphi * c) * e_phi, S(wn * c) * e_z)
    if not second:
        return theta, theta_u, theta_v
    theta_uu = pick(S(-wm ** 2 * c) * e_r, S(-wm ** 2 * s) * e_z)
    theta_uv = pick(S(-wm * wn * c) * e_r - S(dphi * wm * s) * e_phi, S(-wm * wn * s) * e_z)
    theta_vv = pick(S(-(wn ** 2 + dphi ** 2) * c) * e_r - S(2.0 * dphi * wn * s) * e_phi,
                    S(-wn ** 2 * s) * e_z)
    return theta, theta_u, theta_v, theta_uu, theta_uv, theta_vv


def coefficient_basis(surface: FourierSurface, mesh: SurfaceMesh,
                      ids: Sequence | None = None) -> CoefficientBasis:
    """Per-coefficient perturbation fields on the grid of ``mesh``."""
    ids = surface.coefficient_ids() if ids is None else list(ids)
    theta, theta_u, theta_v = _mode_fields(ids, mesh.u, mesh.v, mesh.nfp)
    return CoefficientBasis(ids, theta, theta_u, theta_v)


def tangential_gradient(mesh: SurfaceMesh, f_u: np.ndarray, f_v: np.ndarray) -> np.ndarray:
    """nabla_S f = g^{ab} d_b f d_a psi from chart derivatives of a scalar field."""
    gi = mesh.metric_inv
    a_u = gi[..., 0, 0] * f_u + gi[..., 0, 1] * f_v
    a_v = gi[..., 1, 0] * f_u + gi[..., 1, 1] * f_v
    return a_u[..., None] * mesh.du + a_v[..., None] * mesh.dv


# ------------------------------------------------------------------- curvature

def principal_curvatures_from(du, dv, duu, duv, dvv):
    """Principal curvatures from first and second chart derivatives.

    Written without ``abs``/``norm`` so complex-step perturbations propagate.
    """
    cross = np.cross(du, dv)
    nu = -cross / np.sqrt(np.sum(cross * cross, -1))[..., None]
    e = np.sum(du * du, -1)
    f = np.sum(du * dv, -1)
    g = np.sum(dv * dv, -1)
    l2 = np.sum(duu * nu, -1)
    m2 = np.sum(duv * nu, -1)
    n2 = np.sum(dvv * nu, -1)
    det = e * g - f * f
    gauss = (l2 * n2 - m2 * m2) / det
    mean = (e * n2 - 2.0 * f * m2 + g * l2) / (2.0 * det)
    disc = np.sqrt(mean * mean - gauss)
    return mean + disc, mean - disc


def principal_curvatures(mesh: SurfaceMesh) -> np.ndarray:
    """(k1, k2) at every grid point, shape (n_u, n_v, 2)."""
    e, f, g = mesh.metric[..., 0, 0], mesh.metric[..., 0, 1], mesh.metric[..., 1, 1]
    l2 = np.sum(mesh.duu * mesh.normal, -1)
    m2 = np.sum(mesh.duv * mesh.normal, -1)
    n2 = np.sum(mesh.dvv * mesh.normal, -1)
    det = e * g - f * f
    gauss = (l2 * n2 - m2 * m2) / det
    mean = (e * n2 - 2.0 * f * m2 + g * l2) / (2.0 * det)
    disc = np.sqrt(np.maximum(mean * mean - gauss, 0.0))
    return np.stack([mean + disc, mean - disc], axis=-1)


def kappa_max(mesh: SurfaceMesh) -> float:
    return float(np.max(np.abs(principal_curvatures(mesh))))


# ------------------------------------------------------------------- distances

def softmin(values: np.ndarray, tau: float):
    """Log-sum-exp smooth minimum and its weights (which sum to one)."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return np.inf, values
    lo = np.min(values)
    z = np.exp(-(values - lo) / tau)
    total = np.sum(z)
    return lo - tau * np.log(total), z / total


def min_distance(mesh: SurfaceMesh, other: SurfaceMesh) -> float:
    """Hard minimum distance between the two full-surface point clouds."""
    d, _ = cKDTree(other.full_points()).query(mesh.full_points())
    return float(np.min(d))


@dataclass
class DistancePairs:
    """Near-minimal point pairs between one period of a mesh and a point cloud."""

    i: np.ndarray  # flat index into the one-period grid of the mesh
    j: np.ndarray  # flat index into the cloud
    dist: np.ndarray
    hard_min: float


def distance_pairs(mesh: SurfaceMesh, cloud: np.ndarray, window: float) -> DistancePairs:
    """Pairs whose distance lies within ``window`` of the minimum."""
    pts = mesh.points.reshape(-1, 3)
    tree = cKDTree(cloud)
    d, _ = tree.query(pts)
    hard = float(np.min(d))
    sdm = cKDTree(pts).sparse_distance_matrix(tree, hard + window, output_type="ndarray")
    keep = sdm["v"] <= hard + window
    # sparse_distance_matrix drops exact zeros; the minimum itself is always present
    return DistancePairs(sdm["i"][keep], sdm["j"][keep], sdm["v"][keep], hard)


def smooth_min_distance(mesh: SurfaceMesh, other: SurfaceMesh, tau: float) -> float:
    pairs = distance_pairs(mesh, other.full_points(), 50.0 * tau)
    return softmin(pairs.dist, tau)[0]


# ------------------------------------------------------------------------ reach

@dataclass
class ReachTerms:
    """Candidate radii whose minimum is the reach estimate.

    ``curv_*`` hold curvature radii 1/|kappa| (grid index, principal branch);
    ``pair_*`` hold ball radii |x - y|^2 / (2 |<x - y, nu_x>|) for pairs of
    points far apart in the chart, x on the first period and y anywhere.
    """

    curv_index: np.ndarray
    curv_branch: np.ndarray
    curv_radius: np.ndarray
    pair_i: np.ndarray
    pair_j: np.ndarray
    pair_radius: np.ndarray
    curvature_radius: float
    bottleneck: float

    @property
    def hard_min(self) -> float:
        return min(self.curvature_radius, self.bottleneck)

    def all_radii(self) -> np.ndarray:
        return np.concatenate([self.curv_radius, self.pair_radius])


def _chart_separation(mesh: SurfaceMesh, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    u_full, t_full = mesh.chart_coordinates()
    du = np.abs(u_full[i] - u_full[j])
    dt = np.abs(t_full[i] - t_full[j])
    du = np.minimum(du, 1.0 - du)
    dt = np.minimum(dt, 1.0 - dt)
    return np.sqrt(du * du + dt * dt)


def reach_terms(mesh: SurfaceMesh, cutoff: float = 0.25, window: float = 0.0) -> ReachTerms:
    """Collect every candidate radius within ``window`` of the reach estimate."""
    kappa = np.abs(principal_curvatures(mesh)).reshape(-1, 2)
    with np.errstate(divide="ignore"):
        radii = np.where(kappa > 0.0, 1.0 / kappa, np.inf)
    curvature_radius = float(np.min(radii))
    bound = curvature_radius + window

    pts = mesh.points.reshape(-1, 3)
    nrm = mesh.normal.reshape(-1, 3)
    full = mesh.full_points()
    # a ball radius is at least half the chord, so longer chords cannot compete
    sdm = cKDTree(pts).sparse_distance_matrix(cKDTree(full), 2.0 * bound, output_type="ndarray")
    i, j, d = sdm["i"], sdm["j"], sdm["v"]
    far = _chart_separation(mesh, i, j) > cutoff
    i, j, d = i[far], j[far], d[far]
    s = np.abs(np.sum((pts[i] - full[j]) * nrm[i], -1))
    with np.errstate(divide="ignore"):
        ratio = np.where(s > 0.0, d * d / (2.0 * s), np.inf)
    bottleneck = float(np.min(ratio)) if ratio.size else np.inf

    hard = min(curvature_radius, bottleneck)
    ci = np.nonzero(radii <= hard + window)
    keep = ratio <= hard + window
    return ReachTerms(ci[0], ci[1], radii[ci], i[keep], j[keep], ratio[keep],
                      curvature_radius, bottleneck)


@dataclass(frozen=True)
class GeometryReport:
    area: float
    min_distance_to: float
    kappa_max: float
    reach_estimate: float
    curvature_radius: float
    bottleneck: float


def area(mesh: SurfaceMesh) -> float:
    return float(np.sum(mesh.weights))


def geometry_report(mesh: SurfaceMesh, other: SurfaceMesh | None = None,
                    cutoff: float = 0.25) -> GeometryReport:
    """Area, distance to ``other``, maximal curvature and reach estimate."""
    terms = reach_terms(mesh, cutoff)
    dist = min_distance(mesh, other) if other is not None else np.nan
    return GeometryReport(area(mesh), dist, 1.0 / terms.curvature_radius,
                          terms.hard_min, terms.curvature_radius, terms.bottleneck)
