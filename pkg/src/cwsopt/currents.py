"""Divergence-free surface currents from a scalar potential on the flat torus.

A flat field ``X = grad_perp(Phi) + I_p d_u + I_t d_v`` with
``grad_perp(Phi) = Phi_u d_v - Phi_v d_u`` is pushed to the surface by
``j = (X^u psi_u + X^v psi_v) / |psi_u x psi_v|``.  Dividing by the area
element keeps ``j`` divergence free with respect to the surface measure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import SingularGram
from .surfaces import TWO_PI, SurfaceMesh, mode_angles, mode_ids


def potential_modes(m_max: int, n_max: int) -> list:
    """Ordering of the sine modes of Phi: m = 0..m_max, n = -n_max..n_max.

    (0, 0) and the redundant (0, n < 0) are skipped.
    """
    return mode_ids("Phi", m_max, n_max)


@dataclass(frozen=True, eq=False)
class CurrentPotential:
    """Phi = sum phi_sin[m, n] sin(2 pi (m u + n v)) plus net currents in amperes."""

    phi_sin: Mapping = field(default_factory=dict)
    i_pol: float = 0.0
    i_tor: float = 0.0

    def __post_init__(self):
        out = {}
        for (m, n), value in self.phi_sin.items():
            m, n = int(m), int(n)
            if m < 0:
                raise ValueError("potential modes need m >= 0")
            if m == 0 and n < 0:
                m, n, value = 0, -n, -value
            if m == 0 and n == 0:
                if value != 0.0:
                    raise ValueError("Phi_0,0 multiplies sin(0) and must be zero")
                continue
            out[(m, n)] = out.get((m, n), 0.0) + float(value)
        object.__setattr__(self, "phi_sin", out)
        object.__setattr__(self, "i_pol", float(self.i_pol))
        object.__setattr__(self, "i_tor", float(self.i_tor))

    @classmethod
    def from_vector(cls, x, m_max: int, n_max: int, i_pol: float = 0.0, i_tor: float = 0.0):
        modes = potential_modes(m_max, n_max)
        if len(x) != len(modes):
            raise ValueError(f"expected {len(modes)} coefficients, got {len(x)}")
        return cls(dict(zip(modes, map(float, x))), i_pol, i_tor)

    def vector(self, m_max: int, n_max: int) -> np.ndarray:
        return np.array([self.phi_sin.get(k, 0.0) for k in potential_modes(m_max, n_max)])

    def scaled(self, factor: float) -> "CurrentPotential":
        return CurrentPotential({k: factor * v for k, v in self.phi_sin.items()},
                                factor * self.i_pol, factor * self.i_tor)


@dataclass(frozen=True, eq=False)
class SurfaceCurrent:
    """j at the grid points of one period plus its flat components."""

    mesh: SurfaceMesh
    xu: np.ndarray
    xv: np.ndarray
    vectors: np.ndarray


def flat_basis(modes, u: np.ndarray, v: np.ndarray):
    """Flat components (X^u, X^v) of grad_perp of each sine mode, shape (K, n_u, n_v)."""
    modes = np.asarray(modes, dtype=float).reshape(-1, 2)
    c = np.cos(mode_angles(modes, u, v))
    xu = -(TWO_PI * modes[:, 1])[:, None, None] * c
    xv = (TWO_PI * modes[:, 0])[:, None, None] * c
    return xu, xv


def flat_field(pot: CurrentPotential, mesh: SurfaceMesh):
    xu = np.full(mesh.shape, pot.i_pol)
    xv = np.full(mesh.shape, pot.i_tor)
    if pot.phi_sin:
        bu, bv = flat_basis(list(pot.phi_sin), mesh.u, mesh.v)
        coef = np.array(list(pot.phi_sin.values()))
        xu = xu + np.tensordot(coef, bu, axes=1)
        xv = xv + np.tensordot(coef, bv, axes=1)
    return xu, xv


def to_vectors(mesh: SurfaceMesh, xu: np.ndarray, xv: np.ndarray) -> np.ndarray:
    """Pushforward of flat components (..., n_u, n_v) to 3-vectors on the surface."""
    return (xu[..., None] * mesh.du + xv[..., None] * mesh.dv) / mesh.area_elem[..., None]


def push_forward(pot: CurrentPotential, mesh: SurfaceMesh) -> SurfaceCurrent:
    xu, xv = flat_field(pot, mesh)
    return SurfaceCurrent(mesh, xu, xv, to_vectors(mesh, xu, xv))


def current_norm2(current: SurfaceCurrent) -> float:
    """Squared L2 norm of j over the full surface."""
    j = current.vectors
    return current.mesh.integrate(np.sum(j * j, -1))


@dataclass(frozen=True, eq=False)
class CurrentGram:
    """||j||^2 = x^T M x + 2 m0^T x + s0 for the potential coefficient vector x."""

    M: np.ndarray
    m0: np.ndarray
    s0: float
    m_max: int
    n_max: int

    def norm2(self, x: np.ndarray) -> float:
        return float(x @ self.M @ x + 2.0 * self.m0 @ x + self.s0)


def _quadratic(mesh: SurfaceMesh, au, av, bu, bv):
    # sum over the grid of <a, b> |N| with a = (a^u psi_u + a^v psi_v)/|N|
    w = mesh.nfp / (mesh.n_u * mesh.n_v) / mesh.area_elem
    g = mesh.metric
    guu, guv, gvv = (w * g[..., 0, 0]).ravel(), (w * g[..., 0, 1]).ravel(), (w * g[..., 1, 1]).ravel()
    au, av = au.reshape(au.shape[0], -1), av.reshape(av.shape[0], -1)
    bu, bv = bu.reshape(bu.shape[0], -1), bv.reshape(bv.shape[0], -1)
    return ((au * guu) @ bu.T + (au * guv) @ bv.T + (av * guv) @ bu.T + (av * gvv) @ bv.T)


def current_norm_gram(mesh: SurfaceMesh, m_max: int, n_max: int,
                      i_pol: float = 0.0, i_tor: float = 0.0) -> CurrentGram:
    """Gram matrix of the potential basis and the affine cross terms."""
    bu, bv = flat_basis(potential_modes(m_max, n_max), mesh.u, mesh.v)
    cu = np.full((1,) + mesh.shape, i_pol)
    cv = np.full((1,) + mesh.shape, i_tor)
    M = _quadratic(mesh, bu, bv, bu, bv)
    M = 0.5 * (M + M.T)
    m0 = _quadratic(mesh, bu, bv, cu, cv)[:, 0]
    s0 = float(_quadratic(mesh, cu, cv, cu, cv)[0, 0])
    if M.size:
        try:
            np.linalg.cholesky(M)
        except np.linalg.LinAlgError as exc:
            raise SingularGram(
                "current Gram matrix is not positive definite; the grid is too coarse "
                f"for potential truncation ({m_max}, {n_max})") from exc
        eig = np.linalg.eigvalsh(M)
        if eig[0] <= 1e-13 * eig[-1]:
            raise SingularGram(
                f"current Gram matrix is numerically singular (cond {eig[-1] / eig[0]:.3g}); "
                f"refine the grid or lower the potential truncation ({m_max}, {n_max})")
    return CurrentGram(M, m0, s0, m_max, n_max)


@dataclass(frozen=True)
class FluxReport:
    """Net currents through the grid lines of one field period.

    ``poloidal_lines[i]`` is the flux through the line u = u_i (integrated over
    v), ``toroidal_lines[j]`` the flux through v = v_j (integrated over u).
    """

    poloidal: float
    toroidal: float
    poloidal_lines: np.ndarray
    toroidal_lines: np.ndarray


def flux_check(current: SurfaceCurrent) -> FluxReport:
    """Integrate the flux of j across u = const and v = const grid lines.

    Line conormals are ``psi_v x (-nu)`` and ``(-nu) x psi_u``, which makes the
    fluxes equal to I_p and I_t respectively.
    """
    mesh = current.mesh
    j = current.vectors
    minus_nu = -mesh.normal
    pol = np.sum(j * np.cross(mesh.dv, minus_nu), -1)
    tor = np.sum(j * np.cross(minus_nu, mesh.du), -1)
    pol_lines = np.mean(pol, axis=1)
    tor_lines = np.mean(tor, axis=0)
    return FluxReport(float(pol_lines[0]), float(tor_lines[0]), pol_lines, tor_lines)
