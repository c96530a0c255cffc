"""Shape gradient of the penalized cost with respect to surface Fourier coefficients.

The derivative of C(S) in the direction of a deformation field theta is

    dC(S)[theta] = int_S <theta, X1> + D theta : X2 dmu_S,

with X1 = -2 Zhat(k, j) and X2 = -2 Z(k) j^T + 2 lam j j^T - lam |j|^2 (I - nu nu^T).
Because j is the inner minimizer, no derivative of j with respect to the shape
is needed.  Every row of X2 is tangential, so D theta : X2 only involves the
tangential derivatives of theta, which are known analytically for theta_k = d psi / d c_k.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .biot_savart import boundary_adjoint_fields
from .errors import NotStationary, ToleranceExceeded
from .inverse import ShapeState, SolverSettings, solve_at
from .surfaces import (TWO_PI, CoefficientBasis, FourierSurface, SurfaceMesh, _mode_fields,
                       coefficient_basis, cylindrical_frame, distance_pairs, mode_angles,
                       principal_curvatures_from, reach_terms, rotations, softmin)

STATIONARITY_TOL = 1e-8


# ------------------------------------------------------------------ X1 and X2

def compute_X1_X2(state: ShapeState, tol: float = STATIONARITY_TOL):
    """Per-point X1 (n_u, n_v, 3) and X2 (n_u, n_v, 3, 3) at the inner optimum."""
    res = state.result
    if not res.stationarity <= tol:
        raise NotStationary(
            f"inner optimality residual {res.stationarity:.3g} exceeds {tol:g}; "
            "the envelope argument does not apply")
    mesh = state.mesh
    current = state.current
    z, zhat = boundary_adjoint_fields(mesh, state.op, res.phi_opt, current, state.settings.guard)
    return assemble_X1_X2(mesh, current.vectors, z, zhat, res.lam)


def assemble_X1_X2(mesh: SurfaceMesh, j: np.ndarray, z: np.ndarray, zhat: np.ndarray,
                   lam: float):
    nu = mesh.normal
    proj = np.eye(3) - nu[..., :, None] * nu[..., None, :]
    jj = j[..., :, None] * j[..., None, :]
    x1 = -2.0 * zhat
    x2 = (-2.0 * z[..., :, None] * j[..., None, :] + 2.0 * lam * jj
          - lam * np.sum(j * j, -1)[..., None, None] * proj)
    return x1, x2


def contract_fields(mesh: SurfaceMesh, x1: np.ndarray, x2: np.ndarray,
                    theta: np.ndarray, theta_u: np.ndarray, theta_v: np.ndarray,
                    split: bool = False):
    """int_S <theta, X1> + g^{ab} <d_b theta, X2 d_a psi> dmu for stacked fields (K, n_u, n_v, 3)."""
    gi = mesh.metric_inv
    yu = np.einsum("...ij,...j->...i", x2, mesh.du)
    yv = np.einsum("...ij,...j->...i", x2, mesh.dv)
    wu = gi[..., 0, 0, None] * yu + gi[..., 1, 0, None] * yv
    wv = gi[..., 0, 1, None] * yu + gi[..., 1, 1, None] * yv
    w = mesh.weights
    t1 = np.einsum("kijc,ijc,ij->k", theta, x1, w)
    t2 = np.einsum("kijc,ijc,ij->k", theta_u, wu, w) + np.einsum("kijc,ijc,ij->k", theta_v, wv, w)
    return (t1, t2) if split else t1 + t2


def contract_gradient(mesh: SurfaceMesh, x1: np.ndarray, x2: np.ndarray,
                      basis: CoefficientBasis) -> dict:
    g = contract_fields(mesh, x1, x2, basis.theta, basis.theta_u, basis.theta_v)
    return dict(zip(basis.ids, g))


# ------------------------------------------------------------------ penalties

@dataclass(frozen=True)
class PenaltyConfig:
    """One-sided barriers w * max(0, t)^p on perimeter, distance and reach.

    ``t`` is the relative violation: (area - P_max)/P_max for the perimeter and
    (threshold - value)/threshold for distance and reach.  A zero weight
    switches a penalty off.  ``lse_temperature`` (m) smooths the minima.
    """

    perimeter_max: float = 56.0
    distance_min: float = 0.20
    reach_min: float = 0.0769
    w_perimeter: float = 1.0
    w_distance: float = 1.0
    w_reach: float = 1.0
    p_perimeter: float = 3.0
    p_distance: float = 3.0
    p_reach: float = 3.0
    lse_temperature: float = 1e-3
    reach_cutoff: float = 0.25

    def __post_init__(self):
        for name in ("perimeter_max", "distance_min", "reach_min", "lse_temperature",
                     "reach_cutoff"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("w_perimeter", "w_distance", "w_reach"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative")
        for name in ("p_perimeter", "p_distance", "p_reach"):
            if not getattr(self, name) > 1:
                raise ValueError(f"{name} must exceed 1 for a C1 barrier")

    @classmethod
    def off(cls, **kw) -> "PenaltyConfig":
        return cls(w_perimeter=0.0, w_distance=0.0, w_reach=0.0, **kw)


def barrier(t: float, weight: float, power: float):
    """Value and derivative in t of weight * max(0, t)^power."""
    if t <= 0.0 or weight == 0.0:
        return 0.0, 0.0
    return weight * t ** power, weight * power * t ** (power - 1.0)


@dataclass
class PenaltyResult:
    measured: dict  # smooth quantities entering the barriers
    values: dict
    gradients: dict  # name -> (K,) array

    @property
    def total(self) -> float:
        return float(sum(self.values.values()))


def _area_gradient(mesh: SurfaceMesh, basis: CoefficientBasis) -> np.ndarray:
    n_hat = mesh.cross / mesh.area_elem[..., None]
    dn = np.cross(basis.theta_u, mesh.dv) + np.cross(mesh.du, basis.theta_v)
    scale = mesh.nfp / (mesh.n_u * mesh.n_v)
    return scale * np.einsum("kijc,ijc->k", dn, n_hat)


def smooth_distance(mesh: SurfaceMesh, plasma: SurfaceMesh, basis: CoefficientBasis | None,
                    tau: float):
    """Smooth min distance between the surfaces and its coefficient gradient."""
    cloud = plasma.full_points()
    pairs = distance_pairs(mesh, cloud, 50.0 * tau)
    value, wts = softmin(pairs.dist, tau)
    if basis is None:
        return value, None
    x = mesh.points.reshape(-1, 3)
    units = (x[pairs.i] - cloud[pairs.j]) / pairs.dist[:, None]
    theta = basis.theta.reshape(len(basis), -1, 3)[:, pairs.i]
    return value, np.einsum("a,ac,kac->k", wts, units, theta)


def _complex_step_curvature(mesh: SurfaceMesh, surface: FourierSurface, ids, flat_idx, branch,
                            h: float = 1e-30) -> np.ndarray:
    """d kappa_branch / d c_k at selected grid points, shape (K, n_sel)."""
    iu, iv = np.unravel_index(flat_idx, mesh.shape)
    fields = _mode_fields(ids, mesh.u, mesh.v, mesh.nfp, second=True)
    _, tu, tv, tuu, tuv, tvv = (f[:, iu, iv] for f in fields)
    base = [getattr(mesh, name)[iu, iv][None] for name in ("du", "dv", "duu", "duv", "dvv")]
    pert = [tu, tv, tuu, tuv, tvv]
    args = [b + 1j * h * p for b, p in zip(base, pert)]
    k1, k2 = principal_curvatures_from(*args)
    return np.where(branch[None] == 0, k1.imag, k2.imag) / h


def _kappa_values(mesh: SurfaceMesh, flat_idx, branch) -> np.ndarray:
    iu, iv = np.unravel_index(flat_idx, mesh.shape)
    args = [getattr(mesh, name)[iu, iv] for name in ("du", "dv", "duu", "duv", "dvv")]
    k1, k2 = principal_curvatures_from(*args)
    return np.where(branch == 0, k1, k2)


def smooth_reach(mesh: SurfaceMesh, surface: FourierSurface | None, basis: CoefficientBasis | None,
                 tau: float, cutoff: float = 0.25):
    """Smooth reach estimate (curvature radii and ball radii) and its gradient."""
    terms = reach_terms(mesh, cutoff, window=50.0 * tau)
    value, wts = softmin(terms.all_radii(), tau)
    if basis is None:
        return value, None
    nc = len(terms.curv_radius)
    grad = np.zeros(len(basis))
    if nc:
        kappa = _kappa_values(mesh, terms.curv_index, terms.curv_branch)
        dk = _complex_step_curvature(mesh, surface, basis.ids, terms.curv_index, terms.curv_branch)
        # rho = 1/|kappa|
        drho = -np.sign(kappa)[None] / kappa[None] ** 2 * dk
        grad += drho @ wts[:nc]
    if len(terms.pair_radius):
        grad += _ball_radius_gradient(mesh, basis, terms.pair_i, terms.pair_j) @ wts[nc:]
    return value, grad


def _ball_radius_gradient(mesh: SurfaceMesh, basis: CoefficientBasis, i, j) -> np.ndarray:
    """d/dc_k of |x - y|^2 / (2 |<x - y, nu_x>|), shape (K, n_pairs)."""
    n_cell = mesh.n_u * mesh.n_v
    q, j0 = np.divmod(j, n_cell)
    rot = rotations(mesh.nfp)[q]
    pts = mesh.points.reshape(-1, 3)
    x = pts[i]
    y = np.einsum("aij,aj->ai", rot, pts[j0])
    nu = mesh.normal.reshape(-1, 3)[i]
    r = x - y
    d2 = np.sum(r * r, -1)
    s = np.sum(r * nu, -1)

    th = basis.theta.reshape(len(basis), -1, 3)
    dx = th[:, i]
    dy = np.einsum("aij,kaj->kai", rot, th[:, j0])
    dr = dx - dy
    tu = basis.theta_u.reshape(len(basis), -1, 3)[:, i]
    tv = basis.theta_v.reshape(len(basis), -1, 3)[:, i]
    du = mesh.du.reshape(-1, 3)[i]
    dv = mesh.dv.reshape(-1, 3)[i]
    area = mesh.area_elem.ravel()[i]
    dcross = np.cross(tu, dv[None]) + np.cross(du[None], tv)
    dcross_t = dcross - np.sum(dcross * nu, -1)[..., None] * nu
    dnu = -dcross_t / area[:, None]
    ds = np.sum(dr * nu, -1) + np.sum(r * dnu, -1)
    return np.sum(r * dr, -1) / np.abs(s) - d2 * np.sign(s) * ds / (2.0 * s * s)


def penalty_eval(surface: FourierSurface, mesh: SurfaceMesh, plasma: SurfaceMesh,
                 cfg: PenaltyConfig, basis: CoefficientBasis | None = None,
                 gradients: bool = True) -> PenaltyResult:
    """Barrier values and coefficient gradients for the three geometric constraints."""
    if gradients and basis is None:
        basis = coefficient_basis(surface, mesh)
    b = basis if gradients else None
    k = len(basis) if basis is not None else 0
    measured, values, grads = {}, {}, {}

    area = float(np.sum(mesh.weights))
    measured["perimeter"] = area
    val, dt = barrier((area - cfg.perimeter_max) / cfg.perimeter_max, cfg.w_perimeter,
                      cfg.p_perimeter)
    values["perimeter"] = val
    if b is not None:
        grads["perimeter"] = (dt / cfg.perimeter_max * _area_gradient(mesh, b)
                              if dt else np.zeros(k))

    if cfg.w_distance > 0:
        dist, dgrad = smooth_distance(mesh, plasma, b, cfg.lse_temperature)
    else:
        dist, dgrad = np.nan, None
    measured["distance"] = dist
    val, dt = (barrier((cfg.distance_min - dist) / cfg.distance_min, cfg.w_distance,
                       cfg.p_distance) if cfg.w_distance > 0 else (0.0, 0.0))
    values["distance"] = val
    if b is not None:
        grads["distance"] = -dt / cfg.distance_min * dgrad if dt else np.zeros(k)

    if cfg.w_reach > 0:
        reach, rgrad = smooth_reach(mesh, surface, b, cfg.lse_temperature, cfg.reach_cutoff)
    else:
        reach, rgrad = np.nan, None
    measured["reach"] = reach
    val, dt = (barrier((cfg.reach_min - reach) / cfg.reach_min, cfg.w_reach, cfg.p_reach)
               if cfg.w_reach > 0 else (0.0, 0.0))
    values["reach"] = val
    if b is not None:
        grads["reach"] = -dt / cfg.reach_min * rgrad if dt else np.zeros(k)
    return PenaltyResult(measured, values, grads)


# ------------------------------------------------------------ total objective

@dataclass
class ShapeGradient:
    ids: list
    dC: np.ndarray
    dPenalties: dict
    dTotal: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def as_map(self, which: str = "total") -> dict:
        arr = {"total": self.dTotal, "C": self.dC}.get(which)
        if arr is None:
            arr = self.dPenalties[which]
        return dict(zip(self.ids, arr))


@dataclass
class Evaluation:
    """Objective value, its parts and (optionally) the gradient at one surface."""

    surface: FourierSurface
    state: ShapeState
    penalties: PenaltyResult
    total: float
    gradient: ShapeGradient | None = None

    @property
    def cost(self) -> float:
        return self.state.result.cost


def evaluate(surface: FourierSurface, target, settings: SolverSettings, cfg: PenaltyConfig,
             ids=None, gradient: bool = True) -> Evaluation:
    """Total objective C(S) + penalties and its gradient with respect to ``ids``."""
    ids = surface.coefficient_ids() if ids is None else list(ids)
    state = solve_at(surface, target, settings)
    mesh = state.mesh
    basis = coefficient_basis(surface, mesh, ids) if gradient else None
    pen = penalty_eval(surface, mesh, target.plasma_mesh, cfg, basis, gradients=gradient)
    total = state.result.cost + pen.total
    ev = Evaluation(surface, state, pen, total)
    if gradient:
        x1, x2 = compute_X1_X2(state)
        t1, t2 = contract_fields(mesh, x1, x2, basis.theta, basis.theta_u, basis.theta_v,
                                 split=True)
        dc = t1 + t2
        dtotal = dc + sum(pen.gradients.values())
        ev.gradient = ShapeGradient(ids, dc, pen.gradients, dtotal,
                                    {"theta_X1": t1, "Dtheta_X2": t2,
                                     "x2_normal_max": float(np.max(np.abs(
                                         np.einsum("...ij,...j->...i", x2, mesh.normal))))})
    return ev


def objective(surface: FourierSurface, target, settings: SolverSettings,
              cfg: PenaltyConfig) -> float:
    return evaluate(surface, target, settings, cfg, gradient=False).total


# ------------------------------------------------------------ FD verification

@dataclass
class FDReport:
    directions: np.ndarray
    analytic: np.ndarray
    finite_difference: np.ndarray
    rel_errors: np.ndarray
    step: float

    @property
    def max_error(self) -> float:
        return float(np.max(self.rel_errors)) if self.rel_errors.size else 0.0

    @property
    def median_error(self) -> float:
        return float(np.median(self.rel_errors)) if self.rel_errors.size else 0.0

    @property
    def worst(self) -> int:
        return int(np.argmax(self.rel_errors))


def relative_errors(analytic: np.ndarray, fd: np.ndarray) -> np.ndarray:
    analytic, fd = np.asarray(analytic, float), np.asarray(fd, float)
    denom = np.maximum(np.abs(fd), np.abs(analytic))
    with np.errstate(invalid="ignore", divide="ignore"):
        err = np.abs(analytic - fd) / denom
    return np.where(denom == 0.0, 0.0, err)


def fd_directional(surface: FourierSurface, target, settings: SolverSettings, cfg: PenaltyConfig,
                   direction: np.ndarray, step: float, ids=None) -> float:
    ids = surface.coefficient_ids() if ids is None else list(ids)
    x0 = surface.vector(ids)
    fp = objective(surface.with_vector(x0 + step * direction, ids), target, settings, cfg)
    fm = objective(surface.with_vector(x0 - step * direction, ids), target, settings, cfg)
    return (fp - fm) / (2.0 * step)


def fd_gradient_check(surface: FourierSurface, target, settings: SolverSettings,
                      cfg: PenaltyConfig, n_probe: int = 5, step: float = 1e-6,
                      tol: float = 1e-5, seed: int = 0, ids=None,
                      raise_on_fail: bool = True) -> FDReport:
    """Compare the analytic directional derivative with central differences.

    Directions are random unit vectors in coefficient space.
    """
    if not 1e-8 <= step <= 1e-3:
        raise ValueError("step must lie in [1e-8, 1e-3]")
    ids = surface.coefficient_ids() if ids is None else list(ids)
    ev = evaluate(surface, target, settings, cfg, ids)
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n_probe, len(ids)))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    analytic = dirs @ ev.gradient.dTotal
    fd = np.array([fd_directional(surface, target, settings, cfg, d, step, ids) for d in dirs])
    report = FDReport(dirs, analytic, fd, relative_errors(analytic, fd), step)
    if raise_on_fail and report.max_error > tol:
        raise ToleranceExceeded(
            f"max relative error {report.max_error:.3g} exceeds {tol:g} "
            f"(direction {report.worst})", report)
    return report


def fd_coefficient_gradient(surface: FourierSurface, target, settings: SolverSettings,
                            cfg: PenaltyConfig, step: float = 1e-6, ids=None) -> np.ndarray:
    """Central-difference gradient, one coefficient at a time."""
    ids = surface.coefficient_ids() if ids is None else list(ids)
    eye = np.eye(len(ids))
    return np.array([fd_directional(surface, target, settings, cfg, e, step, ids) for e in eye])


def symmetry_breaking_derivatives(state: ShapeState, modes, kinds=("Rsin", "Zcos")) -> np.ndarray:
    """Shape derivatives along deformations outside the stellarator-symmetric family.

    ``Rsin`` moves points radially by sin(2 pi (m u + n v)), ``Zcos`` vertically
    by cos(...). For a symmetric surface and target both vanish.
    """
    mesh = state.mesh
    x1, x2 = compute_X1_X2(state)
    modes_arr = np.asarray(modes, dtype=float).reshape(-1, 2)
    ang = mode_angles(modes_arr, mesh.u, mesh.v)
    c, s = np.cos(ang)[..., None], np.sin(ang)[..., None]
    wm = (TWO_PI * modes_arr[:, 0])[:, None, None, None]
    wn = (TWO_PI * modes_arr[:, 1])[:, None, None, None]
    e_r, e_phi = cylindrical_frame(mesh.v, mesh.nfp)
    e_r, e_phi = e_r[None, None], e_phi[None, None]
    e_z = np.array([0.0, 0.0, 1.0])
    dphi = TWO_PI / mesh.nfp
    out = []
    for kind in kinds:
        if kind == "Rsin":
            th, tu, tv = s * e_r, wm * c * e_r, wn * c * e_r + dphi * s * e_phi
        elif kind == "Zcos":
            th, tu, tv = c * e_z, -wm * s * e_z, -wn * s * e_z
        else:
            raise ValueError(kind)
        out.append(contract_fields(mesh, x1, x2, th, tu, tv))
    return np.concatenate(out)

