"""Regularized least-squares solve for the current potential at fixed shape."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .biot_savart import DEFAULT_GUARD, NormalFieldOperator, TargetSpec, assemble_normal_operator
from .currents import (CurrentGram, CurrentPotential, SurfaceCurrent, current_norm_gram,
                       push_forward)
from .errors import IllConditioned
from .surfaces import FourierSurface, SurfaceMesh, eval_mesh


@dataclass(frozen=True)
class InverseSolveResult:
    phi_opt: np.ndarray
    chi2_b: float
    chi2_j: float
    cost: float
    lam: float
    residual: np.ndarray  # <B, nu> - g on the one-period plasma grid
    stationarity: float  # ||H x - rhs|| / ||rhs||


@dataclass(frozen=True)
class SolverSettings:
    """Discretization and inner-problem parameters shared by cost and gradient."""

    n_u: int = 64
    n_v: int = 64
    pot_m_max: int = 12
    pot_n_max: int = 12
    i_pol: float = 1.0e6
    i_tor: float = 0.0
    lam: float = 2.5e-16
    guard: float = DEFAULT_GUARD


def normal_equations(op: NormalFieldOperator, gram: CurrentGram, lam: float):
    aw = op.A * op.weights[:, None]
    H = aw.T @ op.A + lam * gram.M
    rhs = aw.T @ (op.g - op.a0) - lam * gram.m0
    return 0.5 * (H + H.T), rhs


def solve_current(op: NormalFieldOperator, gram: CurrentGram, lam: float,
                  refine: int = 2) -> InverseSolveResult:
    """Minimize sum w (A x + a0 - g)^2 + lam ||j||^2 by a scaled Cholesky solve."""
    if not lam > 0.0:
        raise ValueError("lambda must be positive")
    H, rhs = normal_equations(op, gram, lam)
    n = len(rhs)
    if n == 0:
        x = np.zeros(0)
        stat = 0.0
    else:
        d = np.sqrt(np.diag(H))
        if not np.all(d > 0.0):
            raise IllConditioned("normal matrix has a nonpositive diagonal entry")
        hs = H / np.outer(d, d)
        try:
            factor = cho_factor(hs, lower=True, check_finite=True)
        except (LinAlgError, ValueError) as exc:
            raise IllConditioned(
                f"Cholesky factorization failed at lambda = {lam:g}; increase lambda or "
                "lower the potential truncation") from exc
        piv = np.abs(np.diag(factor[0]))
        if piv.min() ** 2 <= 64 * np.finfo(float).eps * piv.max() ** 2:
            raise IllConditioned(
                f"normal matrix is numerically singular at lambda = {lam:g} "
                f"(pivot ratio {(piv.min() / piv.max()) ** 2:.2e})")
        x =cho_solve(factor, rhs / d) / d
        for _ in range(refine):
            x = x + cho_solve(factor, (rhs - H @ x) / d) / d
        rn = np.linalg.norm(rhs)
        stat = float(np.linalg.norm(H @ x - rhs) / rn) if rn > 0 else float(np.linalg.norm(H @ x))
    chi2_b = op.chi2_b(x)
    chi2_j = gram.norm2(x)
    return InverseSolveResult(x, chi2_b, chi2_j, chi2_b + lam * chi2_j, float(lam),
                              op.residual(x), stat)


@dataclass(frozen=True, eq=False)
class ShapeState:
    """Everything computed for one surface; reused by the shape gradient."""

    surface: FourierSurface
    settings: SolverSettings
    mesh: SurfaceMesh
    op: NormalFieldOperator
    gram: CurrentGram
    result: InverseSolveResult

    @property
    def potential(self) -> CurrentPotential:
        s = self.settings
        return CurrentPotential.from_vector(self.result.phi_opt, s.pot_m_max, s.pot_n_max,
                                            s.i_pol, s.i_tor)

    @property
    def current(self) -> SurfaceCurrent:
        return push_forward(self.potential, self.mesh)


def solve_at(surface: FourierSurface, target: TargetSpec, settings: SolverSettings) -> ShapeState:
    mesh = eval_mesh(surface, settings.n_u, settings.n_v)
    op = assemble_normal_operator(mesh, target, settings.pot_m_max, settings.pot_n_max,
                                  settings.i_pol, settings.i_tor, settings.guard)
    gram = current_norm_gram(mesh, settings.pot_m_max, settings.pot_n_max,
                             settings.i_pol, settings.i_tor)
    return ShapeState(surface, settings, mesh, op, gram, solve_current(op, gram, settings.lam))


def eval_cost(surface: FourierSurface, target: TargetSpec,
              settings: SolverSettings) -> InverseSolveResult:
    """Mesh, assemble, solve: C(S) = chi2_B + lambda chi2_j at the optimal current."""
    return solve_at(surface, target, settings).result
