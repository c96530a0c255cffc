import numpy as np
import pytest

from cwsopt.biot_savart import TargetSpec, assemble_normal_operator, bs_field
from cwsopt.currents import CurrentPotential, current_norm_gram, potential_modes, push_forward
from cwsopt.errors import IllConditioned
from cwsopt.inverse import SolverSettings, eval_cost, normal_equations, solve_at, solve_current
from cwsopt.surfaces import FourierSurface, eval_mesh

from conftest import torus

CWS = FourierSurface(3, {(0, 0): 3.0, (1, 0): 1.0, (1, 1): 0.1}, {(1, 0): 1.0, (1, 1): 0.1})
PLASMA = FourierSurface(3, {(0, 0): 3.0, (1, 0): 0.45, (1, 1): 0.08},
                        {(1, 0): 0.55, (1, 1): 0.08})
ORDER = 3


@pytest.fixture(scope="module")
def problem():
    mesh = eval_mesh(CWS, 24, 24)
    pm = eval_mesh(PLASMA, 16, 16)
    target = TargetSpec.from_bmn(pm, {(1, 0): 2000.0, (1, 1): 1000.0, (2, -1): 300.0})
    op = assemble_normal_operator(mesh, target, ORDER, ORDER, 1e6, 0.0)
    gram = current_norm_gram(mesh, ORDER, ORDER, 1e6, 0.0)
    return mesh, target, op, gram


def test_cost_identity_and_signs(problem):
    _, _, op, gram = problem
    for lam in (1e-10, 1e-6, 1e-2):
        res = solve_current(op, gram, lam)
        assert res.cost == pytest.approx(res.chi2_b + lam * res.chi2_j, rel=1e-12)
        assert res.chi2_b >= 0 and res.chi2_j >= 0
        assert res.stationarity <= 1e-10


def test_first_order_optimality(problem, rng):
    _, _, op, gram = problem
    lam = 1e-6
    res = solve_current(op, gram, lam)
    x = res.phi_opt
    w = op.weights
    r = op.A @ x + op.a0 - op.g
    for _ in range(10):
        v = rng.standard_normal(len(x))
        av = op.A @ v
        val = np.sum(w * av * r) + lam * (v @ gram.M @ x + v @ gram.m0)
        scale = (np.sqrt(np.sum(w * av ** 2) * np.sum(w * r ** 2))
                 + lam * np.sqrt(v @ gram.M @ v) * np.sqrt(gram.norm2(x)))
        assert abs(val) <= 1e-9 * scale


def test_tikhonov_monotone(problem):
    _, _, op, gram = problem
    lams = np.logspace(-10, -4, 7)
    res = [solve_current(op, gram, lam) for lam in lams]
    b = [r.chi2_b for r in res]
    j = [r.chi2_j for r in res]
    assert all(b1 <= b2 * (1 + 1e-12) for b1, b2 in zip(b, b[1:]))
    assert all(j1 >= j2 * (1 - 1e-12) for j1, j2 in zip(j, j[1:]))


def test_consistent_system(problem, rng):
    _, target, op, gram = problem
    x_star = 1e4 * rng.standard_normal(op.A.shape[1])
    g = op.A @ x_star + op.a0
    tgt = TargetSpec(target.plasma_mesh, g.reshape(target.plasma_mesh.shape))
    op2 = type(op)(op.A, op.a0, tgt, op.m_max, op.n_max, op.i_pol, op.i_tor)
    H, _ = normal_equations(op2, gram, 0.0)
    lam = 1e-30 * np.linalg.norm(H, 2)
    res = solve_current(op2, gram, lam)
    assert res.chi2_b <= 1e-16 * np.sum(op2.weights * g ** 2)


def test_large_lambda_limit(problem):
    _, target, op, gram = problem
    tgt = TargetSpec(target.plasma_mesh, op.a0.reshape(target.plasma_mesh.shape))
    op2 = type(op)(op.A, op.a0, tgt, op.m_max, op.n_max, op.i_pol, op.i_tor)
    H, _ = normal_equations(op2, gram, 0.0)
    lam = 1e6 * np.linalg.norm(H, 2)
    x = solve_current(op2, gram, lam).phi_opt
    x_inf = -np.linalg.solve(gram.M, gram.m0)
    assert np.linalg.norm(x - x_inf) <= 1e-5 * max(np.linalg.norm(x_inf), 1.0)


def test_lambda_must_be_positive(problem):
    _, _, op, gram = problem
    with pytest.raises(ValueError):
        solve_current(op, gram, 0.0)


def test_ill_conditioned(problem):
    _, _, op, gram = problem
    # two identical columns and negligible regularization
    A = op.A.copy()
    A[:, 1] = A[:, 0]
    op2 = type(op)(A, op.a0, op.target, op.m_max, op.n_max, op.i_pol, op.i_tor)
    with pytest.raises(IllConditioned):
        solve_current(op2, gram, 1e-300)


def test_deterministic(problem):
    _, target, _, _ = problem
    s = SolverSettings(24, 24, ORDER, ORDER, 1e6, 0.0, 1e-6)
    a, b = eval_cost(CWS, target, s), eval_cost(CWS, target, s)
    assert a.cost == b.cost and a.chi2_b == b.chi2_b
    np.testing.assert_array_equal(a.phi_opt, b.phi_opt)


def test_axisymmetric_toroidal_target():
    cws, plasma = torus(3, 1), torus(3, 0.5)
    pm = eval_mesh(plasma, 32, 32)
    # the toroidal field of the I_p current alone is the target: its normal part
    mesh = eval_mesh(cws, 32, 32)
    b = bs_field(mesh, push_forward(CurrentPotential({}, 1e6), mesh), pm.points)
    g = np.sum(b * pm.normal, -1)
    target = TargetSpec(pm, g)
    state = solve_at(cws, target, SolverSettings(32, 32, 4, 4, 1e6, 0.0, 1e-10))
    tnorm = np.linalg.norm(b, axis=-1)
    tnorm2 = float(np.sum(pm.weights * tnorm ** 2))
    assert state.result.chi2_b <= 1e-10 * tnorm2
    pot = state.potential
    assert max(abs(c) for c in pot.phi_sin.values()) <= 1e-6 * 1e6


def test_potential_from_state(problem):
    mesh, target, _, _ = problem
    state = solve_at(CWS, target, SolverSettings(24, 24, ORDER, ORDER, 1e6, 0.0, 1e-6))
    modes = potential_modes(ORDER, ORDER)
    assert list(state.potential.phi_sin) == modes
    assert state.current.vectors.shape == mesh.points.shape
