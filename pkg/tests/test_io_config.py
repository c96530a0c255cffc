import numpy as np
import pytest

from cwsopt import io
from cwsopt.config import RunConfig, load_config, parse_config, serialize_config
from cwsopt.currents import CurrentPotential, potential_modes
from cwsopt.errors import FormatError, MissingRequired, TypeMismatch, UnknownKey
from cwsopt.inverse import InverseSolveResult, SolverSettings
from cwsopt.optimizer import HISTORY_COLUMNS
from cwsopt.shape_gradient import ShapeGradient
from cwsopt.surfaces import FourierSurface, eval_mesh

REQ = "cws_file = a.txt\nplasma_file = b.txt\ni_pol = 1e6\n"


def random_surface(rng, nfp=3):
    r = {(0, 0): 3.0 + rng.random(), (1, 0): 1.0}
    z = {(1, 0): 1.0}
    for m in range(3):
        for n in range(-2, 3):
            if m == 0 and n <= 0:
                continue
            r[(m, n)] = r.get((m, n), 0.0) + 1e-2 * rng.standard_normal()
            z[(m, n)] = z.get((m, n), 0.0) + 1e-2 * rng.standard_normal()
    return FourierSurface(nfp, r, z, 2, 2)


def test_surface_roundtrip(rng, tmp_path):
    s = random_surface(rng)
    io.save_surface(tmp_path / "s.txt", s, "round trip")
    t = io.load_surface(tmp_path / "s.txt")
    assert (t.nfp, t.m_max, t.n_max) == (s.nfp, s.m_max, s.n_max)
    np.testing.assert_array_equal(t.vector(), s.vector())
    assert t.coefficient_ids() == s.coefficient_ids()


def test_surface_format_errors():
    with pytest.raises(FormatError, match="nfp"):
        io.parse_surface("0 0 3.0 0.0\n")
    with pytest.raises(FormatError, match="line 2"):
        io.parse_surface("nfp 1\n1 0 abc 1.0\n")
    with pytest.raises(FormatError, match="duplicate"):
        io.parse_surface("nfp 1\n1 0 1.0 1.0\n1 0 1.0 1.0\n")
    with pytest.raises(FormatError):
        io.parse_surface("nfp 1\n0 0 3.0 0.5\n")


def test_potential_roundtrip(rng, tmp_path):
    modes = potential_modes(4, 4)
    pot = CurrentPotential(dict(zip(modes, 1e5 * rng.standard_normal(len(modes)))), 1.3e6, -2e4)
    io.save_potential(tmp_path / "p.txt", pot)
    back = io.load_potential(tmp_path / "p.txt")
    assert back.phi_sin == pot.phi_sin
    assert (back.i_pol, back.i_tor) == (pot.i_pol, pot.i_tor)
    with pytest.raises(FormatError, match="ipol"):
        io.parse_potential("1 0 2.0\n")


def test_target_roundtrip(rng):
    bmn = {(1, 0): 2000.0 + rng.random(), (2, -1): rng.standard_normal(), (0, 1): 3.5}
    assert io.parse_target(io.format_target_bmn(bmn)) == {"format": "bmn", "bmn": bmn}
    vals = rng.standard_normal((5, 7))
    back = io.parse_target(io.format_target_grid(vals))
    assert back["format"] == "grid"
    np.testing.assert_array_equal(back["values"], vals)


def test_target_errors():
    with pytest.raises(FormatError, match="format"):
        io.parse_target("1 0 3.0\n")
    with pytest.raises(FormatError, match="cover"):
        io.parse_target("format grid\ngrid 2 2\n0 0 1.0\n")
    with pytest.raises(FormatError):
        io.parse_target("format bmn\n0 -1 1.0\n")


def test_result_roundtrip(rng):
    modes = potential_modes(2, 2)
    x = rng.standard_normal(len(modes))
    res = InverseSolveResult(x, 1.234e-3, 5.6e13, 1.234e-3 + 1e-16 * 5.6e13, 1e-16,
                             np.zeros(3), 1e-17)
    s = SolverSettings(32, 32, 2, 2, 1e6, 0.0, 1e-16)
    rec = io.parse_result(io.format_result(res, s, {"surface": "cws.txt"}))
    assert rec["chi2_b"] == res.chi2_b and rec["chi2_j"] == res.chi2_j
    assert rec["cost"] == res.cost and rec["lambda"] == res.lam
    assert rec["n_u"] == 32 and rec["pot_m_max"] == 2 and rec["surface"] == "cws.txt"
    assert rec["coefficients"] == dict(zip(modes, x))
    with pytest.raises(FormatError):
        io.parse_result("chi2_b = 1\n")


def test_gradient_roundtrip(rng):
    ids = [("R", 0, 0), ("Z", 1, -1)]
    g = ShapeGradient(ids, rng.standard_normal(2),
                      {"perimeter": rng.standard_normal(2), "distance": np.zeros(2),
                       "reach": rng.standard_normal(2)}, rng.standard_normal(2))
    back = io.parse_gradient(io.format_gradient(g))
    for k, cid in enumerate(ids):
        assert back[cid]["dC"] == g.dC[k] and back[cid]["total"] == g.dTotal[k]
        assert back[cid]["reach"] == g.dPenalties["reach"][k]


def test_history_roundtrip(rng, tmp_path):
    rows = []
    for k in range(4):
        row = {c: float(rng.standard_normal()) for c in HISTORY_COLUMNS}
        row["iteration"], row["n_eval"] = k, 3 * k + 1
        rows.append(row)
    with io.HistoryWriter(tmp_path / "h.csv", HISTORY_COLUMNS) as w:
        for row in rows:
            w.write(row)
    assert io.load_history(tmp_path / "h.csv") == rows
    assert io.parse_history(io.format_history(rows, HISTORY_COLUMNS)) == rows
    with pytest.raises(FormatError, match="history"):
        io.parse_history("iteration,total\n0,1.0\n")


def test_checkpoint(tmp_path, rng):
    s = random_surface(rng)
    io.save_checkpoint(tmp_path, 7, s, CurrentPotential({(1, 0): 1.0}, 2.0))
    back = io.load_surface(tmp_path / "ckpt_00007_cws.txt")
    np.testing.assert_array_equal(back.vector(), s.vector())
    assert io.load_potential(tmp_path / "ckpt_00007_phi.txt").i_pol == 2.0


def test_vmec_converter():
    s = io.surface_from_vmec_modes([0, 1, 1], [0, 0, 3], [3.0, 1.0, 0.1], [0.0, 1.0, 0.1], 3)
    assert s.r_cos[(1, -1)] == 0.1 and s.z_sin[(1, -1)] == 0.1
    eval_mesh(s, 16, 16)
    with pytest.raises(FormatError):
        io.surface_from_vmec_modes([1], [2], [1.0], [1.0], 3)


# --------------------------------------------------------------------- config

def test_config_defaults():
    cfg = parse_config(REQ)
    assert (cfg.n_u, cfg.n_v, cfg.potential_order, cfg.max_iter) == (64, 64, 12, 2000)
    assert cfg.lam == 2.5e-16 and cfg.i_tor == 0.0
    assert cfg.perimeter_max == 56.0 and cfg.distance_min == 0.2 and cfg.reach_min == 0.0769
    assert cfg.c1 == 1e-4 and cfg.c2 == 0.9 and cfg.max_ls == 25
    s = cfg.solver_settings()
    assert (s.n_u, s.pot_m_max, s.lam, s.i_pol) == (64, 12, 2.5e-16, 1e6)


def test_config_errors():
    with pytest.raises(TypeMismatch) as info:
        parse_config(REQ + "lambda = -1\n")
    assert info.value.key == "lambda"
    with pytest.raises(TypeMismatch, match="n_u"):
        parse_config(REQ + "n_u = sixty\n")
    with pytest.raises(UnknownKey) as info:
        parse_config(REQ + "colour = red\n")
    assert info.value.key == "colour"
    with pytest.raises(UnknownKey):
        parse_config(REQ + "lam = 1e-16\n")
    with pytest.raises(MissingRequired) as info:
        parse_config("cws_file = a.txt\ni_pol = 1\n")
    assert info.value.key == "plasma_file"
    with pytest.raises(TypeMismatch):
        parse_config(REQ + "c1 = 0.95\n")
    with pytest.raises(FormatError):
        parse_config(REQ + "this line has no separator\n")


def test_config_roundtrip(tmp_path):
    cfg = parse_config(REQ + "lambda = 5.1e-19\nn_u = 32\nfree_coefficients = R_0_0 Z_1_0\n"
                             "w_reach = 0  # comment\n")
    assert cfg.lam == 5.1e-19 and cfg.w_reach == 0.0
    again = parse_config(serialize_config(cfg))
    assert again == cfg
    (tmp_path / "c.cfg").write_text(serialize_config(cfg))
    assert load_config(tmp_path / "c.cfg") == cfg


def test_free_coefficients():
    s = FourierSurface(1, {(0, 0): 3.0, (1, 0): 1.0}, {(1, 0): 1.0}, 1, 1)
    cfg = parse_config(REQ + "free_coefficients = R_0_0, Z_1_-1\n")
    assert cfg.free_ids(s) == [("R", 0, 0), ("Z", 1, -1)]
    assert RunConfig(cws_file="a", plasma_file="b", i_pol=1.0).free_ids(s) == s.coefficient_ids()
    with pytest.raises(TypeMismatch):
        parse_config(REQ + "free_coefficients = R_4_0\n").free_ids(s)
    with pytest.raises(TypeMismatch):
        parse_config(REQ + "free_coefficients = R_x\n").free_ids(s)
