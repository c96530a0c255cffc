import sys
from pathlib import Path

import numpy as np
import pytest

from cwsopt import io
from cwsopt.biot_savart import TargetSpec
from cwsopt.inverse import SolverSettings
from cwsopt.surfaces import FourierSurface, eval_mesh

DATA = Path(__file__).resolve().parents[1] / "src" / "cwsopt" / "data"

# desk-scale discretization used by the gradient tests
GRID = 32
ORDER = 4


def torus(major, minor, nfp=1, **kw):
    return FourierSurface.torus(major, minor, nfp, **kw)


def load_pair(stem):
    cws = io.load_surface(DATA / f"{stem}_cws.txt")
    plasma = io.load_surface(DATA / f"{stem}_plasma.txt")
    tgt = io.load_target(DATA / f"{stem}_target.txt")
    pm = eval_mesh(plasma, GRID, GRID)
    return cws, TargetSpec.from_bmn(pm, tgt["bmn"])


@pytest.fixture(scope="session")
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def shaped_problem():
    cws, target = load_pair("shaped")
    return cws, target, SolverSettings(GRID, GRID, ORDER, ORDER, 1e6, 0.0, 1e-6)


@pytest.fixture(scope="session")
def axisym_problem():
    cws, target = load_pair("axisym")
    return cws, target, SolverSettings(GRID, GRID, ORDER, ORDER, 1e6, 0.0, 1e-6)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(mod.RESULTS):
            terminalreporter.write_line(mod.RESULTS[k])
