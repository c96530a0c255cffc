# # The regularized inner problem
#
# For a fixed winding surface, the current potential minimizes
#
#     C = chi2_B + lambda * chi2_j
#
# where chi2_B is the squared normal-field error on the plasma boundary and
# chi2_j is the squared L2 norm of the surface current. Sweeping lambda traces
# the usual Tikhonov trade-off curve.

from pathlib import Path

import numpy as np

import cwsopt
from cwsopt import io
from cwsopt.biot_savart import TargetSpec
from cwsopt.inverse import SolverSettings, solve_at, solve_current
from cwsopt.surfaces import eval_mesh

DATA = Path(cwsopt.__file__).parent / "data"

cws = io.load_surface(DATA / "shaped_cws.txt")
plasma = io.load_surface(DATA / "shaped_plasma.txt")
bmn = io.load_target(DATA / "shaped_target.txt")["bmn"]
target = TargetSpec.from_bmn(eval_mesh(plasma, 32, 32), bmn)

state = solve_at(cws, target, SolverSettings(32, 32, 6, 6, 1e6, 0.0, 1e-6))
print(f"unknowns {state.op.A.shape[1]}, plasma points {state.op.A.shape[0]}")

print(f"{'lambda':>10} {'chi2_B':>12} {'chi2_j':>12} {'C':>12}")
for lam in np.logspace(-7, -2, 6):
    res = solve_current(state.op, state.gram, lam)
    print(f"{lam:10.1e} {res.chi2_b:12.4e} {res.chi2_j:12.4e} {res.cost:12.4e}")

# chi2_B grows and chi2_j shrinks as lambda increases. In the large-lambda
# limit, only the fixed net currents remain, and the potential tends to the
# minimum-norm current with those net currents.
