# # Checking the shape gradient
#
# The derivative of C with respect to the surface coefficients comes from the
# adjoint fields, contracted against the mode shapes. No derivative of the
# inner solve is needed, because the potential is stationary. Here we compare
# it against central differences, coefficient by coefficient.

from pathlib import Path

import numpy as np

import cwsopt
from cwsopt import io
from cwsopt.biot_savart import TargetSpec
from cwsopt.inverse import SolverSettings
from cwsopt.shape_gradient import (PenaltyConfig, evaluate, fd_coefficient_gradient,
                                   relative_errors)
from cwsopt.surfaces import eval_mesh

DATA = Path(cwsopt.__file__).parent / "data"

cws = io.load_surface(DATA / "shaped_cws.txt")
plasma = io.load_surface(DATA / "shaped_plasma.txt")
target = TargetSpec.from_bmn(eval_mesh(plasma, 32, 32),
                             io.load_target(DATA / "shaped_target.txt")["bmn"])
settings = SolverSettings(32, 32, 4, 4, 1e6, 0.0, 1e-6)
cfg = PenaltyConfig.off()

ids = [("R", 0, 0), ("R", 1, 0), ("Z", 1, 0), ("R", 1, 1), ("Z", 2, -1)]
ev = evaluate(cws, target, settings, cfg, ids)
fd = fd_coefficient_gradient(cws, target, settings, cfg, step=1e-6, ids=ids)
err = relative_errors(ev.gradient.dTotal, fd)

print(f"C = {ev.total:.6e}")
print(f"{'coefficient':>12} {'adjoint':>14} {'finite diff':>14} {'rel err':>9}")
for cid, a, f, e in zip(ids, ev.gradient.dTotal, fd, err):
    print(f"{'%s_%d_%d' % cid:>12} {a:14.6e} {f:14.6e} {e:9.1e}")
print(f"worst relative error {np.max(err):.1e}")
