# # Recovering a known surface
#
# Generate a target from a known current on a known surface, then start the
# optimizer from a surface that is slightly too large. With almost no
# regularization, the only way to reproduce the field exactly is to return to
# the generating surface. The major radius R_0_0 is the only free coefficient.

import numpy as np

from cwsopt.biot_savart import TargetSpec, normal_field_of
from cwsopt.currents import CurrentPotential
from cwsopt.inverse import SolverSettings
from cwsopt.optimizer import BFGSSettings, run_bfgs
from cwsopt.shape_gradient import PenaltyConfig
from cwsopt.surfaces import FourierSurface, eval_mesh

truth = FourierSurface.torus(3.0, 1.0, m_max=1, n_max=1)
plasma = eval_mesh(FourierSurface.torus(3.0, 0.5), 32, 32)
pot = CurrentPotential({(1, 0): 2e5, (1, 1): -1e5, (2, 1): 5e4, (0, 1): 1e5}, 1e6, 0.0)
target = TargetSpec(plasma, normal_field_of(eval_mesh(truth, 32, 32), pot,
                                            TargetSpec.zero(plasma)))

start = truth.with_vector([3.05], [("R", 0, 0)])
settings = SolverSettings(32, 32, 4, 4, 1e6, 0.0, 1e-20)


def show(row, surface):
    print(f"iter {row['iteration']:3d}  C {row['total']:.6e}  R_0_0 {surface.get(('R', 0, 0)):.12f}")


res = run_bfgs(start, target, settings, PenaltyConfig.off(),
               BFGSSettings(max_iter=50, gtol=1e-12, max_step=0.02), [("R", 0, 0)],
               on_iterate=show)
print(res.status, res.message)
print(f"error in R_0_0: {abs(res.surface.get(('R', 0, 0)) - 3.0):.1e} m")

# The same machinery with the barriers switched on keeps the surface away from
# the plasma and limits its curvature. See 05_constrained.py.
