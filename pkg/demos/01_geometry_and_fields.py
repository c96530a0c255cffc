# # Surfaces, currents and the Biot-Savart field
#
# A winding surface is a truncated Fourier series in (u, v). Here we build the
# simplest one, a circular torus, and check two things that can be worked out by
# hand: its area, and the field of a purely poloidal sheet current inside it.

import numpy as np

from cwsopt.biot_savart import bs_field
from cwsopt.currents import CurrentPotential, flux_check, push_forward
from cwsopt.surfaces import FourierSurface, area, eval_mesh, geometry_report

major, minor = 5.0, 1.0
surface = FourierSurface.torus(major, minor)
mesh = eval_mesh(surface, 64, 64)

print(f"area          {area(mesh):.10f}")
print(f"4 pi^2 R r    {4 * np.pi ** 2 * major * minor:.10f}")

# The reach of a torus is min(r, R - r). It is the largest ball radius that can
# roll along both faces of the surface.
rep = geometry_report(mesh)
print(f"reach         {rep.reach_estimate:.6f}  (curvature {rep.curvature_radius:.6f}, "
      f"bottleneck {rep.bottleneck:.6f})")

# A potential with no single-valued part and only the poloidal net current
# I_p gives a current that flows poloidally around the tube. Every u = const
# line carries I_p.
i_pol = 1e6
current = push_forward(CurrentPotential({}, i_pol, 0.0), mesh)
flux = flux_check(current)
print(f"flux spread   {np.ptp(flux.poloidal_lines):.2e} around I_p = {i_pol:g}")

# Inside the tube this is a toroidal solenoid. With the normalization used here
# (no mu0 / 4 pi prefactor) the field on the magnetic axis is 2 I_p / R, and
# outside it vanishes.
b_axis = bs_field(mesh, current, [[major, 0.0, 0.0]])[0]
b_out = bs_field(mesh, current, [[2.5 * major, 0.0, 0.0]])[0]
print(f"|B| on axis   {np.linalg.norm(b_axis):.6e}  expected {2 * i_pol / major:.6e}")
print(f"|B| outside   {np.linalg.norm(b_out):.2e}")
