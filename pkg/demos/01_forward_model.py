"""
The forward model
=================

A relaxation profile is the sum of three parts: a dipolar part driven by a
distribution of correlation times, a constant offset, and the quadrupolar
peaks. This script builds each part on the default synthetic scenario and
prints where the peaks show up.
"""

import numpy as np

from aurora_nmrd import CorrelationGrid, build_kernel, default_scenario, eval_quad

# Correlation times live on a log grid in microseconds; frequencies are
# angular (Mrad/s), so omega * tau is dimensionless.
grid = CorrelationGrid.logspace(1e-3, 1e3, 200)
nu = np.geomspace(0.01, 40, 48)          # Larmor frequencies, MHz
omega = 2 * np.pi * nu
kernel = build_kernel(grid, omega)
print("kernel shape (m, n):", kernel.shape)

# Each column of the kernel is a single-tau dispersion: flat below
# 1/tau and falling like 1/omega^2 above it.
j = np.searchsorted(grid.tau, 1.0)
print("column for tau = %.3g us at nu = 0.01, 1, 40 MHz:" % grid.tau[j],
      kernel.k[[0, 24, 47], j].round(4))

# The reference scenario: two log-normal bumps at 0.1 and 10 us, an offset
# of 3.69 1/s and fixed reference quadrupolar parameters.
scenario = default_scenario(grid, omega)
ref = scenario.reference_values
dipolar = kernel.k @ ref["f"]
quad = eval_quad(scenario.psi_ref, omega)
total = dipolar + ref["r0"] + quad

print("\n  nu [MHz]   dipolar     quad      total")
for i in range(0, 48, 4):
    print(f"{nu[i]:9.3f} {dipolar[i]:9.3f} {quad[i]:9.4f} {total[i]:9.3f}")

# The peaks are easier to see on a fine grid through the quadrupole window.
fine = np.linspace(1.5, 3.5, 401)
q = eval_quad(scenario.psi_ref, 2 * np.pi * fine)
peaks = np.where((q[1:-1] > q[:-2]) & (q[1:-1] > q[2:]))[0] + 1
print("\nquadrupolar maxima at", fine[peaks], "MHz",
      "(reference %.2f and %.2f)" % (ref["nu_minus"], ref["nu_plus"]))
