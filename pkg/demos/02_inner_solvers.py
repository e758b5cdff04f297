"""
The two inner solvers
=====================

With the quadrupolar parameters frozen, the distribution and offset solve a
nonnegative least-squares problem with an L1 penalty. With the linear part
frozen, the six quadrupolar parameters solve a box-constrained nonlinear
least-squares problem. Both are shown here on the reference scenario.
"""

import numpy as np

from aurora_nmrd import (
    BcnlsProblem,
    L1nnlsProblem,
    default_bounds,
    default_scenario,
    build_kernel,
    eval_quad,
    init_quad_params,
    solve_bcnls,
    solve_l1nnls,
    synthesize_profile,
)
from aurora_nmrd.solvers import l1nnls_kkt_residual

scenario = default_scenario()
profile = synthesize_profile(scenario)
kernel = build_kernel(scenario.grid, profile.omega)
bounds = default_bounds()
y = profile.rates

# Linear block with the true peaks removed from the data. Larger penalties
# give sparser, smaller solutions.
w = y - eval_quad(scenario.psi_ref, profile.omega)
print(" lambda      ||x||_1   nonzeros  KKT residual  active-set iterations")
for lam in (1e-9, 1e-6, 1e-3, 1e-1):
    prob = L1nnlsProblem(kernel.k_ext, w, lam, eta=1e-10)
    x, diag = solve_l1nnls(prob)
    print(f"{lam:8.0e} {x.sum():11.4f} {np.count_nonzero(x):8d} "
          f"{l1nnls_kkt_residual(prob, x):12.2e} {diag.iterations:8d}")

# The log-barrier method is available too; it agrees on the objective but
# reaches the corner of the feasible set only asymptotically.
prob = L1nnlsProblem(kernel.k_ext, w, 1e-3, eta=1e-10)
x_as, _ = solve_l1nnls(prob)
x_ip, d_ip = solve_l1nnls(prob, method="interior_point")
print("\nobjective active set %.10f, interior point %.10f (%d Newton steps)"
      % (prob.objective(x_as), prob.objective(x_ip), d_ip.iterations))

# Quadrupolar block with the true linear part removed, started from the
# default initial guess in the middle of the window.
w = y - kernel.k_ext @ scenario.x1_ref.as_vector()
start = init_quad_params(bounds)
psi, diag = solve_bcnls(BcnlsProblem.quadrupolar(profile.omega, w, bounds, start))
print("\nquadrupolar fit after %d iterations (projected gradient %.1e)"
      % (diag.iterations, diag.kkt_residual))
for name in ("c_hn", "theta", "phi", "tau_q", "nu_minus", "nu_plus"):
    print(f"  {name:9s} start {getattr(start, name):8.4f}  fit {getattr(psi, name):8.4f}"
          f"  true {getattr(scenario.psi_ref, name):8.4f}")
