"""
Insensitivity to the starting regularization weight
===================================================

Starting values of the L1 weight spread over sixteen decades lead to the
same balanced value, usually within a handful of outer steps.
"""

from aurora_nmrd import (
    SolverConfig,
    aurora_solve,
    build_kernel,
    default_bounds,
    default_scenario,
    synthesize_profile,
)

scenario = default_scenario()
profile = synthesize_profile(scenario)
kernel = build_kernel(scenario.grid, profile.omega)
bounds = default_bounds()

print("lambda0     lambda*       outer  trace")
for lam0 in (1e-16, 1e-6, 1e-4, 1e-2, 1.0):
    fit = aurora_solve(profile, scenario.grid, bounds, SolverConfig(lambda0=lam0), kernel=kernel)
    trace = " -> ".join(f"{v:.2e}" for v in fit.history.lambdas)
    print(f"{lam0:8.0e} {fit.lambda_star:12.4e} {fit.outer_iterations:6d}  {trace}")
