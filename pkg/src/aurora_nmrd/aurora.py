"""Two-block Gauss-Seidel fit at fixed lambda, and the automatic lambda loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .model import (
    C_HN_INITIAL,
    InvalidInputError,
    LinearBlock,
    NmrdProfile,
    QuadBounds,
    QuadParams,
    build_kernel,
    eval_quad,
    objective,
    quad_jacobian,
)
from .solvers import (
    BcnlsProblem,
    L1nnlsProblem,
    l1nnls_kkt_residual,
    projected_gradient,
    solve_bcnls,
    solve_l1nnls,
)

logger = logging.getLogger(__name__)


class DegenerateSolutionError(RuntimeError):
    """The linear block collapsed to zero, so the balancing ratio is undefined."""


@dataclass(frozen=True)
class SolverConfig:
    eta: float = 1e-10
    lambda0: float = 1e-6
    tol_lambda: float = 1e-2
    tol_gs: float = 1e-6
    gamma: float = 1.0
    max_outer: int = 30
    max_gs: int = 5000
    max_inner_l1: int = 500
    max_inner_bcnls: int = 200
    inner_tol: float = 1e-8
    l1_method: str = "active_set"
    anderson_depth: int = 0

    def __post_init__(self):
        if self.gamma != 1.0:
            raise InvalidInputError("only gamma = 1 is supported")
        if not (self.eta >= 0 and self.lambda0 > 0):
            raise InvalidInputError("need eta >= 0 and lambda0 > 0")
        for name in ("tol_lambda", "tol_gs", "inner_tol"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive")
        for name in ("max_outer", "max_gs", "max_inner_l1", "max_inner_bcnls"):
            if getattr(self, name) < 1:
                raise InvalidInputError(f"{name} must be at least 1")


@dataclass
class GsState:
    x1: LinearBlock
    psi: QuadParams
    g_value: float
    iteration: int
    converged: bool = False
    l1_kkt: float = np.nan
    bcnls_pg: float = np.nan


@dataclass
class GsTrace:
    """Objective after every half-step; ``half_steps[0]`` is the start value."""

    half_steps: list = field(default_factory=list)
    l1_iterations: list = field(default_factory=list)
    bcnls_iterations: list = field(default_factory=list)
    extrapolations: int = 0


@dataclass
class OuterHistory:
    lambdas: list = field(default_factory=list)
    objectives: list = field(default_factory=list)
    mse: list = field(default_factory=list)
    gs_iters: list = field(default_factory=list)


@dataclass
class FitResult:
    x1: LinearBlock
    psi: QuadParams
    lambda_star: float
    history: OuterHistory
    converged: bool
    fitted: np.ndarray
    mse: float
    outer_iterations: int
    message: str = ""
    l1_kkt: float = np.nan
    bcnls_pg: float = np.nan

    @property
    def report(self):
        """Physical parameters: angles in radians, peak frequencies in MHz."""
        p = self.psi
        return {
            "r0": self.x1.r0,
            "c_hn": p.c_hn,
            "theta": p.theta,
            "phi": p.phi,
            "tau_q": p.tau_q,
            "nu_minus": p.nu_minus,
            "nu_plus": p.nu_plus,
            "c_hn_tau_q": p.c_hn * p.tau_q,
        }


def _check_feasible(x1, psi, bounds):
    if np.any(~(x1 >= 0)):
        raise InvalidInputError("initial linear block must be nonnegative")
    if not bounds.contains(psi):
        raise InvalidInputError("initial quadrupolar parameters lie outside the bounds")


def gs_solve(y, kernel, bounds, x1_init, psi_init, lam, config=SolverConfig()):
    """Alternate exact block minimizations at fixed ``lam``.

    Stops when ``|g_k - g_{k-1}| <= tol_gs * |g_k|`` (absolute test when
    ``g_k == 0``) or after ``config.max_gs`` sweeps. A block update that
    would raise the objective is discarded, so the half-step trace never
    increases.

    Returns
    -------
    state : GsState
    trace : GsTrace
    """
    y = np.asarray(y, dtype=float)
    x1 = x1_init.as_vector() if isinstance(x1_init, LinearBlock) else \
        np.asarray(x1_init, dtype=float).copy()
    psi = psi_init.as_vector() if isinstance(psi_init, QuadParams) else \
        np.asarray(psi_init, dtype=float).copy()
    if lam < 0:
        raise InvalidInputError("lambda must be nonnegative")
    _check_feasible(x1, psi, bounds)
    if x1.size != kernel.k_ext.shape[1]:
        raise InvalidInputError("initial linear block does not match the kernel")

    k_ext, omega, eta = kernel.k_ext, kernel.omega, config.eta
    g = objective(x1, psi, y, kernel, lam, eta)
    trace = GsTrace(half_steps=[g])
    converged = False
    it = 0
    accel = _Anderson(y, kernel, bounds, lam, eta, config.anderson_depth) \
        if config.anderson_depth > 0 else None
    for it in range(1, config.max_gs + 1):
        g_prev = g
        start = (x1.copy(), psi.copy())

        lin = L1nnlsProblem(k_ext, y - eval_quad(psi, omega), lam, eta)
        z, d1 = solve_l1nnls(lin, config.inner_tol, config.max_inner_l1,
                             z0=x1, method=config.l1_method)
        g_half = objective(z, psi, y, kernel, lam, eta)
        if g_half <= g:
            x1, g = z, g_half
        trace.half_steps.append(g)
        trace.l1_iterations.append(d1.iterations)

        quad = BcnlsProblem.quadrupolar(omega, y - k_ext @ x1, bounds, psi)
        psi_new, d2 = solve_bcnls(quad, config.inner_tol, config.max_inner_bcnls)
        psi_new = psi_new.as_vector()
        g_new = objective(x1, psi_new, y, kernel, lam, eta)
        if g_new <= g:
            psi, g = psi_new, g_new
        trace.half_steps.append(g)
        trace.bcnls_iterations.append(d2.iterations)

        if abs(g - g_prev) <= config.tol_gs * (abs(g) if g != 0 else 1.0):
            converged = True
            break

        if accel is not None:
            x1, psi, g_acc = accel.step(start, (x1, psi), g)
            if g_acc < g:
                g = g_acc
                trace.half_steps.append(g)
                trace.extrapolations += 1

    # criticality of the returned pair with respect to each block
    l1_kkt = l1nnls_kkt_residual(
        L1nnlsProblem(k_ext, y - eval_quad(psi, omega), lam, eta), x1)
    quad = BcnlsProblem.quadrupolar(omega, y - k_ext @ x1, bounds, psi)
    grad = 2.0 * quad_jacobian(psi, omega).T @ (eval_quad(psi, omega) - quad.w)
    pg = float(np.linalg.norm(projected_gradient(bounds, psi, grad)))

    state = GsState(LinearBlock.from_vector(x1), QuadParams.from_vector(psi),
                    g, it, converged, l1_kkt, pg)
    return state, trace


class _Anderson:
    """Safeguarded Anderson mixing of the Gauss-Seidel sweep map.

    The sweep ``z -> G(z)`` on the stacked blocks is treated as a
    fixed-point map. The mixed candidate built from the last few sweeps is
    projected onto the feasible set and used only when its objective is
    below that of the plain sweep result, so every accepted point is a
    descent step.
    """

    def __init__(self, y, kernel, bounds, lam, eta, depth):
        self.y, self.kernel, self.bounds = y, kernel, bounds
        self.lam, self.eta, self.depth = lam, eta, depth
        self.inputs = []
        self.outputs = []

    def step(self, before, after, g_after):
        n1 = after[0].size
        z_in = np.concatenate(before)
        z_out = np.concatenate(after)
        self.inputs.append(z_in)
        self.outputs.append(z_out)
        if len(self.inputs) > self.depth + 1:
            self.inputs.pop(0)
            self.outputs.pop(0)
        if len(self.inputs) < 2:
            return after[0], after[1], g_after
        gz = np.array(self.outputs)
        res = gz - np.array(self.inputs)
        # min || sum a_i res_i ||, sum a_i = 1, via differences of residuals
        dres = np.diff(res, axis=0)
        gamma, *_ = np.linalg.lstsq(dres.T, res[-1], rcond=None)
        cand = gz[-1] - np.diff(gz, axis=0).T @ gamma
        x_c = np.maximum(cand[:n1], 0.0)
        psi_c = self.bounds.project(cand[n1:])
        g_c = objective(x_c, psi_c, self.y, self.kernel, self.lam, self.eta)
        if np.isfinite(g_c) and g_c < g_after:
            return x_c, psi_c, g_c
        # restart the history when mixing fails
        self.inputs = self.inputs[-1:]
        self.outputs = self.outputs[-1:]
        return after[0], after[1], g_after


def bp_update(y, kernel, x1, psi, eta):
    """Balancing-principle value of lambda for the current blocks.

    ``(||y - K_e x1 - F2(psi)||^2 + eta ||x1||^2) / ||x1||_1``
    """
    x = x1.as_vector() if isinstance(x1, LinearBlock) else np.asarray(x1, dtype=float)
    l1 = float(np.sum(np.abs(x)))
    if l1 == 0.0:
        raise DegenerateSolutionError(
            "linear block is identically zero; balancing parameter undefined")
    r = np.asarray(y, dtype=float) - kernel.k_ext @ x - eval_quad(psi, kernel.omega)
    return float((r @ r + eta * (x @ x)) / l1)


def init_quad_params(bounds):
    """Default starting point for the quadrupolar block.

    Angles start at the middle of their range, ``tau_q`` at 1 microsecond and
    the peak positions a quarter of the window in from each edge.
    """
    width = abs(bounds.omega_hi - bounds.omega_lo)
    return QuadParams(
        c_hn=min(C_HN_INITIAL, bounds.c_bar),
        sin2_theta=0.5,
        sin2_phi=0.5,
        tau_q=min(1.0, bounds.tau_bar),
        omega_minus=bounds.omega_lo + 0.25 * width,
        omega_plus=bounds.omega_hi - 0.25 * width,
    )


def canonical_order(psi):
    """Relabel the peaks so that ``omega_minus <= omega_plus``.

    Swapping the two peak positions together with ``sin2_phi -> 1 - sin2_phi``
    leaves the quadrupolar term unchanged.
    """
    if psi.omega_minus <= psi.omega_plus:
        return psi
    return replace(psi, sin2_phi=1.0 - psi.sin2_phi,
                   omega_minus=psi.omega_plus, omega_plus=psi.omega_minus)


def aurora_solve(profile, grid, bounds, config=SolverConfig(), x1_init=None,
                 psi_init=None, kernel=None):
    """Fit offset, correlation-time distribution, quadrupolar parameters and lambda.

    Each outer step runs :func:`gs_solve` warm-started from the previous
    blocks, then replaces lambda by its balancing value. The loop ends when
    ``|lambda_new - lambda| <= tol_lambda * lambda``. The reported
    ``lambda_star`` is the value the returned blocks were computed with.

    Parameters
    ----------
    profile : NmrdProfile
    grid : CorrelationGrid
    bounds : QuadBounds
    config : SolverConfig
    x1_init, psi_init : optional
        Starting blocks; default to zeros and :func:`init_quad_params`.
    kernel : Kernel, optional
        Prebuilt kernel for ``grid`` and ``profile.omega``.

    Returns
    -------
    FitResult
    """
    if kernel is None:
        kernel = build_kernel(grid, profile.omega)
    y = profile.rates
    x1 = np.zeros(kernel.k_ext.shape[1]) if x1_init is None else (
        x1_init.as_vector() if isinstance(x1_init, LinearBlock) else np.asarray(x1_init, float))
    psi = init_quad_params(bounds) if psi_init is None else psi_init
    psi = psi if isinstance(psi, QuadParams) else QuadParams.from_vector(psi)
    _check_feasible(x1, psi.as_vector(), bounds)

    lam = float(config.lambda0)
    history = OuterHistory(lambdas=[lam])
    converged = False
    message = ""
    state = None
    for k in range(1, config.max_outer + 1):
        state, trace = gs_solve(y, kernel, bounds, x1, psi, lam, config)
        x1, psi = state.x1.as_vector(), state.psi
        fitted = kernel.k_ext @ x1 + eval_quad(psi, kernel.omega)
        history.objectives.append(state.g_value)
        history.mse.append(float(np.mean((y - fitted) ** 2)))
        history.gs_iters.append(state.iteration)
        try:
            lam_new = bp_update(y, kernel, x1, psi, config.eta)
        except DegenerateSolutionError as exc:
            message = str(exc)
            logger.warning("outer iteration %d: %s", k, exc)
            break
        history.lambdas.append(lam_new)
        logger.debug("outer %d: lambda %.6e -> %.6e, g = %.6e, gs iterations %d",
                     k, lam, lam_new, state.g_value, state.iteration)
        if abs(lam_new - lam) <= config.tol_lambda * abs(lam):
            converged = True
            break
        lam = lam_new
    else:
        message = f"lambda did not settle within {config.max_outer} outer iterations"

    psi = canonical_order(state.psi)
    fitted = kernel.k_ext @ x1 + eval_quad(psi, kernel.omega)
    return FitResult(
        x1=LinearBlock.from_vector(x1),
        psi=psi,
        lambda_star=lam,
        history=history,
        converged=converged,
        fitted=fitted,
        mse=float(np.mean((y - fitted) ** 2)),
        outer_iterations=len(history.objectives),
        message=message,
        l1_kkt=state.l1_kkt,
        bcnls_pg=state.bcnls_pg,
    )
