"""Inner solvers for the two Gauss-Seidel blocks.

``solve_l1nnls`` handles the linear block::

    min_z  ||w - A z||^2 + lam * sum(z) + eta * ||z||^2   s.t.  z >= 0

``solve_bcnls`` handles the quadrupolar block::

    min_psi  ||F(psi) - w||^2   s.t.  lower <= psi <= upper

with a projected Newton iteration whose Hessian is the damped Gauss-Newton
matrix ``J^T J + mu I``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .model import InvalidInputError, QuadBounds, QuadParams, eval_quad, quad_jacobian


@dataclass
class SolveDiagnostics:
    iterations: int = 0
    kkt_residual: float = np.inf
    objective_trace: list = field(default_factory=list)
    converged: bool = False


# --------------------------------------------------------------------------
# L1-regularized nonnegative least squares
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class L1nnlsProblem:
    a: np.ndarray
    w: np.ndarray
    lam: float
    eta: float = 0.0

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        w = np.atleast_1d(np.asarray(self.w, dtype=float))
        if a.shape[0] != w.size:
            raise InvalidInputError(f"matrix has {a.shape[0]} rows, rhs has {w.size}")
        if not (self.lam >= 0 and self.eta >= 0):
            raise InvalidInputError("lam and eta must be nonnegative")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "w", w)

    def objective(self, z):
        r = self.w - self.a @ z
        return float(r @ r + self.lam * np.sum(z) + self.eta * (z @ z))

    def gradient(self, z):
        return 2.0 * (self.a.T @ (self.a @ z - self.w)) + self.lam + 2.0 * self.eta * z


def l1nnls_kkt_residual(problem, z):
    """Largest violation of the optimality conditions at a feasible ``z``.

    Dual feasibility ``grad_i >= 0`` and complementarity
    ``|z_i grad_i| <= tol (1 + |z_i|)`` are measured on the same scale, so the
    returned number is directly comparable to the solver tolerance.
    """
    z = np.asarray(z, dtype=float)
    g = problem.gradient(z)
    dual = np.max(np.maximum(-g, 0.0), initial=0.0)
    comp = np.max(np.abs(z * g) / (1.0 + np.abs(z)), initial=0.0)
    return float(max(dual, comp))


def _passive_solve(a, w, lam, eta, passive):
    """Unconstrained minimizer restricted to the columns in ``passive``.

    Solves ``(A_P^T A_P + eta I) s = A_P^T w - lam/2`` through the SVD of
    ``A_P``; the right-hand side is formed in the singular basis so that
    rounding in ``A_P^T w`` is not amplified by ``1 / (sigma^2 + eta)``.
    """
    ap = a[:, passive]
    k = ap.shape[1]
    u, sig, vt = np.linalg.svd(ap, full_matrices=True)
    sig_full = np.zeros(k)
    sig_full[:sig.size] = sig
    rhs = -0.5 * lam * vt.sum(axis=1)
    rhs[:sig.size] += sig * (u[:, :sig.size].T @ w)
    denom = sig_full ** 2 + eta
    coef = np.zeros(k)
    nz = denom > 0
    coef[nz] = rhs[nz] / denom[nz]
    # eta == 0 with a rank-deficient A_P: take the minimum-norm solution
    return vt.T @ coef


def _active_set(problem, tol, max_iter, z0):
    a, w, lam, eta = problem.a, problem.w, problem.lam, problem.eta
    p = a.shape[1]
    z = np.zeros(p) if z0 is None else np.maximum(np.asarray(z0, dtype=float), 0.0)
    passive = z > 0
    trace = [problem.objective(z)]
    iterations = 0
    # exact method: add variables down to the rounding level of the gradient,
    # independently of the (looser) tolerance used for the converged flag
    scale = float(np.max(np.abs(a), initial=0.0)) * (
        float(np.max(np.abs(a), initial=0.0)) * float(np.sum(z)) + float(np.max(np.abs(w))))
    thr = min(tol, 1e3 * np.finfo(float).eps * max(scale, lam, 1e-300))
    if z0 is not None and l1nnls_kkt_residual(problem, z) <= thr:
        return z, iterations, trace

    def settle(z, passive):
        # Lawson-Hanson inner loop: move towards the passive-set minimizer
        # while keeping every passive variable strictly positive.
        nonlocal iterations
        while np.any(passive) and iterations < max_iter:
            iterations += 1
            idx = np.flatnonzero(passive)
            s = _passive_solve(a, w, lam, eta, idx)
            if np.all(s > 0):
                z = np.zeros(p)
                z[idx] = s
                return z, passive
            zi = z[idx]
            blocked = s <= 0
            alpha = np.min(zi[blocked] / (zi[blocked] - s[blocked]))
            znew = np.zeros(p)
            znew[idx] = zi + alpha * (s - zi)
            # the blocking variable leaves the passive set exactly at zero
            leaving = idx[blocked][np.argmin(zi[blocked] / (zi[blocked] - s[blocked]))]
            znew[leaving] = 0.0
            passive = znew > 0
            z = znew
        return z, passive

    if np.any(passive):
        z, passive = settle(z, passive)
        trace.append(problem.objective(z))

    rejected = np.zeros(p, dtype=bool)
    while iterations < max_iter:
        g = problem.gradient(z)
        candidates = (~passive) & (~rejected) & (g < -thr)
        if not np.any(candidates):
            break
        j = int(np.argmin(np.where(candidates, g, np.inf)))
        trial_passive = passive.copy()
        trial_passive[j] = True
        z_new, passive_new = settle(z, trial_passive)
        f_new = problem.objective(z_new)
        if not passive_new[j] or f_new > trace[-1]:
            # adding j gained nothing numerically; do not try it again until
            # the passive set changes
            rejected[j] = True
            if f_new > trace[-1]:
                continue
        else:
            rejected[:] = False
        z, passive = z_new, passive_new
        trace.append(f_new)
    return z, iterations, trace


def _interior_point(problem, tol, max_iter, z0):
    """Primal log-barrier method with truncated-CG Newton steps.

    The barrier weight starts at 1 and grows by 10 after each centering
    stage; the stage loop ends when the duality-gap surrogate ``p / t``
    drops below ``tol``.
    """
    a, w, lam, eta = problem.a, problem.w, problem.lam, problem.eta
    p = a.shape[1]
    z = np.full(p, 1e-6) if z0 is None else np.maximum(np.asarray(z0, dtype=float), 1e-6)
    ata_diag = np.einsum("ij,ij->j", a, a)
    t = 1.0
    trace = [problem.objective(z)]
    iterations = 0
    scale = max(1.0, float(np.max(np.abs(2.0 * a.T @ w))), lam)

    def phi(z, t):
        r = a @ z - w
        return t * (r @ r + lam * z.sum() + eta * (z @ z)) - np.sum(np.log(z))

    while iterations < max_iter:
        for _ in range(50):
            iterations += 1
            r = a @ z - w
            grad = t * (2.0 * (a.T @ r) + lam + 2.0 * eta * z) - 1.0 / z
            hdiag = t * (2.0 * ata_diag + 2.0 * eta) + 1.0 / z ** 2

            def hess(v):
                return t * (2.0 * (a.T @ (a @ v)) + 2.0 * eta * v) + v / z ** 2

            dz = _pcg(hess, -grad, hdiag, rtol=min(0.1, np.sqrt(tol)), maxiter=4 * p)
            dec = -grad @ dz
            if dec / 2.0 <= 1e-10 * max(1.0, t * scale):
                break
            neg = dz < 0
            step = 1.0 if not np.any(neg) else min(1.0, 0.99 * np.min(-z[neg] / dz[neg]))
            f0 = phi(z, t)
            while step > 1e-20 and phi(z + step * dz, t) > f0 + 0.01 * step * (grad @ dz):
                step *= 0.5
            z = z + step * dz
            if iterations >= max_iter:
                break
        trace.append(problem.objective(z))
        if p / t <= tol:
            break
        t *= 10.0
    return z, iterations, trace


def _pcg(matvec, b, diag, rtol, maxiter):
    x = np.zeros_like(b)
    r = b.copy()
    zr = r / diag
    d = zr.copy()
    rz = r @ zr
    bnorm = np.linalg.norm(b)
    for _ in range(maxiter):
        if np.linalg.norm(r) <= rtol * bnorm:
            break
        q = matvec(d)
        alpha = rz / (d @ q)
        x += alpha * d
        r -= alpha * q
        zr = r / diag
        rz_new = r @ zr
        d = zr + (rz_new / rz) * d
        rz = rz_new
    return x


def solve_l1nnls(problem, tol=1e-8, max_iter=500, z0=None, method="active_set"):
    """Minimize ``||w - A z||^2 + lam sum(z) + eta ||z||^2`` over ``z >= 0``.

    Parameters
    ----------
    problem : L1nnlsProblem
    tol : float
        Absolute tolerance on the optimality conditions.
    max_iter : int
        Iteration cap; hitting it returns the best iterate with
        ``converged=False``.
    z0 : array_like, optional
        Warm start. Negative entries are clipped.
    method : {"active_set", "interior_point"}
        ``"active_set"`` is an exact Lawson-Hanson type method and the
        default. ``"interior_point"`` is a log-barrier scheme with truncated
        conjugate-gradient Newton steps, cheaper per iteration but only
        accurate to the barrier tolerance.

    Returns
    -------
    z : ndarray
    diag : SolveDiagnostics
    """
    if tol <= 0:
        raise InvalidInputError("tol must be positive")
    if method == "active_set":
        z, iterations, trace = _active_set(problem, tol, max_iter, z0)
    elif method == "interior_point":
        z, iterations, trace = _interior_point(problem, tol, max_iter, z0)
    else:
        raise InvalidInputError(f"unknown method {method!r}")
    z = np.maximum(z, 0.0)
    kkt = l1nnls_kkt_residual(problem, z)
    return z, SolveDiagnostics(iterations, kkt, trace, kkt <= tol)


# --------------------------------------------------------------------------
# Bound-constrained nonlinear least squares
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BcnlsProblem:
    """``min ||model(psi) - w||^2`` over the box of ``bounds``.

    ``model`` and ``jacobian`` map a length-6 vector to the m model values
    and the m x 6 Jacobian.
    """

    model: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    w: np.ndarray
    bounds: QuadBounds
    psi0: np.ndarray

    def __post_init__(self):
        psi0 = self.psi0.as_vector() if isinstance(self.psi0, QuadParams) else \
            np.asarray(self.psi0, dtype=float)
        if not self.bounds.contains(psi0):
            raise InvalidInputError("starting point lies outside the bounds")
        object.__setattr__(self, "psi0", psi0)
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float))

    @classmethod
    def quadrupolar(cls, omega, w, bounds, psi0):
        omega = np.asarray(omega, dtype=float)
        return cls(lambda psi: eval_quad(psi, omega),
                   lambda psi: quad_jacobian(psi, omega), w, bounds, psi0)

    def objective(self, psi):
        r = self.model(psi) - self.w
        return float(r @ r)


def projected_gradient(bounds, psi, grad):
    """``P(psi - grad) - psi`` for the box of ``bounds``."""
    return bounds.project(psi - grad) - psi


def _free_variables(bounds, psi, grad):
    lo, hi = bounds.lower, bounds.upper
    at_lo = psi - lo <= 1e-12 * (1.0 + np.abs(lo))
    at_hi = hi - psi <= 1e-12 * (1.0 + np.abs(hi))
    # a variable sitting on a bound is frozen only if the gradient pushes it out
    return ~((at_lo & (grad > 0)) | (at_hi & (grad < 0)))


def lm_step(jac, res, free, mu):
    """Damped Gauss-Newton step on the free variables, zero elsewhere."""
    d = np.zeros(jac.shape[1])
    if np.any(free):
        jf = jac[:, free]
        h = jf.T @ jf + mu * np.eye(jf.shape[1])
        d[free] = np.linalg.solve(h, -(jf.T @ res))
    return d


def solve_bcnls(problem, tol=1e-8, max_iter=200, armijo=1e-4):
    """Projected Newton with Levenberg-Marquardt damping.

    Each iteration freezes variables that sit on a bound with an outward
    gradient, takes a damped Gauss-Newton step in the remaining ones and
    projects the result back onto the box. The step is accepted when it
    satisfies an Armijo condition along the projected path; the damping is
    divided by 10 on acceptance and multiplied by 10 on rejection.

    Returns
    -------
    psi : QuadParams
    diag : SolveDiagnostics
        ``kkt_residual`` is the norm of the projected gradient.
    """
    bounds = problem.bounds
    psi = problem.psi0.copy()
    try:
        res = problem.model(psi) - problem.w
        jac = problem.jacobian(psi)
    except (FloatingPointError, ValueError) as exc:
        raise InvalidInputError(f"model evaluation failed: {exc}") from exc
    if not (np.all(np.isfinite(res)) and np.all(np.isfinite(jac))):
        raise InvalidInputError("model or Jacobian is not finite at the start point")
    h = float(res @ res)
    grad = 2.0 * jac.T @ res
    mu = 1e-3 * np.trace(jac.T @ jac) / 6.0
    if not mu > 0:
        mu = 1e-3
    mu_max = 1e20 * max(1.0, mu)
    trace = [h]
    pg = float(np.linalg.norm(projected_gradient(bounds, psi, grad)))
    iterations = 0
    stalled = False
    while pg > tol and iterations < max_iter and h > 0:
        iterations += 1
        free = _free_variables(bounds, psi, grad)
        while True:
            d = lm_step(jac, res, free, mu)
            trial = bounds.project(psi + d)
            res_t = problem.model(trial) - problem.w
            h_t = float(res_t @ res_t)
            decrease = grad @ (trial - psi)
            if np.isfinite(h_t) and h_t <= h + armijo * decrease and h_t <= h:
                break
            mu *= 10.0
            if mu > mu_max:
                stalled = True
                break
        if stalled:
            break
        step_size = np.linalg.norm(trial - psi)
        psi, res, h = trial, res_t, h_t
        jac = problem.jacobian(psi)
        grad = 2.0 * jac.T @ res
        mu = max(mu * 0.1, 1e-300)
        trace.append(h)
        pg = float(np.linalg.norm(projected_gradient(bounds, psi, grad)))
        if step_size <= 1e-15 * (1.0 + np.linalg.norm(psi)):
            break
    return QuadParams.from_vector(psi), SolveDiagnostics(
        iterations, pg, trace, pg <= tol or h == 0.0)
