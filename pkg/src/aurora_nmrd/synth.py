"""Synthetic profiles, multiplicative noise, error metrics and the Monte-Carlo harness."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .aurora import SolverConfig, aurora_solve
from .model import (
    CorrelationGrid,
    InvalidInputError,
    LinearBlock,
    NmrdProfile,
    QuadBounds,
    QuadParams,
    build_kernel,
    evaluate_model,
)

logger = logging.getLogger(__name__)

#: Reference quadrupolar parameters of the default scenario.
REFERENCE_PHYSICAL = {
    "r0": 3.69,
    "c_hn": 18.84,
    "tau_q": 0.96,
    "theta": 1.09,
    "phi": 0.57,
    "nu_minus": 2.15,
    "nu_plus": 2.87,
}

#: Quadrupole window used with the default scenario (MHz).
DEFAULT_WINDOW_MHZ = (1.5, 3.5)


def mse(y, yhat):
    """Mean squared difference ``||y - yhat||^2 / m``."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise InvalidInputError(f"length mismatch: {y.shape} vs {yhat.shape}")
    d = y - yhat
    return float(np.sum(d * d) / d.size)


def pre(x_exact, x_computed):
    """Squared relative error ``||x_e - x_c||^2 / ||x_e||^2``."""
    xe = np.atleast_1d(np.asarray(x_exact, dtype=float))
    xc = np.atleast_1d(np.asarray(x_computed, dtype=float))
    if xe.shape != xc.shape:
        raise InvalidInputError(f"length mismatch: {xe.shape} vs {xc.shape}")
    denom = float(xe @ xe)
    if denom == 0.0:
        raise InvalidInputError("relative error undefined for a zero reference")
    d = xe - xc
    return float(d @ d) / denom


@dataclass(frozen=True)
class ReferenceScenario:
    x1_ref: LinearBlock
    psi_ref: QuadParams
    grid: CorrelationGrid
    omega: np.ndarray

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        if self.x1_ref.f.size != self.grid.n:
            raise InvalidInputError("reference distribution does not match the grid")
        NmrdProfile(omega, np.zeros_like(omega))  # frequency checks
        object.__setattr__(self, "omega", omega)

    @property
    def reference_values(self):
        """Reference parameters under the names used in reports."""
        p = self.psi_ref
        return {
            "f": self.x1_ref.f,
            "r0": self.x1_ref.r0,
            "c_hn": p.c_hn,
            "theta": p.theta,
            "phi": p.phi,
            "tau_q": p.tau_q,
            "nu_minus": p.nu_minus,
            "nu_plus": p.nu_plus,
            "c_hn_tau_q": p.c_hn * p.tau_q,
        }


def default_frequencies(m=48, nu_min=0.01, nu_max=40.0):
    """``m`` Larmor frequencies log-spaced on ``[nu_min, nu_max]`` MHz, as omega."""
    return 2.0 * np.pi * np.geomspace(nu_min, nu_max, m)


def bimodal_distribution(grid, centers=(0.1, 10.0), log_sigma=0.15):
    """Sum of unit-height Gaussian bumps in log10(tau)."""
    logt = np.log10(grid.tau)
    f = np.zeros(grid.n)
    for c in centers:
        f += np.exp(-0.5 * ((logt - np.log10(c)) / log_sigma) ** 2)
    return f


def default_scenario(grid=None, omega=None, peak_rate=20.0):
    """Reference scenario with fixed quadrupolar parameters.

    The distribution is :func:`bimodal_distribution` scaled so that the
    dipolar part of the profile peaks at ``peak_rate`` (1/s).
    """
    grid = CorrelationGrid.logspace() if grid is None else grid
    omega = default_frequencies() if omega is None else np.asarray(omega, dtype=float)
    shape = bimodal_distribution(grid)
    k = build_kernel(grid, omega).k
    f = shape * (peak_rate / np.max(k @ shape))
    ref = REFERENCE_PHYSICAL
    psi = QuadParams.from_physical(ref["c_hn"], ref["theta"], ref["phi"], ref["tau_q"],
                                   ref["nu_minus"], ref["nu_plus"])
    return ReferenceScenario(LinearBlock(f, ref["r0"]), psi, grid, omega)


def default_bounds(c_bar=100.0, tau_bar=100.0):
    return QuadBounds.from_mhz(*DEFAULT_WINDOW_MHZ, c_bar=c_bar, tau_bar=tau_bar)


def synthesize_profile(scenario):
    """Noise-free profile of the scenario."""
    kernel = build_kernel(scenario.grid, scenario.omega)
    rates = evaluate_model(scenario.x1_ref, scenario.psi_ref, kernel)
    return NmrdProfile(scenario.omega, rates)


@dataclass(frozen=True)
class NoiseSpec:
    delta: float = 0.01
    seed: int = 0
    replicates: int = 100

    def __post_init__(self):
        if not self.delta >= 0:
            raise InvalidInputError("noise level must be nonnegative")
        if self.replicates < 1:
            raise InvalidInputError("need at least one replicate")
        if not 0 <= self.seed < 2 ** 64:
            raise InvalidInputError("seed must fit in 64 unsigned bits")


def noise_vector(spec, replicate_index, m):
    """The uniform ``[-1, 1]`` draws used for one replicate."""
    rng = np.random.default_rng([int(spec.seed), int(replicate_index)])
    return rng.uniform(-1.0, 1.0, size=m)


def add_noise(profile, spec, replicate_index, v=None):
    """Multiply each rate by ``1 + delta * v_i``.

    ``v`` overrides the random draws (for tests); by default it comes from
    a generator seeded with ``(spec.seed, replicate_index)``.
    """
    if v is None:
        v = noise_vector(spec, replicate_index, profile.m)
    else:
        v = np.broadcast_to(np.asarray(v, dtype=float), profile.rates.shape)
    if spec.delta == 0:
        return profile
    rates = profile.rates * (1.0 + spec.delta * v)
    return NmrdProfile(profile.omega, rates, profile.conf_halfwidth)


PARAMETERS = ("f", "r0", "c_hn", "theta", "phi", "tau_q", "nu_minus", "nu_plus", "c_hn_tau_q")


@dataclass
class ReplicateRecord:
    index: int
    converged: bool
    values: dict
    pre: dict
    mse: float
    fitted: np.ndarray
    lambda_star: float
    outer_iterations: int


@dataclass
class McReport:
    delta: float
    replicates: int
    n_failed: int
    mean_pre: dict
    mean_values: dict
    mean_mse: float
    mean_curve: np.ndarray
    clean_curve: np.ndarray
    omega: np.ndarray
    records: list = field(repr=False, default_factory=list)


def fit_replicate(scenario, clean, spec, index, bounds, config, kernel=None):
    """Noise one copy of ``clean``, refit it and score it against the scenario."""
    noisy = add_noise(clean, spec, index)
    fit = aurora_solve(noisy, scenario.grid, bounds, config, kernel=kernel)
    values = dict(fit.report)
    values["f"] = fit.x1.f
    ref = scenario.reference_values
    errors = {name: pre(ref[name], values[name]) for name in PARAMETERS}
    return ReplicateRecord(index, fit.converged, values, errors,
                           mse(clean.rates, fit.fitted), fit.fitted,
                           fit.lambda_star, fit.outer_iterations)


def aggregate(records, scenario, clean, delta):
    """Average replicate records in index order; failed fits are excluded."""
    records = sorted(records, key=lambda r: r.index)
    good = [r for r in records if r.converged]
    n_failed = len(records) - len(good)
    if good:
        mean_pre = {name: float(np.mean([r.pre[name] for r in good])) for name in PARAMETERS}
        mean_values = {name: float(np.mean([r.values[name] for r in good]))
                       for name in PARAMETERS if name != "f"}
        mean_mse = float(np.mean([r.mse for r in good]))
        mean_curve = np.mean(np.vstack([r.fitted for r in good]), axis=0)
    else:
        mean_pre = {name: np.nan for name in PARAMETERS}
        mean_values = {name: np.nan for name in PARAMETERS if name != "f"}
        mean_mse = np.nan
        mean_curve = np.full(clean.m, np.nan)
    return McReport(delta, len(records), n_failed, mean_pre, mean_values, mean_mse,
                    mean_curve, clean.rates.copy(), clean.omega.copy(), records)


def run_monte_carlo(scenario, spec, bounds, config=SolverConfig(), progress=None):
    """Refit ``spec.replicates`` noisy copies of the scenario profile.

    Parameters
    ----------
    progress : callable, optional
        Called as ``progress(record)`` after each replicate.
    """
    clean = synthesize_profile(scenario)
    kernel = build_kernel(scenario.grid, scenario.omega)
    records = []
    for index in range(spec.replicates):
        rec = fit_replicate(scenario, clean, spec, index, bounds, config, kernel)
        if not rec.converged:
            logger.warning("replicate %d did not converge", index)
        records.append(rec)
        if progress is not None:
            progress(rec)
    return aggregate(records, scenario, clean, spec.delta)
