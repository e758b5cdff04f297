"""Discrete forward model for NMRD profiles with quadrupolar peaks.

Units used throughout the package: angular frequencies in Mrad/s, correlation
times in microseconds (so that omega * tau is dimensionless), rates in 1/s.
User-facing frequencies are Larmor frequencies nu in MHz, omega = 2 pi nu.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi


class InvalidInputError(ValueError):
    """Raised when inputs violate the documented preconditions."""


def _as_vector(values, name):
    arr = np.array(values, dtype=float, ndmin=1)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be one-dimensional")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class NmrdProfile:
    """A dispersion curve: rates ``rates`` measured at angular frequencies ``omega``.

    ``conf_halfwidth`` holds optional absolute confidence half-widths (1/s).
    They are carried along for reporting only and never weight the fit.
    """

    omega: np.ndarray
    rates: np.ndarray
    conf_halfwidth: np.ndarray | None = None

    def __post_init__(self):
        omega = _as_vector(self.omega, "omega")
        rates = _as_vector(self.rates, "rates")
        if omega.size < 2:
            raise InvalidInputError("a profile needs at least two points")
        if rates.size != omega.size:
            raise InvalidInputError("omega and rates must have equal length")
        if not np.all(np.isfinite(omega)) or np.any(omega <= 0):
            raise InvalidInputError("frequencies must be finite and positive")
        if np.any(np.diff(omega) <= 0):
            raise InvalidInputError("frequencies must be strictly increasing")
        if not np.all(np.isfinite(rates)):
            raise InvalidInputError("rates must be finite")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "rates", rates)
        if self.conf_halfwidth is not None:
            conf = _as_vector(self.conf_halfwidth, "conf_halfwidth")
            if conf.size != omega.size or np.any(~(conf >= 0)):
                raise InvalidInputError(
                    "conf_halfwidth must have one nonnegative entry per point")
            object.__setattr__(self, "conf_halfwidth", conf)

    @property
    def nu(self):
        """Larmor frequencies in MHz."""
        return self.omega / TWO_PI

    @property
    def m(self):
        return self.omega.size

    @classmethod
    def from_mhz(cls, nu, rates, conf_halfwidth=None):
        return cls(TWO_PI * np.asarray(nu, dtype=float), rates, conf_halfwidth)


@dataclass(frozen=True)
class CorrelationGrid:
    """Logarithmically equispaced correlation times (microseconds)."""

    tau: np.ndarray

    def __post_init__(self):
        tau = _as_vector(self.tau, "tau")
        if tau.size == 0:
            raise InvalidInputError("empty correlation-time grid")
        if not np.all(np.isfinite(tau)) or np.any(tau <= 0):
            raise InvalidInputError("correlation times must be positive")
        if tau.size > 1:
            if np.any(np.diff(tau) <= 0):
                raise InvalidInputError("correlation times must be increasing")
            ratios = tau[1:] / tau[:-1]
            if np.max(np.abs(ratios / ratios[0] - 1.0)) > 1e-12:
                raise InvalidInputError("correlation times must be log-equispaced")
        object.__setattr__(self, "tau", tau)

    @classmethod
    def logspace(cls, tau_min=1e-3, tau_max=1e3, n=200):
        if not (0 < tau_min <= tau_max) or n < 1 or (n > 1 and tau_min == tau_max):
            raise InvalidInputError("need 0 < tau_min < tau_max and n >= 1")
        if n == 1:
            return cls(np.array([float(tau_min)]))
        # geometric construction keeps the ratio constant to rounding
        ratio = (tau_max / tau_min) ** (1.0 / (n - 1))
        tau = tau_min * ratio ** np.arange(n)
        return cls(tau)

    @property
    def tau_min(self):
        return float(self.tau[0])

    @property
    def tau_max(self):
        return float(self.tau[-1])

    @property
    def n(self):
        return self.tau.size


@dataclass(frozen=True)
class Kernel:
    """Discretized relaxation operator ``k`` (m x n) and ``k_ext = [k 1]``.

    ``omega`` and ``tau`` record the frequencies and correlation times the
    operator was built on.
    """

    k: np.ndarray
    k_ext: np.ndarray = field(repr=False)
    omega: np.ndarray = field(repr=False)
    tau: np.ndarray = field(repr=False)

    @property
    def shape(self):
        return self.k.shape


def build_kernel(grid, omega):
    """Build the m x n dipolar kernel and its offset-extended version.

    Entry (i, j) is ``tau_j / (1 + (omega_i tau_j)^2) + 4 tau_j / (1 + 4 (omega_i tau_j)^2)``.
    ``omega = 0`` is allowed and gives the limit ``5 tau_j``.
    """
    tau = grid.tau if isinstance(grid, CorrelationGrid) else _as_vector(grid, "tau")
    omega = np.array(omega, dtype=float, ndmin=1)
    if tau.size == 0 or omega.size == 0:
        raise InvalidInputError("empty grid or frequency vector")
    if np.any(omega < 0):
        raise InvalidInputError("frequencies must be nonnegative")
    if tau.size <= omega.size:
        warnings.warn(
            f"correlation grid (n={tau.size}) is not larger than the number of "
            f"frequencies (m={omega.size})", stacklevel=2)
    wt2 = np.square(np.outer(omega, tau))
    k = tau / (1.0 + wt2) + 4.0 * tau / (1.0 + 4.0 * wt2)
    k_ext = np.hstack([k, np.ones((omega.size, 1))])
    k.setflags(write=False)
    k_ext.setflags(write=False)
    omega.setflags(write=False)
    return Kernel(k, k_ext, omega, tau)


@dataclass(frozen=True)
class LinearBlock:
    """Nonnegative distribution amplitudes ``f`` and offset ``r0``."""

    f: np.ndarray
    r0: float

    def __post_init__(self):
        f = _as_vector(self.f, "f")
        r0 = float(self.r0)
        if np.any(~(f >= 0)) or not r0 >= 0:
            raise InvalidInputError("linear block must be nonnegative")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "r0", r0)

    @classmethod
    def from_vector(cls, x1):
        x1 = np.asarray(x1, dtype=float)
        return cls(x1[:-1].copy(), float(x1[-1]))

    def as_vector(self):
        return np.append(self.f, self.r0)


_QUAD_FIELDS = ("c_hn", "sin2_theta", "sin2_phi", "tau_q", "omega_minus", "omega_plus")


@dataclass(frozen=True)
class QuadParams:
    """The six quadrupolar parameters.

    ``sin2_theta`` and ``sin2_phi`` are the squared sines of the two
    orientation angles; ``omega_minus`` and ``omega_plus`` are the angular
    peak positions (Mrad/s); ``tau_q`` is in microseconds.
    """

    c_hn: float
    sin2_theta: float
    sin2_phi: float
    tau_q: float
    omega_minus: float
    omega_plus: float

    @classmethod
    def from_vector(cls, psi):
        psi = np.asarray(psi, dtype=float)
        if psi.shape != (6,):
            raise InvalidInputError("quadrupolar parameter vector must have 6 entries")
        return cls(*(float(v) for v in psi))

    @classmethod
    def from_physical(cls, c_hn, theta, phi, tau_q, nu_minus, nu_plus):
        """Build from angles in radians and peak frequencies in MHz."""
        return cls(c_hn, math.sin(theta) ** 2, math.sin(phi) ** 2, tau_q,
                   TWO_PI * nu_minus, TWO_PI * nu_plus)

    def as_vector(self):
        return np.array([getattr(self, name) for name in _QUAD_FIELDS])

    @property
    def theta(self):
        return math.asin(math.sqrt(min(max(self.sin2_theta, 0.0), 1.0)))

    @property
    def phi(self):
        return math.asin(math.sqrt(min(max(self.sin2_phi, 0.0), 1.0)))

    @property
    def nu_minus(self):
        return self.omega_minus / TWO_PI

    @property
    def nu_plus(self):
        return self.omega_plus / TWO_PI


@dataclass(frozen=True)
class QuadBounds:
    """Box for the quadrupolar parameters.

    ``c_bar`` and ``tau_bar`` cap ``c_hn`` and ``tau_q``; the peak positions
    live in ``[omega_lo, omega_hi]`` (Mrad/s).
    """

    omega_lo: float
    omega_hi: float
    c_bar: float = 100.0
    tau_bar: float = 100.0

    def __post_init__(self):
        if not (self.c_bar > 0 and self.tau_bar > 0):
            raise InvalidInputError("c_bar and tau_bar must be positive")
        if not (0 < self.omega_lo < self.omega_hi < np.inf):
            raise InvalidInputError("need 0 < omega_lo < omega_hi")

    @classmethod
    def from_mhz(cls, nu_lo, nu_hi, c_bar=100.0, tau_bar=100.0):
        return cls(TWO_PI * nu_lo, TWO_PI * nu_hi, c_bar, tau_bar)

    @property
    def lower(self):
        return np.array([0.0, 0.0, 0.0, 0.0, self.omega_lo, self.omega_lo])

    @property
    def upper(self):
        return np.array([self.c_bar, 1.0, 1.0, self.tau_bar,
                         self.omega_hi, self.omega_hi])

    def contains(self, psi):
        v = psi.as_vector() if isinstance(psi, QuadParams) else np.asarray(psi)
        return bool(np.all(v >= self.lower) and np.all(v <= self.upper))

    def project(self, psi):
        return np.clip(psi, self.lower, self.upper)


@dataclass(frozen=True)
class PhysicalConstants:
    """Physical constants for an order-of-magnitude estimate of ``c_hn`` (SI units)."""

    mu0: float = 1e-7            # T^2 J^-1 m^3 (mu0 / 4 pi)
    gamma_h: float = 2.577e6     # T^-1 s^-1
    gamma_n: float = 3.078e6     # T^-1 s^-1
    hbar: float = 1.05472e-34    # J s
    r_hn: float = 1.4e-10        # m


#: Starting value for ``c_hn`` used by the solver (microsecond / s^2 scale).
C_HN_INITIAL = 0.18


def _quad_terms(psi, omega):
    """Return weights (3,), Lorentzian brackets (3, m) and their pieces."""
    c, s2t, s2p, tq, wm, wp = psi
    weights = np.array([1.0 / 3.0 + s2t * (1.0 - s2p),
                        1.0 / 3.0 + s2t * s2p,
                        1.0 / 3.0 + (1.0 - s2t)])
    centers = np.array([wm, wp, wp - wm])
    minus = omega[None, :] - centers[:, None]
    plus = omega[None, :] + centers[:, None]
    dm = 1.0 + np.square(minus * tq)
    dp = 1.0 + np.square(plus * tq)
    brackets = tq / dm + tq / dp
    return weights, brackets, minus, plus, dm, dp


def _psi_vector(psi):
    return psi.as_vector() if isinstance(psi, QuadParams) else np.asarray(psi, dtype=float)


def eval_quad(psi, omega):
    """Quadrupolar contribution to the rates at each angular frequency."""
    p = _psi_vector(psi)
    omega = np.array(omega, dtype=float, ndmin=1)
    weights, brackets, *_ = _quad_terms(p, omega)
    return p[0] * (weights @ brackets)


def quad_jacobian(psi, omega):
    """Analytic m x 6 Jacobian of :func:`eval_quad` with respect to psi."""
    p = _psi_vector(psi)
    omega = np.array(omega, dtype=float, ndmin=1)
    c, s2t, s2p, tq = p[:4]
    weights, brackets, minus, plus, dm, dp = _quad_terms(p, omega)

    jac = np.empty((omega.size, 6))
    jac[:, 0] = weights @ brackets
    # d weights / d sin2_theta = (1 - s2p, s2p, -1); / d sin2_phi = (-s2t, s2t, 0)
    jac[:, 1] = c * ((1.0 - s2p) * brackets[0] + s2p * brackets[1] - brackets[2])
    jac[:, 2] = c * s2t * (brackets[1] - brackets[0])
    # d/d tq of tq / (1 + u^2 tq^2) = (1 - u^2 tq^2) / (1 + u^2 tq^2)^2
    dtq = (2.0 - dm) / np.square(dm) + (2.0 - dp) / np.square(dp)
    jac[:, 3] = c * (weights @ dtq)
    # d/d center of tq / (1 + (w -+ center)^2 tq^2)
    tq3 = tq ** 3
    dcenter = 2.0 * tq3 * (minus / np.square(dm) - plus / np.square(dp))
    d_wm = weights[0] * dcenter[0] - weights[2] * dcenter[2]
    d_wp = weights[1] * dcenter[1] + weights[2] * dcenter[2]
    jac[:, 4] = c * d_wm
    jac[:, 5] = c * d_wp
    return jac


def _x1_vector(x1):
    return x1.as_vector() if isinstance(x1, LinearBlock) else np.asarray(x1, dtype=float)


def evaluate_model(x1, psi, kernel):
    """Model rates ``K f + F2(psi) + r0``."""
    x = _x1_vector(x1)
    if x.size != kernel.k_ext.shape[1]:
        raise InvalidInputError(
            f"linear block has {x.size} entries, kernel expects {kernel.k_ext.shape[1]}")
    return kernel.k_ext @ x + eval_quad(psi, kernel.omega)


def objective(x1, psi, y, kernel, lam, eta):
    """Penalized misfit ``||y - K_e x1 - F2||^2 + lam ||x1||_1 + eta ||x1||^2``.

    The L1 term includes the offset.
    """
    x = _x1_vector(x1)
    res = np.asarray(y, dtype=float) - evaluate_model(x, psi, kernel)
    return float(res @ res + lam * np.sum(np.abs(x)) + eta * (x @ x))
