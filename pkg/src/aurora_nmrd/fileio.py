"""Profile CSV files, run configuration and result artifacts.

Numeric CSV output is written with 17 significant digits and JSON documents
use Python's round-trip float repr, so reruns diff clean.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .aurora import SolverConfig
from .model import CorrelationGrid, InvalidInputError, NmrdProfile, QuadBounds, TWO_PI
from .synth import NoiseSpec

#: Environment variable naming the default output directory.
OUTPUT_ENV = "AURORA_NMRD_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "aurora-output"


def fmt(x):
    """17-significant-digit text for one float."""
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# profiles

@dataclass(frozen=True)
class ProfileFileRecord:
    nu_mhz: float
    r1: float
    conf_percent: float | None = None
    line: int = 0

    def __post_init__(self):
        where = f"line {self.line}: " if self.line else ""
        if not (math.isfinite(self.nu_mhz) and self.nu_mhz > 0):
            raise InvalidInputError(f"{where}frequency must be positive, got {self.nu_mhz}")
        if not math.isfinite(self.r1):
            raise InvalidInputError(f"{where}rate must be finite, got {self.r1}")
        if self.conf_percent is not None and not self.conf_percent >= 0:
            raise InvalidInputError(f"{where}confidence must be nonnegative")


def _parse_float(text):
    try:
        return float(text)
    except ValueError:
        return None


def parse_profile_lines(lines, source="<profile>"):
    """Parse CSV text lines into :class:`ProfileFileRecord` objects.

    Blank lines and lines starting with ``#`` are skipped. The first other
    line may be a header, recognised by having no numeric field.
    """
    records = []
    seen_data = False
    for lineno, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        fields = [f.strip() for f in next(csv.reader([text]))]
        values = [_parse_float(f) for f in fields]
        if not seen_data and all(v is None for v in values):
            seen_data = True  # header: only allowed before any data row
            continue
        seen_data = True
        if len(fields) not in (2, 3) or any(v is None for v in values):
            raise InvalidInputError(
                f"{source}, line {lineno}: expected 'nu_mhz,r1[,conf_percent]', got {text!r}")
        conf = values[2] if len(values) == 3 else None
        records.append(ProfileFileRecord(values[0], values[1], conf, lineno))
    return records


def profile_from_records(records, source="<profile>"):
    if len(records) < 2:
        raise InvalidInputError(f"{source}: need at least 2 data rows, found {len(records)}")
    records = sorted(records, key=lambda r: r.nu_mhz)
    for a, b in zip(records, records[1:]):
        if a.nu_mhz == b.nu_mhz:
            raise InvalidInputError(
                f"{source}: duplicate frequency {a.nu_mhz} MHz (lines {a.line} and {b.line})")
    nu = np.array([r.nu_mhz for r in records])
    r1 = np.array([r.r1 for r in records])
    has_conf = [r.conf_percent is not None for r in records]
    if any(has_conf) and not all(has_conf):
        raise InvalidInputError(f"{source}: confidence column present on some rows only")
    conf = None
    if all(has_conf):
        conf = np.array([r.conf_percent for r in records]) / 100.0 * np.abs(r1)
    return NmrdProfile.from_mhz(nu, r1, conf)


def read_profile(path):
    """Read a ``nu_mhz,r1[,conf_percent]`` CSV file into an :class:`NmrdProfile`.

    Frequencies are converted to angular frequency (Mrad/s), rows are sorted
    by frequency and confidence percentages become absolute half-widths.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidInputError(f"cannot read profile {path}: {exc.strerror}") from exc
    records = parse_profile_lines(text.splitlines(), str(path))
    return profile_from_records(records, str(path))


def write_profile(path, profile, header=True):
    """Write a profile as ``nu_mhz,r1[,conf_percent]`` CSV."""
    rows = [profile.nu, profile.rates]
    cols = ["nu_mhz", "r1"]
    if profile.conf_halfwidth is not None:
        with np.errstate(divide="ignore", invalid="ignore"):
            pct = np.where(profile.rates != 0,
                           100.0 * profile.conf_halfwidth / np.abs(profile.rates), 0.0)
        rows.append(pct)
        cols.append("conf_percent")
    write_series(path, cols, rows, header=header)


def write_series(path, columns, arrays, header=True):
    """Write equal-length columns as CSV with LF line endings."""
    arrays = [np.asarray(a, dtype=float) for a in arrays]
    lines = [",".join(columns)] if header else []
    for row in zip(*arrays):
        lines.append(",".join(fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_series(path):
    """Read a CSV written by :func:`write_series`; returns ``(columns, array)``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


# ---------------------------------------------------------------------------
# kernel matrices

def write_kernel_csv(path, kernel):
    """Kernel as CSV: first row tau (us), first column nu (MHz)."""
    lines = [",".join(["nu_mhz\\tau_us"] + [fmt(t) for t in kernel.tau])]
    for nu, row in zip(kernel.omega / TWO_PI, kernel.k):
        lines.append(",".join([fmt(nu)] + [fmt(v) for v in row]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_kernel_csv(path):
    """Inverse of :func:`write_kernel_csv`: ``(nu_mhz, tau_us, k)``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    tau = np.array(rows[0][1:], dtype=float)
    body = np.array(rows[1:], dtype=float)
    return body[:, 0], tau, body[:, 1:]


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class RunConfig:
    """Flat run configuration; each field doubles as a ``--flag-name`` option."""

    tau_min: float = 1e-3
    tau_max: float = 1e3
    n_tau: int = 200
    nu_lo: float | None = None
    nu_hi: float | None = None
    c_bar: float = 100.0
    tau_bar: float = 100.0
    eta: float = SolverConfig.eta
    lambda0: float = SolverConfig.lambda0
    tol_lambda: float = SolverConfig.tol_lambda
    tol_gs: float = SolverConfig.tol_gs
    max_outer: int = SolverConfig.max_outer
    max_gs: int = SolverConfig.max_gs
    max_inner_l1: int = SolverConfig.max_inner_l1
    max_inner_bcnls: int = SolverConfig.max_inner_bcnls
    inner_tol: float = SolverConfig.inner_tol
    l1_method: str = SolverConfig.l1_method
    anderson_depth: int = SolverConfig.anderson_depth
    delta: float = 0.0
    seed: int = 0
    replicates: int = 100
    scenario: str = "default"
    profile: str | None = None
    nu_mhz: tuple | None = None
    output_dir: str | None = None

    def __post_init__(self):
        if self.nu_mhz is not None:
            object.__setattr__(self, "nu_mhz", _float_list(self.nu_mhz))
        # build every derived object once so bad values fail early
        self.grid()
        self.solver()
        self.noise()
        if (self.nu_lo is None) != (self.nu_hi is None):
            raise InvalidInputError("set both nu_lo and nu_hi, or neither")
        if self.nu_lo is not None:
            self.bounds()

    @classmethod
    def field_names(cls):
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def load(cls, path=None, overrides=None):
        """Defaults, then the JSON file at ``path``, then non-None ``overrides``."""
        values = {}
        if path is not None:
            try:
                values = json.loads(Path(path).read_text(encoding="utf-8"))
            except OSError as exc:
                raise InvalidInputError(f"cannot read config {path}: {exc.strerror}") from exc
            except json.JSONDecodeError as exc:
                raise InvalidInputError(f"config {path}: invalid JSON ({exc})") from exc
            if not isinstance(values, dict):
                raise InvalidInputError(f"config {path}: expected a JSON object")
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        unknown = sorted(set(values) - set(cls.field_names()))
        if unknown:
            raise InvalidInputError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**values)
        except InvalidInputError:
            raise
        except (TypeError, ValueError) as exc:
            raise InvalidInputError(f"bad config value: {exc}") from exc

    def grid(self):
        return CorrelationGrid.logspace(self.tau_min, self.tau_max, int(self.n_tau))

    def solver(self):
        names = {f.name for f in dataclasses.fields(SolverConfig)} - {"gamma"}
        return SolverConfig(**{k: getattr(self, k) for k in names})

    def noise(self):
        return NoiseSpec(float(self.delta), int(self.seed), int(self.replicates))

    def has_window(self):
        return self.nu_lo is not None and self.nu_hi is not None

    def bounds(self):
        if not self.has_window():
            raise InvalidInputError(
                "no quadrupole window: set nu_lo and nu_hi (MHz) in the config "
                "or pass --nu-lo/--nu-hi, choosing them by inspection of the profile")
        if not 0 < self.nu_lo < self.nu_hi:
            raise InvalidInputError("need 0 < nu_lo < nu_hi")
        return QuadBounds.from_mhz(self.nu_lo, self.nu_hi, self.c_bar, self.tau_bar)

    def output_path(self):
        out = self.output_dir or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT_DIR
        path = Path(out)
        path.mkdir(parents=True, exist_ok=True)
        return path


def _float_list(value):
    items = value.split(",") if isinstance(value, str) else value
    try:
        nu = tuple(float(v) for v in items)
    except (TypeError, ValueError):
        raise InvalidInputError(f"nu_mhz must be a list of numbers, got {value!r}") from None
    if not nu or any(not (math.isfinite(v) and v >= 0) for v in nu):
        raise InvalidInputError("nu_mhz must hold nonnegative frequencies")
    return nu


def check_window(config, profile):
    """QuadBounds for ``config``, checked to lie inside the profile's frequencies."""
    bounds = config.bounds()
    nu = profile.nu
    if config.nu_lo < nu[0] or config.nu_hi > nu[-1]:
        raise InvalidInputError(
            f"window [{config.nu_lo}, {config.nu_hi}] MHz is outside the profile "
            f"range [{nu[0]:.6g}, {nu[-1]:.6g}] MHz")
    return bounds


# ---------------------------------------------------------------------------
# result documents

def _jsonable(value):
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_json(path, doc):
    text = json.dumps(_jsonable(doc), indent=2, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def fit_document(result, profile, grid):
    """Key/value summary plus the arrays needed to redraw the fit."""
    doc = dict(result.report)
    doc.update(
        lambda_star=result.lambda_star,
        mse=result.mse,
        converged=result.converged,
        outer_iterations=result.outer_iterations,
        message=result.message,
        psi=result.psi.as_vector(),
        tau=grid.tau,
        f=result.x1.f,
        nu=profile.nu,
        r1=profile.rates,
        r1_fit=result.fitted,
        lambda_trace=result.history.lambdas,
        objective_trace=result.history.objectives,
    )
    return doc


def write_fit_artifacts(out, result, profile, grid, prefix="fit"):
    """Write the result document and the plotting series; returns the paths."""
    out = Path(out)
    paths = {
        "result": out / f"{prefix}_result.json",
        "distribution": out / f"{prefix}_distribution.csv",
        "curve": out / f"{prefix}_curve.csv",
        "trace": out / f"{prefix}_trace.csv",
    }
    write_json(paths["result"], fit_document(result, profile, grid))
    write_series(paths["distribution"], ["tau_us", "f"], [grid.tau, result.x1.f])
    conf = profile.conf_halfwidth if profile.conf_halfwidth is not None \
        else np.zeros(profile.m)
    write_series(paths["curve"], ["nu_mhz", "r1", "r1_fit", "conf_halfwidth"],
                 [profile.nu, profile.rates, result.fitted, conf])
    h = result.history
    n = len(h.objectives)
    # lambda_k is the value used in outer step k; lambda_{k+1} its update
    write_series(paths["trace"],
                 ["outer_iteration", "lambda", "lambda_next", "objective", "mse", "gs_iterations"],
                 [np.arange(1, n + 1), h.lambdas[:n],
                  (h.lambdas[1:n + 1] + [np.nan] * n)[:n],
                  h.objectives, h.mse, h.gs_iters])
    return paths


def mc_document(report, reference):
    doc = {
        "delta": report.delta,
        "replicates": report.replicates,
        "n_failed": report.n_failed,
        "mean_mse": report.mean_mse,
        "mean_pre": report.mean_pre,
        "mean_values": report.mean_values,
        "reference": {k: v for k, v in reference.items() if k != "f"},
        "nu": report.omega / TWO_PI,
        "clean_curve": report.clean_curve,
        "mean_curve": report.mean_curve,
        "replicate_records": [
            {"index": r.index, "converged": r.converged, "mse": r.mse,
             "lambda_star": r.lambda_star, "outer_iterations": r.outer_iterations,
             "values": {k: v for k, v in r.values.items() if k != "f"},
             "pre": r.pre}
            for r in report.records
        ],
    }
    return doc


def write_mc_artifacts(out, report, reference):
    out = Path(out)
    paths = {
        "report": out / "mc_report.json",
        "pre_bars": out / "mc_pre_bars.csv",
        "mean_curve": out / "mc_mean_curve.csv",
    }
    write_json(paths["report"], mc_document(report, reference))
    names = list(report.mean_pre)
    # parameter names go in the first column, so write this one by hand
    lines = ["parameter,mean_pre,mean_value,reference"]
    for name in names:
        mean_v = report.mean_values.get(name, np.nan)
        ref = reference[name] if name != "f" else np.nan
        lines.append(",".join([name, fmt(report.mean_pre[name]), fmt(mean_v), fmt(ref)]))
    paths["pre_bars"].write_text("\n".join(lines) + "\n", encoding="utf-8")
    write_series(paths["mean_curve"], ["nu_mhz", "r1_clean", "r1_mean_fit"],
                 [report.omega / TWO_PI, report.clean_curve, report.mean_curve])
    return paths
