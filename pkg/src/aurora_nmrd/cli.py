"""Command-line entry points: ``fit``, ``synth``, ``mc`` and ``kernel-dump``.

Exit codes: 0 on success (converged fits), 2 when a fit or Monte-Carlo run
finished without converging, 1 on input or configuration errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import warnings

import numpy as np

from .aurora import aurora_solve
from .fileio import (
    OUTPUT_ENV,
    RunConfig,
    check_window,
    read_profile,
    write_fit_artifacts,
    write_json,
    write_kernel_csv,
    write_mc_artifacts,
    write_profile,
)
from .model import TWO_PI, InvalidInputError, build_kernel
from .synth import (
    DEFAULT_WINDOW_MHZ,
    add_noise,
    default_frequencies,
    default_scenario,
    run_monte_carlo,
    synthesize_profile,
)

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 1, 2

SCENARIOS = {"default": default_scenario}
SCENARIO_WINDOWS = {"default": DEFAULT_WINDOW_MHZ}


def _scenario(config):
    try:
        make = SCENARIOS[config.scenario]
    except KeyError:
        raise InvalidInputError(
            f"unknown scenario {config.scenario!r}; choose from {sorted(SCENARIOS)}") from None
    return make(grid=config.grid())


def run_fit(profile_path, config_path=None, flags=None):
    """Fit one profile file and write its artifacts.

    Returns ``(exit_code, paths)``.
    """
    config = RunConfig.load(config_path, flags)
    profile = read_profile(profile_path)
    bounds = check_window(config, profile)
    grid = config.grid()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # n <= m is legal, just unusual
        kernel = build_kernel(grid, profile.omega)
    result = aurora_solve(profile, grid, bounds, config.solver(), kernel=kernel)
    paths = write_fit_artifacts(config.output_path(), result, profile, grid)
    if not result.converged:
        logger.warning("fit did not converge: %s", result.message)
        return EXIT_NOT_CONVERGED, paths
    return EXIT_OK, paths


def run_synth(config_path=None, flags=None):
    """Write the clean profile of a named scenario, plus a noisy copy when delta > 0."""
    config = RunConfig.load(config_path, flags)
    scenario = _scenario(config)
    out = config.output_path()
    clean = synthesize_profile(scenario)
    paths = {"clean": out / f"{config.scenario}_clean.csv",
             "reference": out / f"{config.scenario}_reference.json"}
    write_profile(paths["clean"], clean)
    ref = dict(scenario.reference_values)
    ref["tau"] = scenario.grid.tau
    write_json(paths["reference"], ref)
    spec = config.noise()
    if spec.delta > 0:
        paths["noisy"] = out / f"{config.scenario}_noisy.csv"
        write_profile(paths["noisy"], add_noise(clean, spec, 0))
    return EXIT_OK, paths


def run_mc(config_path=None, flags=None):
    """Monte-Carlo refits of a scenario; writes the report and plot series."""
    config = RunConfig.load(config_path, flags)
    scenario = _scenario(config)
    if not config.has_window():
        lo, hi = SCENARIO_WINDOWS[config.scenario]
        config = dataclasses.replace(config, nu_lo=lo, nu_hi=hi)
    clean = synthesize_profile(scenario)
    bounds = check_window(config, clean)

    def progress(rec):
        logger.info("replicate %d: converged=%s mse=%.3e", rec.index, rec.converged, rec.mse)

    report = run_monte_carlo(scenario, config.noise(), bounds, config.solver(), progress)
    paths = write_mc_artifacts(config.output_path(), report, scenario.reference_values)
    return (EXIT_NOT_CONVERGED if report.n_failed else EXIT_OK), paths


def run_kernel_dump(config_path=None, flags=None):
    """Write the kernel for the configured grid and frequencies as CSV.

    Frequencies come from ``nu_mhz`` when set, else from the ``profile``
    file, else from the default synthetic frequency set.
    """
    config = RunConfig.load(config_path, flags)
    if config.nu_mhz is not None:
        omega = TWO_PI * np.array(config.nu_mhz)
    elif config.profile:
        omega = read_profile(config.profile).omega
    else:
        omega = default_frequencies()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        kernel = build_kernel(config.grid(), omega)
    path = config.output_path() / "kernel.csv"
    write_kernel_csv(path, kernel)
    return EXIT_OK, {"kernel": path}


def _flag_type(field):
    t = field.type if isinstance(field.type, str) else getattr(field.type, "__name__", "")
    if "int" in t:
        return int
    if "float" in t:
        return float
    return str


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors, not "did not converge"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(
        prog="aurora-nmrd",
        description="Fit NMRD profiles with quadrupolar relaxation enhancement.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "fit": "fit a profile CSV (nu_mhz,r1[,conf_percent])",
        "synth": "write a synthetic scenario profile",
        "mc": "Monte-Carlo noise study on a synthetic scenario",
        "kernel-dump": "write the discretized kernel as CSV",
    }
    for name, help_text in commands.items():
        p = sub.add_parser(name, help=help_text,
                           epilog=f"Default output directory: ${OUTPUT_ENV} or ./aurora-output")
        if name == "fit":
            p.add_argument("profile_path", help="input profile CSV")
        p.add_argument("--config", help="JSON config; flags override its keys")
        for field in dataclasses.fields(RunConfig):
            p.add_argument("--" + field.name.replace("_", "-"), dest=field.name,
                           type=_flag_type(field), default=None, metavar="X")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    flags = {name: getattr(args, name) for name in RunConfig.field_names()}
    try:
        if args.command == "fit":
            code, paths = run_fit(args.profile_path, args.config, flags)
        elif args.command == "synth":
            code, paths = run_synth(args.config, flags)
        elif args.command == "mc":
            code, paths = run_mc(args.config, flags)
        else:
            code, paths = run_kernel_dump(args.config, flags)
    except (InvalidInputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    for label, path in paths.items():
        print(f"{label}: {path}")
    return code


if __name__ == "__main__":
    sys.exit(main())
