# vssprofile/cli.py

import importlib.metadata
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Tuple

import click
import numpy as np
import yaml
from click.core import ParameterSource
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler

from vssprofile._utils import Spinner, print_table
from vssprofile.asymptotics import (
    AsymptoticsError,
    InsufficientTail,
    NoPlateau,
    critical_asymptotics,
    fit_tail,
    lambda_diagnostic,
)
from vssprofile.classifier import (
    ClassifierError,
    bisect,
    classify,
    interval_pattern,
    seed_bracket,
    sweep,
)
from vssprofile.params import (
    ConstantOutOfRange,
    DerivedConstants,
    ExponentConfig,
    InvalidParameter,
    WindowViolation,
    validate,
)
from vssprofile.report import (
    CHECKS,
    dumps,
    plot_profile,
    read_profile,
    run_verification,
    tails_document,
    write_json,
    write_manifest,
    write_profile,
    write_sweep,
    write_variational,
)
from vssprofile.shooter import IntegratorSettings, ShooterError, integrate
from vssprofile.variational import (
    VariationalError,
    integrate_variational,
    linearized_residual,
    monotonicity_check,
    operator_samples,
)

# ─────────────────────────────────────────────────────────────
#  Version & CLI Setup
# ─────────────────────────────────────────────────────────────

try:
    __version__ = importlib.metadata.version("vssprofile")
except importlib.metadata.PackageNotFoundError:
    __version__ = "0.0.0-dev"

EXIT_CHECK_FAILED = 1
EXIT_INVALID_CONFIG = 2
EXIT_SOLVER_FAILURE = 3
EXIT_USAGE = 64

logger = logging.getLogger("vssprofile")


class CheckFailed(click.ClickException):
    exit_code = EXIT_CHECK_FAILED


class InvalidConfig(click.ClickException):
    exit_code = EXIT_INVALID_CONFIG


class SolverFailure(click.ClickException):
    exit_code = EXIT_SOLVER_FAILURE


class ExitCodeGroup(click.Group):
    """
    Click Group that maps usage errors to exit code 64 and every other
    ClickException to its own exit code.
    """

    def format_help(self, ctx, formatter):
        formatter.write_text(f"Version: {__version__}\n\n")
        super().format_help(ctx, formatter)

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        try:
            rv = super().main(
                args=args,
                prog_name=prog_name,
                complete_var=complete_var,
                standalone_mode=False,
                **extra,
            )
        except click.UsageError as e:
            e.show()
            sys.exit(EXIT_USAGE)
        except click.ClickException as e:
            e.show()
            sys.exit(e.exit_code)
        except click.exceptions.Abort:
            click.echo("Aborted!", err=True)
            sys.exit(1)
        sys.exit(rv if isinstance(rv, int) else 0)


@click.group(cls=ExitCodeGroup)
@click.version_option(version=__version__, package_name="vssprofile")
def cli():
    """
    vss - shoot, classify and verify self-similar profiles of fast diffusion
    with gradient absorption.
    """
    pass


# ─────────────────────────────────────────────────────────────
#  Utilities
# ─────────────────────────────────────────────────────────────


class ConfigFileError(ValueError):
    pass


def configure_logging(level: str) -> None:
    """Send log records to stderr through rich."""
    console = Console(stderr=True)
    logging.basicConfig(
        level=level.upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )


def load_config_file(path: Path) -> Dict[str, Any]:
    """Read a JSON or YAML mapping with optional N, p, q and settings keys."""
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as e:
        raise ConfigFileError(f"cannot read config file {path}: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigFileError(f"config file {path} must hold a mapping, got {type(data).__name__}")
    unknown = set(data) - {"N", "p", "q", "settings"}
    if unknown:
        raise ConfigFileError(f"config file {path}: unknown keys {sorted(unknown)}")
    if not isinstance(data.get("settings", {}), dict):
        raise ConfigFileError(f"config file {path}: 'settings' must be a mapping")
    return data


def handle_error(error: Exception):
    """Turn library errors into ClickExceptions carrying the documented exit codes."""
    if isinstance(error, click.ClickException):
        raise error
    if isinstance(
        error,
        (WindowViolation, ConstantOutOfRange, InvalidParameter, ValidationError, ConfigFileError),
    ):
        raise InvalidConfig(str(error)) from error
    if isinstance(error, (ShooterError, ClassifierError, AsymptoticsError, VariationalError)):
        raise SolverFailure(f"{type(error).__name__}: {error}") from error
    if isinstance(error, (ValueError, OSError)):
        raise SolverFailure(f"post-processing failed: {error}") from error
    raise error


@dataclass
class Run:
    """Everything a subcommand needs, resolved from flags, config file and environment."""

    config: ExponentConfig
    consts: DerivedConstants
    settings: IntegratorSettings
    out_dir: Path
    jobs: int
    json_mode: bool
    command: List[str]
    outputs: List[Path] = field(default_factory=list)

    @property
    def interactive(self) -> bool:
        return not self.json_mode and sys.stderr.isatty()

    def path(self, name: Path) -> Path:
        return name if name.is_absolute() else self.out_dir / name

    def finish(self) -> Path:
        """Write the manifest over every output produced so far."""
        return write_manifest(
            self.out_dir,
            self.outputs,
            config=self.config,
            settings=self.settings,
            command=self.command,
            tool_version=__version__,
            extended_precision=self.consts.extended,
        )


_SETTING_FLAGS = (("rmax", "R_max"), ("rtol", "rel_tol"), ("atol", "abs_tol"))


def resolve_run(ctx: click.Context, opts: Dict[str, Any]) -> Run:
    """Merge defaults, ``--config`` and explicit flags, in increasing precedence."""
    configure_logging(opts["log_level"])

    def explicit(name: str) -> bool:
        return ctx.get_parameter_source(name) not in (
            ParameterSource.DEFAULT,
            ParameterSource.DEFAULT_MAP,
        )

    file_data = load_config_file(opts["config_path"]) if opts["config_path"] else {}
    exponents = {}
    for name in ("N", "p", "q"):
        if explicit(name) or name not in file_data:
            exponents[name] = opts[name]
        else:
            exponents[name] = file_data[name]
    settings_data = dict(file_data.get("settings", {}))
    for flag, name in _SETTING_FLAGS:
        if explicit(flag) or name not in settings_data:
            settings_data[name] = opts[flag]

    config = ExponentConfig(**exponents)
    consts = validate(config, extended=opts["extended_precision"])
    settings = IntegratorSettings(**settings_data)

    out_dir = opts["out_dir"]
    out_dir.mkdir(parents=True, exist_ok=True)
    command = [ctx.info_name] + [
        f"{key}={value}" for key, value in sorted(ctx.params.items()) if value is not None
    ]
    logger.debug("config %s, settings %s", config, settings)
    return Run(
        config=config,
        consts=consts,
        settings=settings,
        out_dir=out_dir,
        jobs=max(1, opts["jobs"]),
        json_mode=opts["json_mode"],
        command=command,
    )


def run_options(func):
    """Options shared by every subcommand."""
    options = [
        click.option("--N", "N", type=int, default=1, show_default=True, help="Spatial dimension."),
        click.option("--p", type=float, default=1.5, show_default=True, help="Diffusion exponent."),
        click.option("--q", type=float, default=0.9, show_default=True, help="Absorption exponent."),
        click.option(
            "--config",
            "config_path",
            type=click.Path(exists=True, dir_okay=False, path_type=Path),
            help="JSON or YAML file with N, p, q and a settings mapping.",
        ),
        click.option("--rmax", type=float, default=1e4, show_default=True, help="Integration horizon R_max."),
        click.option("--rtol", type=float, default=1e-10, show_default=True, help="Relative tolerance."),
        click.option("--atol", type=float, default=1e-14, show_default=True, help="Absolute tolerance."),
        click.option(
            "--out-dir",
            type=click.Path(file_okay=False, path_type=Path),
            default=Path("."),
            show_default=True,
            help="Directory for every file written.",
        ),
        click.option(
            "--jobs",
            type=int,
            default=1,
            envvar="VSS_JOBS",
            show_envvar=True,
            help="Worker processes for sweeps.",
        ),
        click.option(
            "--extended-precision",
            is_flag=True,
            default=False,
            help="Constants, series and bracket arithmetic in long double.",
        ),
        click.option("--json", "json_mode", is_flag=True, default=False, help="Output in JSON format."),
        click.option(
            "--log-level",
            type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
            default="WARNING",
            envvar="VSS_LOG_LEVEL",
            show_envvar=True,
        ),
    ]
    for option in reversed(options):
        func = option(func)
    return click.pass_context(func)


def emit(run: Run, data: Dict[str, Any], headers: Tuple[str, ...] = ("Quantity", "Value")):
    """Print a result as JSON or as a two-column table."""
    if run.json_mode:
        click.echo(dumps(data), nl=False)
    else:
        print_table(list(headers), [(key, value) for key, value in data.items()])


# ─────────────────────────────────────────────────────────────
#  Commands
# ─────────────────────────────────────────────────────────────


@cli.command("solve")
@click.option("--a", "a", type=float, required=True, help="Shooting parameter f(0).")
@click.option(
    "--stop-at-plateau/--no-stop-at-plateau",
    default=True,
    show_default=True,
    help="Stop once w crosses (1 + margin) w*.",
)
@run_options
def solve(ctx, a, stop_at_plateau, **opts):
    """Shoot one orbit and write profile.csv, meta.json and profile.svg."""
    try:
        run = resolve_run(ctx, opts)
        with Spinner(
            text=f"Integrating a={a:.12g}...",
            success_text="Integration complete",
            enabled=run.interactive,
        ):
            profile = integrate(a, run.settings, run.consts, stop_on_plateau=stop_at_plateau)
        run.outputs += write_profile(profile, run.out_dir, run.consts, run.settings)
        run.outputs.append(plot_profile(profile, run.consts, run.out_dir / "profile.svg"))
        run.finish()
        emit(
            run,
            {
                "a": profile.a,
                "termination": str(profile.termination),
                "R": profile.R,
                "R1": profile.R1,
                "r_cross": profile.r_cross,
                "r_end": profile.r_end,
                "samples": len(profile.r),
            },
        )
    except Exception as e:
        handle_error(e)


@cli.command("classify")
@click.option("--a", "a", type=float, required=True, help="Shooting parameter f(0).")
@run_options
def classify_cmd(ctx, a, **opts):
    """Label one shooting parameter as A, C or Undetermined."""
    try:
        run = resolve_run(ctx, opts)
        label = classify(a, run.settings, run.consts)
        data = label.to_dict()
        run.outputs.append(write_json(run.out_dir / "classify.json", data))
        run.finish()
        emit(run, data)
    except Exception as e:
        handle_error(e)


def parse_grid(value: str) -> np.ndarray:
    """Parse ``log:lo:hi:n`` into n log-spaced values."""
    try:
        kind, lo, hi, n = value.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise click.BadParameter("expected log:lo:hi:n, e.g. log:1e-3:1e3:61", param_hint="--grid")
    if kind != "log" or not (0 < lo < hi) or n < 2:
        raise click.BadParameter("expected log:lo:hi:n with 0 < lo < hi and n >= 2", param_hint="--grid")
    return np.logspace(np.log10(lo), np.log10(hi), n)


@cli.command("sweep")
@click.option(
    "--grid",
    default="log:1e-3:1e3:61",
    show_default=True,
    help="Parameter grid log:lo:hi:n.",
)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=Path("sweep.csv"), show_default=True)
@run_options
def sweep_cmd(ctx, grid, out, **opts):
    """Classify a grid of shooting parameters."""
    try:
        run = resolve_run(ctx, opts)
        values = parse_grid(grid)
        items = sweep(values, run.settings, run.consts, jobs=run.jobs, progress=run.interactive)
        run.outputs.append(write_sweep(items, run.path(out)))
        run.finish()
        failed = [item for item in items if item.error is not None]
        emit(run, {"points": len(items), "pattern": interval_pattern(items), "errors": len(failed)})
    except Exception as e:
        handle_error(e)


@cli.command("bisect")
@click.option("--width", type=float, default=1e-9, show_default=True, help="Target relative width.")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=Path("bracket.json"), show_default=True)
@run_options
def bisect_cmd(ctx, width, out, **opts):
    """Bracket the critical shooting parameter."""
    try:
        run = resolve_run(ctx, opts)
        with Spinner(text="Seeding bracket...", success_text="Bracket seeded", enabled=run.interactive):
            a_A, a_C = seed_bracket(run.settings, run.consts)
        with Spinner(text=f"Bisecting [{a_A:.6g}, {a_C:.6g}]...", success_text="Bisection complete", enabled=run.interactive):
            bracket = bisect(a_A, a_C, width, run.settings, run.consts)
        data = bracket.to_dict()
        data["seed"] = [a_A, a_C]
        data["midpoint_termination"] = str(bracket.midpoint_profile.termination)
        data["settings"] = run.settings.model_dump(mode="json")
        data["derived_constants"] = run.consts.to_dict()
        run.outputs.append(write_json(run.path(out), data))
        run.finish()
        emit(run, data)
    except Exception as e:
        handle_error(e)


@cli.command("tails")
@click.option(
    "--in",
    "in_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
    help="profile.csv written by solve.",
)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=Path("tails.json"), show_default=True)
@run_options
def tails_cmd(ctx, in_path, out, **opts):
    """Fit the tail of a stored profile."""
    try:
        run = resolve_run(ctx, opts)
        profile = read_profile(in_path, run.consts)
        fit = fit_tail(profile, run.consts)
        try:
            lam = lambda_diagnostic(profile, run.consts)
        except InsufficientTail as e:
            logger.warning("%s", e)
            lam = None
        try:
            critical = critical_asymptotics(profile, run.consts)
        except NoPlateau:
            critical = None
        data = tails_document(fit, lam, critical)
        run.outputs.append(write_json(run.path(out), data))
        run.finish()
        emit(run, data)
    except Exception as e:
        handle_error(e)


@cli.command("variational")
@click.option("--a", "a", type=float, required=True, help="Shooting parameter f(0).")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=Path("var.csv"), show_default=True)
@run_options
def variational_cmd(ctx, a, out, **opts):
    """Integrate d f/d a and check monotonicity and the linearized operator."""
    try:
        run = resolve_run(ctx, opts)
        with Spinner(text=f"Integrating a-derivative at a={a:.12g}...", success_text="Done", enabled=run.interactive):
            vp = integrate_variational(a, run.settings, run.consts)
        ops = operator_samples(vp, run.consts)
        mono = monotonicity_check(vp, run.consts)
        lin = linearized_residual(vp, run.consts)
        run.outputs.append(write_variational(vp, ops, run.path(out)))
        data = {
            "a": vp.a,
            "termination": str(vp.base.termination),
            "monotonicity": mono.model_dump(mode="json"),
            "linearized": lin.model_dump(mode="json"),
        }
        run.outputs.append(write_json(run.out_dir / "variational.json", data))
        run.finish()
        if run.json_mode:
            click.echo(dumps(data), nl=False)
        else:
            print_table(
                ["Check", "Value"],
                [
                    ("monotonicity ok", mono.ok),
                    ("first violation", mono.first_violation),
                    ("max |L_a(wa)| normalized", lin.max_wa_residual),
                    ("L_a(rw') < 0", lin.rwprime_negative),
                    ("closed-form deviation", lin.max_closed_form_deviation),
                ],
            )
    except Exception as e:
        handle_error(e)


@cli.command("verify")
@click.option(
    "--only",
    multiple=True,
    type=click.Choice([name for name, _, _ in CHECKS]),
    help="Run only the named checks (repeatable).",
)
@run_options
def verify_cmd(ctx, only, **opts):
    """Run the verification pipeline and write verification.json."""
    try:
        run = resolve_run(ctx, opts)
        report = run_verification(
            run.consts,
            run.settings,
            jobs=run.jobs,
            progress=run.interactive,
            only=list(only) or None,
        )
        data = report.model_dump(mode="json")
        data["status"] = str(report.status)
        run.outputs.append(write_json(run.out_dir / "verification.json", data))
        run.finish()
        if run.json_mode:
            click.echo(dumps(data), nl=False)
        else:
            print_table(
                ["Check", "Status", "Seconds", "Error"],
                [(c.name, str(c.status), c.seconds, c.error or "") for c in report.checks],
            )
        if not report.passed:
            failed = [c.name for c in report.checks if c.status != "pass"]
            raise CheckFailed(f"{len(failed)} check(s) failed: {', '.join(failed)}")
    except Exception as e:
        handle_error(e)


if __name__ == "__main__":
    cli()
