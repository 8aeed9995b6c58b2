from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from enum import IntEnum
from functools import wraps
from pathlib import Path
from textwrap import dedent
from typing import TYPE_CHECKING, Any
import io
import logging
import sys

from attrs import evolve
from rich import console
from rich.table import Table
from rich_click.utils import CommandGroupDict, OptionGroupDict
import rich_click as click
import structlog

from tamed import _integrators, _suite
from tamed._attractor import (
    absorbing_record,
    attractor_sample,
    first_eigenvalue,
    tail_record,
)
from tamed._config import CHECKS, RunConfig
from tamed._core import atomic_write, format_float
from tamed._diagnostics import (
    convergence_order,
    tame_measure,
    threshold_fixed_point,
    trajectory_checks,
)
from tamed._report import DiagnosticsReport
from tamed._spectral import save_checkpoint
from tamed.exceptions import (
    BlowUp,
    BoundViolation,
    ConfigError,
    DomainError,
    NonConvergence,
    StructuralError,
    TamedError,
)

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence
    from typing import TextIO

    from tamed._config import Axis
    from tamed._integrators import Trajectory
    from tamed._report import CheckRecord
    from tamed._spectral import SpectralField


class ExitCode(IntEnum):
    OK = 0
    CONFIG = 1
    BLOWUP = 2
    CHECKS = 3


STDOUT = console.Console()
STDERR = console.Console(stderr=True)

#: Errors which mean a run's inputs were unusable rather than that it failed.
INPUT_ERRORS = (ConfigError, DomainError, StructuralError)

#: Errors which mean a run started but could not be completed.
RUNTIME_ERRORS = (BlowUp, BoundViolation, NonConvergence)

SUMMARY_COLUMNS = (
    "value",
    "status",
    "horizon",
    "final_l2",
    "final_h1",
    "max_tame_arg",
    "max_g",
    "tame_measure",
    "energy_margin",
    "gradient_margin",
    "order",
)

_COMMAND_GROUPS = {
    "tamed": [
        CommandGroupDict(name="Running", commands=["run", "sweep"]),
        CommandGroupDict(name="Checking", commands=["verify", "attractor"]),
    ],
}
_OPTION_GROUPS = {
    f"tamed {command}": [
        *[
            OptionGroupDict(name=group, options=[f"--{o}" for o in options])
            for group, options in groups
        ],
        OptionGroupDict(
            name="Output Options",
            options=["--out", "--jobs"],
        ),
        OptionGroupDict(name="Help", options=["--help"]),
    ]
    for command, groups in [
        ("run", [("Required", ["config"]), ("Overrides", ["seed", "checks"])]),
        (
            "sweep",
            [
                ("Required", ["config"]),
                ("Sweep Options", ["axis", "values"]),
                ("Overrides", ["seed", "checks"]),
            ],
        ),
        ("verify", [("Suite Options", ["config", "seed", "checks"])]),
        ("attractor", [("Required", ["config"]), ("Overrides", ["seed"])]),
    ]
}


@click.rich_config(
    help_config=click.RichHelpConfiguration(
        command_groups=_COMMAND_GROUPS,
        option_groups=_OPTION_GROUPS,
        style_commands_table_column_width_ratio=(1, 3),
        max_width=120,
    ),
)
@click.group(
    context_settings=dict(help_option_names=["--help", "-h"]),
    epilog=dedent(
        """
        `tamed verify` runs the whole acceptance suite and is a good first
        thing to try. `tamed run --help` describes configuration files.

        Exit codes are 0 on success, 1 for configuration errors, 2 when a
        run blows up and 3 when a check fails.
        """,
    ),
)
@click.version_option(prog_name="tamed", package_name="tamed-navier-stokes")
@click.option(
    "--log-level",
    "-L",
    help="How verbose should tamed be?",
    envvar="TNS_LOG",
    show_envvar=True,
    default="warning",
    show_default="warning",
    type=click.Choice(
        [
            "debug",
            "info",
            "warning",
            "error",
            "critical",
        ],
        case_sensitive=False,
    ),
)
def main(log_level: str):
    """
    A spectral solver for tamed Navier-Stokes flow on the 3-torus.

    The taming term damps the flow wherever its velocity exceeds a
    threshold, which keeps solutions globally smooth. Each command here
    either integrates such flows from a configuration file or checks that
    the computed flows satisfy the estimates they are known to obey.
    """
    _redirect_structlog(log_level=getattr(logging, log_level.upper()))


def subcommand[**P](fn: Callable[P, int | None]):
    """
    Define a tamed subcommand which returns its exit code.
    """

    @main.command()
    @click.pass_context
    @wraps(fn)
    def run(context: click.Context, *args: P.args, **kwargs: P.kwargs) -> None:
        exit_code = fn(*args, **kwargs)
        context.exit(0 if exit_code is None else exit_code)

    return run


class _CommaSeparated(click.ParamType):
    """
    A comma separated list, each item converted by ``item``.
    """

    name = "list"

    def __init__(self, item: Callable[[str], Any] = str):
        self.item = item

    def convert(
        self,
        value: Any,
        param: click.Parameter | None,
        ctx: click.Context | None,
    ) -> tuple[Any, ...]:
        if not isinstance(value, str):
            return tuple(value)
        try:
            return tuple(
                self.item(each.strip())
                for each in value.split(",")
                if each.strip()
            )
        except ValueError as error:
            self.fail(f"{value!r} is not a list: {error}", param, ctx)


CONFIG = click.option(
    "--config",
    "-c",
    "config_path",
    required=True,
    type=click.Path(path_type=Path, dir_okay=False),
    help="A configuration file of `section.key = value` lines.",
)
OUT = click.option(
    "--out",
    "-o",
    type=click.Path(path_type=Path, file_okay=False),
    help="Where to write artifacts, overriding `output.dir`.",
)
SEED = click.option(
    "--seed",
    "-s",
    type=click.IntRange(min=0),
    help="The seed all randomness flows from, overriding `seed`.",
)
CHECKS_OPTION = click.option(
    "--checks",
    type=_CommaSeparated(),
    metavar="LIST",
    help=(
        "Which checks to run, overriding `checks.enabled`. "
        f"Known checks are {', '.join(CHECKS)}."
    ),
)
JOBS = click.option(
    "--jobs",
    "-j",
    type=click.IntRange(min=1),
    default=1,
    show_default=True,
    help="How many runs (never steps of one run) may proceed at once.",
)


def _load(
    config_path: Path,
    seed: int | None = None,
    checks: Sequence[str] | None = None,
    out: Path | None = None,
) -> RunConfig | None:
    try:
        config = RunConfig.load(config_path)
        return config.with_overrides(seed=seed, checks=checks, out=out)
    except ConfigError as error:
        STDERR.print(error)
        return None


def _exit_code_for(report: DiagnosticsReport) -> ExitCode:
    for record in report.informational:
        if record.margin is not None and record.margin < 0:
            STDERR.print(
                f"[yellow]warning:[/] informational check {record.name} "
                f"has a negative margin ({record.margin:.3e})",
            )
    if report.passed:
        return ExitCode.OK
    names = ", ".join(each.name for each in report.failures)
    STDERR.print(f"[red]Failed checks:[/] {names}")
    return ExitCode.CHECKS


def _checks_for(
    config: RunConfig,
    u0: SpectralField,
    traj: Trajectory,
) -> list[CheckRecord]:
    records = trajectory_checks(
        traj,
        config.checks,
        energy_rtol=config.energy_rtol,
        lq_r=config.lq_r,
    )
    if "threshold" in config.checks:
        records.append(threshold_fixed_point(u0, config.params, config.solver))
    return records


def _integrate(config: RunConfig) -> tuple[SpectralField, Trajectory]:
    u0 = config.initial_field()
    return u0, _integrators.run(u0, config.params, config.solver)


@subcommand
@CONFIG
@OUT
@SEED
@CHECKS_OPTION
def run(
    config_path: Path,
    out: Path | None,
    seed: int | None,
    checks: Sequence[str] | None,
):
    """
    Integrate the configured flow and check it.

    Writes the recorded trajectory as CSV, the final state as a checkpoint
    and the diagnostics report as JSON, all into the output directory.

    Configuration files hold one `section.key = value` per line, with
    sections seed, basis, taming, solver, initial, output and checks.
    `taming.nu`, `solver.dt`, `solver.T` and `initial.preset` are required.
    The vorticity check needs states stored at every step
    (`solver.state_cadence = 1`), and Lq moment checks need the exponents
    listed in `solver.lq`.
    """
    config = _load(config_path, seed=seed, checks=checks, out=out)
    if config is None:
        return ExitCode.CONFIG

    try:
        u0, traj = _integrate(config)
    except INPUT_ERRORS as error:
        STDERR.print(error)
        return ExitCode.CONFIG
    except RUNTIME_ERRORS as error:
        STDERR.print(error)
        return ExitCode.BLOWUP

    report = DiagnosticsReport(
        records=_checks_for(config, u0, traj),
        metadata=dict(config.describe(), command="run"),
    )
    traj.write_csv(config.output["trajectory"])
    save_checkpoint(config.output["checkpoint"], traj.final)
    report.write(config.output["report"])
    STDOUT.print(report)
    return _exit_code_for(report)


def _summary_row(
    value: float,
    traj: Trajectory,
    records: Sequence[CheckRecord],
    order: float | None,
) -> dict[str, Any]:
    margins = {each.name: each.margin for each in records}
    measure, _ = tame_measure(traj.times, traj.tame_arg, traj.params.N)
    return dict(
        value=value,
        status="fail" if any(each.fatal for each in records) else "pass",
        horizon=traj.horizon,
        final_l2=traj.l2[-1],
        final_h1=traj.h1[-1],
        max_tame_arg=traj.tame_arg.max(),
        max_g=traj.g_value.max(),
        tame_measure=measure,
        energy_margin=margins.get("energy"),
        gradient_margin=margins.get("gradient"),
        order=order,
    )


def _summary_csv(rows: Sequence[dict[str, Any]]) -> str:
    def cell(value: Any) -> str:
        if value is None:
            return ""
        if isinstance(value, str):
            return value
        return format_float(value)

    out = io.StringIO()
    out.write(",".join(SUMMARY_COLUMNS) + "\n")
    for row in rows:
        out.write(",".join(cell(row.get(name)) for name in SUMMARY_COLUMNS))
        out.write("\n")
    return out.getvalue()


def _shown(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    return f"{value:.6g}"


def _summary_table(axis: str, rows: Sequence[dict[str, Any]]) -> Table:
    table = Table(title=f"Sweep over {axis}", title_justify="left")
    for name in SUMMARY_COLUMNS:
        table.add_column(name, justify="left" if name == "status" else "right")
    for row in rows:
        table.add_row(*(_shown(row.get(name)) for name in SUMMARY_COLUMNS))
    return table


@subcommand
@CONFIG
@click.option(
    "--axis",
    type=click.Choice(["N", "kappa", "nu", "dt", "n"]),
    help="The parameter to vary, overriding `sweep.axis`.",
)
@click.option(
    "--values",
    type=_CommaSeparated(float),
    metavar="LIST",
    help="The values it takes, overriding `sweep.values`.",
)
@OUT
@SEED
@CHECKS_OPTION
@JOBS
def sweep(
    config_path: Path,
    axis: Axis | None,
    values: Sequence[float] | None,
    out: Path | None,
    seed: int | None,
    checks: Sequence[str] | None,
    jobs: int,
):
    """
    Run the configured flow once per value of one parameter.

    Every run starts from the same initial state (the seed is shared), and
    gets a row of the summary CSV with its headline observables and check
    margins. A dt sweep of successively halved steps also reports the
    observed order of convergence. The first run which fails stops the
    summary, and its row says why.
    """
    config = _load(config_path, seed=seed, checks=checks, out=out)
    if config is None:
        return ExitCode.CONFIG

    spec = config.sweep
    axis = axis or (None if spec is None else spec.axis)
    values = values or (None if spec is None else spec.values)
    if axis is None or not values:
        STDERR.print(
            ConfigError(
                message="a sweep needs an axis and values",
                path=config_path,
                key="sweep",
            ),
        )
        return ExitCode.CONFIG

    try:
        variants = [config.varied(axis, value) for value in values]
    except ConfigError as error:
        STDERR.print(error)
        return ExitCode.CONFIG

    def attempt(variant: RunConfig):
        try:
            return _integrate(variant)
        except TamedError as error:
            return error

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        outcomes = list(pool.map(attempt, variants))

    rows: list[dict[str, Any]] = []
    records: list[CheckRecord] = []
    trajectories: list[Trajectory] = []
    exit_code = ExitCode.OK
    for index, (value, variant, outcome) in enumerate(
        zip(values, variants, outcomes),
    ):
        if isinstance(outcome, TamedError):
            STDERR.print(outcome)
            if isinstance(outcome, RUNTIME_ERRORS):
                status, exit_code = "blow-up", ExitCode.BLOWUP
            else:
                status, exit_code = "error", ExitCode.CONFIG
            rows.append(dict(value=value, status=status))
            break
        u0, traj = outcome
        trajectories.append(traj)
        checked = _checks_for(variant, u0, traj)
        order = None
        if axis == "dt" and len(trajectories) >= 3:
            order = convergence_order(trajectories).details.get("order")
        rows.append(_summary_row(value, traj, checked, order))
        records.extend(
            evolve(each, name=f"{each.name}@{axis}={value:g}")
            for each in checked
        )
        stem = Path(config.output.trajectory)
        traj.write_csv(
            config.output.dir / f"{stem.stem}-{index}{stem.suffix}",
        )

    report = DiagnosticsReport(
        records=records,
        metadata=dict(
            config.describe(),
            command="sweep",
            axis=axis,
            values=list(values),
            completed=len(trajectories),
        ),
    )
    atomic_write(config.output["summary"], _summary_csv(rows))
    report.write(config.output["report"])
    STDOUT.print(_summary_table(axis, rows))
    if exit_code is not ExitCode.OK:
        return exit_code
    return _exit_code_for(report)


@subcommand
@click.option(
    "--config",
    "-c",
    "config_path",
    type=click.Path(path_type=Path, dir_okay=False),
    help="A configuration file whose seed and output directory to use.",
)
@OUT
@SEED
@click.option(
    "--checks",
    type=_CommaSeparated(),
    metavar="LIST",
    help=(
        "Which parts of the suite to run. "
        f"Known parts are {', '.join(_suite.CASES)}."
    ),
)
@JOBS
@click.option("--inject-fault", is_flag=True, default=False, hidden=True)
def verify(
    config_path: Path | None,
    out: Path | None,
    seed: int | None,
    checks: Sequence[str] | None,
    jobs: int,
    inject_fault: bool,
):
    """
    Run the acceptance suite.

    Checks the solver against a brute-force reference integration, checks
    the energy, enstrophy, decay, continuous dependence and symmetry
    properties of tamed flows, and checks that bounded ensembles are
    absorbed. Informational checks never fail the suite, though negative
    margins on them are warned about.
    """
    config = None
    if config_path is not None:
        config = _load(config_path, seed=seed, out=out)
        if config is None:
            return ExitCode.CONFIG
        seed = config.seed

    settings = _suite.SuiteSettings(
        seed=seed or 0,
        jobs=jobs,
        inject_fault=inject_fault,
    )
    try:
        report = _suite.verify(settings, cases=checks)
    except ConfigError as error:
        STDERR.print(error)
        return ExitCode.CONFIG

    if config is not None:
        report.write(config.output["report"])
    elif out is not None:
        report.write(out / "report.json")
    STDOUT.print(report)
    return _exit_code_for(report)


@subcommand
@CONFIG
@OUT
@SEED
@JOBS
def attractor(
    config_path: Path,
    out: Path | None,
    seed: int | None,
    jobs: int,
):
    """
    Run the configured ensemble and check that it is absorbed.

    Every member starts from a random state of H¹ norm `attractor.radius`.
    Checks that each enters and stays in the `attractor.eps` ball and that
    the high-mode tails of the ensemble shrink, then writes the members'
    observables and leading modal coordinates past `attractor.burn_in`.
    """
    config = _load(config_path, seed=seed, out=out)
    if config is None:
        return ExitCode.CONFIG

    settings = config.attractor
    observed = sorted({*settings.ensemble.times, settings.tail_time, 0.0})
    ensemble = evolve(settings.ensemble, times=observed)
    try:
        if not settings.burn_in < config.solver.T:
            raise ConfigError(
                message="the burn-in is not before the horizon",
                path=config_path,
                key="attractor.burn_in",
            )
        trajectories = ensemble.run(
            config.basis,
            config.params,
            config.solver,
            jobs=jobs,
        )
        sample = attractor_sample(
            trajectories,
            settings.ensemble.times,
            config.params,
            settings.burn_in,
            settings.coordinates,
        )
        records = [
            absorbing_record(
                trajectories,
                first_eigenvalue(config.basis),
                eps=settings.eps,
            ),
            tail_record(
                trajectories,
                ensemble.n_list,
                settings.tail_time,
                settings.contraction,
            ),
        ]
    except INPUT_ERRORS as error:
        STDERR.print(error)
        return ExitCode.CONFIG
    except RUNTIME_ERRORS as error:
        STDERR.print(error)
        return ExitCode.BLOWUP

    report = DiagnosticsReport(
        records=records,
        metadata=dict(
            config.describe(),
            command="attractor",
            attractor=settings.describe(),
        ),
    )
    sample.write_csv(config.output["attractor"])
    report.write(config.output["report"])
    STDOUT.print(report)
    return _exit_code_for(report)


def _redirect_structlog(log_level: int, file: TextIO = sys.stderr):
    """
    Reconfigure structlog's defaults to go to the given location.
    """
    structlog.configure(
        processors=[
            structlog.processors.add_log_level,
            structlog.processors.StackInfoRenderer(),
            structlog.dev.set_exc_info,
            structlog.processors.TimeStamper(
                fmt="%Y-%m-%d %H:%M.%S",
                utc=False,
            ),
            structlog.dev.ConsoleRenderer(
                colors=getattr(file, "isatty", lambda: False)(),
            ),
        ],
        logger_factory=structlog.WriteLoggerFactory(file),
        wrapper_class=structlog.make_filtering_bound_logger(log_level),
    )
