"""
Run configuration files.

A configuration file holds one ``section.key = value`` assignment per line.
Everything after a ``#`` is a comment, and lists are comma separated::

    seed = 12

    basis.n = 16
    taming.nu = 0.1
    taming.N = 4
    solver.dt = 1e-3
    solver.T = 1
    initial.preset = random
    initial.h1 = 1.0
    checks.enabled = energy, gradient, tame-time

Values are read according to the type the configuration schema declares
for their key, after which the nested result is validated against it.
"""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING, Any, Literal

from attrs import evolve, field, frozen

from tamed._attractor import EnsembleSpec
from tamed._diagnostics import ENERGY_RTOL
from tamed._initial import InitialCondition
from tamed._integrators import SolverConfig
from tamed._registry import CONFIG_URI, Validator
from tamed._rhs import TamingParams
from tamed._spectral import TorusBasis
from tamed.exceptions import ConfigError, DomainError

if TYPE_CHECKING:
    from collections.abc import Iterable, Mapping

    from tamed._spectral import SpectralField

Axis = Literal["N", "kappa", "nu", "dt", "n"]

#: Checks a run may enable, in the order they are reported.
CHECKS = (
    "energy",
    "gradient",
    "decay",
    "tame-time",
    "lq-moments",
    "vorticity",
    "threshold",
)

#: Checks enabled when a configuration file doesn't say.
DEFAULT_CHECKS = ("energy", "gradient", "tame-time")

_TRUE, _FALSE = {"true", "yes", "on"}, {"false", "no", "off"}


def _schema_for(schema: Mapping[str, Any], key: str) -> Mapping[str, Any]:
    for part in key.split("."):
        properties = schema.get("properties", {})
        if part not in properties:
            raise KeyError(key)
        schema = properties[part]
    return schema


def _coerce(raw: str, schema: Mapping[str, Any]) -> Any:
    if "enum" in schema:
        for candidate in schema["enum"]:
            if str(candidate) == raw:
                return candidate
        return raw
    match schema.get("type"):
        case "integer":
            try:
                return int(raw)
            except ValueError:
                raise ValueError(f"{raw!r} is not an integer") from None
        case "number":
            try:
                return float(raw)
            except ValueError:
                raise ValueError(f"{raw!r} is not a number") from None
        case "boolean":
            if raw.lower() in _TRUE:
                return True
            if raw.lower() in _FALSE:
                return False
            raise ValueError(f"{raw!r} is not true or false")
        case "array":
            items = schema.get("items", {})
            return [
                _coerce(each.strip(), items)
                for each in raw.split(",")
                if each.strip()
            ]
        case "object":
            raise ValueError("a section cannot be assigned a value")
        case _:
            return raw


@frozen
class ParsedConfig:
    """
    A configuration file's nested contents, and where each key was set.
    """

    data: Mapping[str, Any]
    lines: Mapping[str, int] = field(factory=dict)
    path: Path | None = None

    def error(self, message: str, key: str | None = None) -> ConfigError:
        line = None if key is None else self.lines.get(key)
        return ConfigError(message=message, path=self.path, line=line, key=key)


def read_config(text: str, path: Path | None = None) -> ParsedConfig:
    """
    Split a configuration file into nested sections, coercing each value.

    Raises `ConfigError` (pointing at the offending line) for malformed
    lines, unknown or repeated keys, and values of the wrong type, and for
    anything the configuration schema rejects afterwards.
    """
    validator = Validator.for_uri(CONFIG_URI)
    data: dict[str, Any] = {}
    lines: dict[str, int] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        content = line.partition("#")[0].strip()
        if not content:
            continue
        key, equals, raw = (part.strip() for part in content.partition("="))
        if not equals or not key:
            raise ConfigError(
                message=f"expected `key = value`, not {content!r}",
                path=path,
                line=number,
            )
        if key in lines:
            raise ConfigError(
                message=f"already set on line {lines[key]}",
                path=path,
                line=number,
                key=key,
            )
        try:
            schema = _schema_for(validator.schema, key)
        except KeyError:
            raise ConfigError(
                message="unknown key",
                path=path,
                line=number,
                key=key,
            ) from None
        try:
            value = _coerce(raw, schema)
        except ValueError as error:
            raise ConfigError(
                message=str(error),
                path=path,
                line=number,
                key=key,
            ) from None

        *sections, name = key.split(".")
        within = data
        for section in sections:
            within = within.setdefault(section, {})
        within[name] = value
        lines[key] = number

    parsed = ParsedConfig(data=data, lines=lines, path=path)
    for error in validator.errors(data):
        key = ".".join(str(each) for each in error.absolute_path)
        if error.validator == "required":
            missing = str(error.message).split("'")[1]
            key = f"{key}.{missing}" if key else missing
            raise parsed.error(f"missing required key {key!r}", key=key)
        key = ".".join(
            str(each) for each in error.absolute_path if isinstance(each, str)
        )
        raise parsed.error(error.message, key=key or None)
    return parsed


def _checks(
    names: Iterable[str],
    parsed: ParsedConfig | None = None,
) -> tuple[str, ...]:
    names = tuple(names)
    unknown = [each for each in names if each not in CHECKS]
    if unknown:
        message = (
            f"unknown check(s) {', '.join(unknown)}; "
            f"known checks are {', '.join(CHECKS)}"
        )
        if parsed is None:
            raise ConfigError(message=message, key="checks")
        raise parsed.error(message, key="checks.enabled")
    return tuple(each for each in CHECKS if each in names)


@frozen
class OutputPaths:
    """
    Where a run's artifacts go, all relative to ``dir``.
    """

    dir: Path = field(default=Path("out"), converter=Path)
    trajectory: str = "trajectory.csv"
    checkpoint: str = "final.tns"
    report: str = "report.json"
    summary: str = "summary.csv"
    attractor: str = "attractor.csv"

    def __getitem__(self, artifact: str) -> Path:
        return self.dir / getattr(self, artifact)


@frozen
class SweepSpec:
    axis: Axis
    values: tuple[float, ...] = field(
        converter=lambda values: tuple(float(each) for each in values),
    )

    def __attrs_post_init__(self):
        if not self.values:
            raise DomainError("a sweep needs at least one value")
        if self.axis == "n" and any(not v.is_integer() for v in self.values):
            raise DomainError("resolutions must be integers")


@frozen
class AttractorSettings:
    """
    The ensemble and thresholds used by ``tamed attractor``.
    """

    ensemble: EnsembleSpec = EnsembleSpec()
    burn_in: float = 0.0
    eps: float = 0.01
    t_tail: float | None = None
    contraction: float = 0.1
    coordinates: int = 8

    @property
    def tail_time(self) -> float:
        if self.t_tail is None:
            return self.ensemble.times[0]
        return self.t_tail

    def describe(self) -> dict[str, Any]:
        return dict(
            self.ensemble.describe(),
            burn_in=self.burn_in,
            eps=self.eps,
            t_tail=self.tail_time,
            contraction=self.contraction,
        )


@frozen
class RunConfig:
    """
    Everything needed to reproduce a run, from one configuration file.
    """

    basis: TorusBasis
    params: TamingParams
    solver: SolverConfig
    initial: InitialCondition = InitialCondition()
    seed: int = 0
    output: OutputPaths = OutputPaths()
    checks: tuple[str, ...] = DEFAULT_CHECKS
    energy_rtol: float = ENERGY_RTOL
    lq_r: float = 2.0
    sweep: SweepSpec | None = None
    attractor: AttractorSettings = AttractorSettings()

    @classmethod
    def from_parsed(cls, parsed: ParsedConfig) -> RunConfig:
        """
        Build every component, blaming configuration keys for bad values.
        """
        sections = {
            name: dict(parsed.data.get(name, {}))
            for name in (
                "basis",
                "taming",
                "solver",
                "initial",
                "output",
                "checks",
                "sweep",
                "attractor",
            )
        }
        seed = parsed.data.get("seed", 0)
        base = Path() if parsed.path is None else parsed.path.parent

        initial = sections["initial"]
        if "path" in initial:
            path = base / initial["path"]
            if not path.is_file():
                raise parsed.error(f"{path} does not exist", "initial.path")
            initial["path"] = path

        solver = sections["solver"]
        if "lq" in solver:
            solver["lq_exponents"] = solver.pop("lq")

        attractor = sections["attractor"]
        ensemble = {
            key: attractor.pop(key)
            for key in ("radius", "count", "slope", "times", "n_list")
            if key in attractor
        }
        checks = sections["checks"]
        sweep = sections["sweep"]

        def build(section: str, make: Any, **kwargs: Any) -> Any:
            try:
                return make(**kwargs)
            except DomainError as error:
                raise parsed.error(error.message, key=section) from None

        return cls(
            seed=seed,
            basis=build("basis", TorusBasis, **sections["basis"]),
            params=build("taming", TamingParams, **sections["taming"]),
            solver=build("solver", SolverConfig, **solver),
            initial=build("initial", InitialCondition, **initial),
            output=OutputPaths(**sections["output"]),
            checks=_checks(checks.get("enabled", DEFAULT_CHECKS), parsed),
            energy_rtol=checks.get("energy_rtol", ENERGY_RTOL),
            lq_r=checks.get("lq_r", 2.0),
            sweep=build("sweep", SweepSpec, **sweep) if sweep else None,
            attractor=build(
                "attractor",
                AttractorSettings,
                ensemble=build(
                    "attractor",
                    EnsembleSpec,
                    seed=seed,
                    **ensemble,
                ),
                **attractor,
            ),
        )

    @classmethod
    def load(cls, path: Path) -> RunConfig:
        try:
            text = path.read_text()
        except OSError as error:
            raise ConfigError(message=str(error), path=path) from None
        return parse_config(text, path)

    def with_overrides(
        self,
        seed: int | None = None,
        checks: Iterable[str] | None = None,
        out: Path | None = None,
    ) -> RunConfig:
        """
        Apply command line overrides, which win over the file.
        """
        changes: dict[str, Any] = {}
        if seed is not None:
            changes.update(
                seed=seed,
                attractor=evolve(
                    self.attractor,
                    ensemble=evolve(self.attractor.ensemble, seed=seed),
                ),
            )
        if checks is not None:
            changes["checks"] = _checks(checks)
        if out is not None:
            changes["output"] = evolve(self.output, dir=out)
        return evolve(self, **changes)

    def varied(self, axis: Axis, value: float) -> RunConfig:
        """
        This configuration with one sweep axis set to ``value``.
        """
        try:
            match axis:
                case "N" | "kappa" | "nu":
                    params = evolve(self.params, **{axis: value})
                    return evolve(self, params=params)
                case "dt":
                    return evolve(self, solver=evolve(self.solver, dt=value))
                case "n":
                    return evolve(self, basis=evolve(self.basis, n=int(value)))
                case _:
                    raise ConfigError(
                        message=f"{axis!r} is not a sweep axis",
                        key="sweep.axis",
                    )
        except DomainError as error:
            raise ConfigError(
                message=error.message,
                key=f"sweep.{axis}",
            ) from None

    def initial_field(self) -> SpectralField:
        try:
            return self.initial.build(self.basis, seed=self.seed)
        except DomainError as error:
            raise ConfigError(message=error.message, key="initial") from None

    def describe(self) -> dict[str, Any]:
        return dict(
            seed=self.seed,
            basis=self.basis.describe(),
            taming=self.params.describe(),
            solver=self.solver.describe(),
            initial=self.initial.describe(),
            checks=list(self.checks),
        )


def parse_config(text: str, path: Path | None = None) -> RunConfig:
    """
    Parse and validate a configuration file's contents into a `RunConfig`.
    """
    return RunConfig.from_parsed(read_config(text, path))
