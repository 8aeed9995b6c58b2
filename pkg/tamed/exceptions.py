"""
Errors. Oh no!

A run moves through a sequence of steps, each of which has an exception it
raises when the step fails:

    * reading and validating configuration (`ConfigError`)
    * constructing a basis and fields within it (`StructuralError` for
      shape or basis mismatches, `DomainError` for out-of-range parameters)
    * time stepping (`BlowUp` once the state stops being finite)
    * solving for a Picard fixed point (`NonConvergence`, or
      `BoundViolation` if an iterate breaks an a priori bound)
    * reference integration (`StiffnessError`, `ResolutionCapExceeded`)

Every error here subclasses `TamedError`, and every one knows how to render
itself for humans via rich.
"""

from __future__ import annotations

from pathlib import Path

from attrs import frozen
from diagnostic import DiagnosticError


class TamedError(Exception):
    """
    Base class for errors raised by the solver or its harness.
    """


@frozen
class StructuralError(TamedError):
    """
    A field was used with the wrong shape or with an incompatible basis.
    """

    message: str

    def __str__(self) -> str:
        return self.message

    def __rich__(self):
        return DiagnosticError(
            code="structural-error",
            message=self.message,
            causes=[],
            hint_stmt=(
                "Fields may only be combined when they share a basis. "
                "Grid operations need a torus basis."
            ),
        )


@frozen
class DomainError(TamedError):
    """
    A parameter was outside of the range its operation accepts.
    """

    message: str

    def __str__(self) -> str:
        return self.message

    def __rich__(self):
        return DiagnosticError(
            code="domain-error",
            message=self.message,
            causes=[],
            hint_stmt=None,
        )


@frozen
class BlowUp(TamedError):
    """
    The state stopped being finite (or grew past the blow-up threshold).
    """

    time: float
    reason: str = "non-finite state"

    def __str__(self) -> str:
        return f"{self.reason} after t={self.time!r}"

    def __rich__(self):
        return DiagnosticError(
            code="blow-up",
            message=f"The solution blew up after t={self.time!r}.",
            causes=[self.reason],
            hint_stmt=(
                "Try a smaller time step, a CFL cap, or (for untamed runs) "
                "re-enable taming."
            ),
        )


@frozen
class NonConvergence(TamedError):
    """
    Picard iteration did not reach its tolerance within the iteration cap.
    """

    iterations: int
    increment: float

    def __str__(self) -> str:
        return (
            f"Picard iteration did not converge after {self.iterations} "
            f"iterations (last increment {self.increment!r})"
        )

    def __rich__(self):
        return DiagnosticError(
            code="picard-nonconvergence",
            message=str(self),
            causes=[],
            hint_stmt=(
                "Shorten the Picard window, loosen the tolerance, or raise "
                "the iteration cap."
            ),
        )


@frozen
class BoundViolation(TamedError):
    """
    A Picard iterate broke the energy or gradient bound it must satisfy.
    """

    bound: str
    iterate: int
    time: float
    margin: float

    def __str__(self) -> str:
        return (
            f"Picard iterate {self.iterate} breaks its {self.bound} bound "
            f"by {-self.margin!r} in the window from t={self.time!r}"
        )

    def __rich__(self):
        return DiagnosticError(
            code="picard-bound-violation",
            message=str(self),
            causes=[],
            hint_stmt="Try a smaller time step or a shorter Picard window.",
        )


@frozen
class StiffnessError(TamedError):
    """
    The reference integrator's step size underflowed.
    """

    message: str

    def __str__(self) -> str:
        return self.message

    def __rich__(self):
        return DiagnosticError(
            code="reference-stiffness",
            message="The reference integrator gave up.",
            causes=[self.message],
            hint_stmt="Lower the resolution or loosen the tolerance.",
        )


@frozen
class ResolutionCapExceeded(TamedError):
    """
    The dense reference nonlinearity was asked for too fine a resolution.
    """

    n: int
    cap: int

    def __str__(self) -> str:
        return f"resolution {self.n} exceeds the oracle cap of {self.cap}"

    def __rich__(self):
        return DiagnosticError(
            code="resolution-cap-exceeded",
            message=str(self),
            causes=[],
            hint_stmt="The dense oracle is quadratic in mode count.",
        )


@frozen
class ConfigError(TamedError):
    """
    A configuration file (or override) was invalid.
    """

    message: str
    path: Path | None = None
    line: int | None = None
    key: str | None = None

    def __str__(self) -> str:
        where = "" if self.path is None else f"{self.path}"
        if self.line is not None:
            where += f":{self.line}"
        if self.key is not None:
            where += f" [{self.key}]"
        return f"{where}: {self.message}" if where else self.message

    def __rich__(self):
        return DiagnosticError(
            code="invalid-config",
            message=str(self),
            causes=[],
            hint_stmt=(
                "Configuration files hold one `section.key = value` per "
                "line. Run with --help for the accepted keys."
            ),
        )
