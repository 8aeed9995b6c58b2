"""
Reports of which checks passed, and by how much.

Margins follow one sign convention throughout: positive means the checked
inequality holds with room to spare, negative means it is violated by that
much.
"""

from __future__ import annotations

from enum import Enum
from typing import TYPE_CHECKING, Any
import importlib.metadata
import json
import math

from attrs import field, frozen
from rich.table import Table
from rich.text import Text

from tamed._core import atomic_write
from tamed._registry import REPORT_URI, Validator

if TYPE_CHECKING:
    from collections.abc import Iterable, Mapping
    from pathlib import Path


class InvalidReport(Exception):
    """
    The report is invalid.
    """


class DuplicateCheck(InvalidReport):
    """
    A check appeared twice in one report.
    """


class Status(Enum):
    """
    The outcome of a check.

    Only `PASS`, `INFO` and `SKIPPED` let a verification run succeed.
    """

    PASS = "pass"
    FAIL = "fail"
    INFO = "info"
    INCONCLUSIVE = "inconclusive"
    SKIPPED = "skipped"

    @property
    def fatal(self) -> bool:
        return self in {Status.FAIL, Status.INCONCLUSIVE}

    @property
    def style(self) -> str:
        return _STYLES[self]

    @classmethod
    def judge(cls, margin: float, tolerance: float = 0.0) -> Status:
        return cls.PASS if margin >= -tolerance else cls.FAIL


_STYLES = {
    Status.PASS: "green",
    Status.FAIL: "bold red",
    Status.INFO: "cyan",
    Status.INCONCLUSIVE: "yellow",
    Status.SKIPPED: "dim",
}


def _finite_or_none(value: float | None) -> float | None:
    if value is None or not math.isfinite(value):
        return None
    return float(value)


def _plain(value: Any) -> Any:
    """
    JSON-friendly versions of details, which may hold numpy values.
    """
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}  # type: ignore[reportUnknownVariableType]
    if isinstance(value, list | tuple):
        return [_plain(each) for each in value]  # type: ignore[reportUnknownVariableType]
    if hasattr(value, "tolist"):
        return _plain(value.tolist())
    if isinstance(value, float):
        return _finite_or_none(value)
    return value


@frozen
class CheckRecord:
    """
    The outcome of a single check.
    """

    name: str
    status: Status
    margin: float | None = None
    details: Mapping[str, Any] = field(factory=dict)

    @property
    def fatal(self) -> bool:
        return self.status.fatal

    def serializable(self) -> dict[str, Any]:
        return dict(
            name=self.name,
            status=self.status.value,
            margin=_finite_or_none(self.margin),
            details=_plain(dict(self.details)),
        )

    @classmethod
    def from_dict(
        cls,
        name: str,
        status: str,
        margin: float | None = None,
        details: Mapping[str, Any] | None = None,
    ) -> CheckRecord:
        return cls(
            name=name,
            status=Status(status),
            margin=margin,
            details=dict(details or {}),
        )


@frozen(eq=False)
class DiagnosticsReport:  # noqa: PLW1641
    """
    Every enabled check's record, plus what was run to produce them.
    """

    records: tuple[CheckRecord, ...] = field(converter=tuple)
    metadata: Mapping[str, Any] = field(factory=dict)
    version: str = field(
        factory=lambda: _version(),
        repr=False,
    )

    def __attrs_post_init__(self):
        seen: set[str] = set()
        for record in self.records:
            if record.name in seen:
                raise DuplicateCheck(record.name)
            seen.add(record.name)

    def __eq__(self, other: object) -> bool:
        if type(other) is not DiagnosticsReport:
            return NotImplemented
        return self.serializable() == other.serializable()

    @classmethod
    def empty(cls, **metadata: Any) -> DiagnosticsReport:
        return cls(records=(), metadata=metadata)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> DiagnosticsReport:
        Validator.for_uri(REPORT_URI).validated(data)
        return cls(
            records=[CheckRecord.from_dict(**each) for each in data["checks"]],
            metadata=data.get("metadata", {}),
            version=data["version"],
        )

    def __getitem__(self, name: str) -> CheckRecord:
        for record in self.records:
            if record.name == name:
                return record
        raise KeyError(name)

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def with_records(
        self,
        records: Iterable[CheckRecord],
    ) -> DiagnosticsReport:
        return DiagnosticsReport(
            records=[*self.records, *records],
            metadata=self.metadata,
            version=self.version,
        )

    @property
    def failures(self) -> list[CheckRecord]:
        return [each for each in self.records if each.fatal]

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def informational(self) -> list[CheckRecord]:
        return [each for each in self.records if each.status is Status.INFO]

    def serializable(self) -> dict[str, Any]:
        return dict(
            version=self.version,
            passed=self.passed,
            metadata=_plain(dict(self.metadata)),
            checks=[each.serializable() for each in self.records],
        )

    def to_json(self) -> str:
        return json.dumps(self.serializable(), sort_keys=True, indent=2) + "\n"

    def write(self, path: Path) -> None:
        atomic_write(path, self.to_json())

    def __rich__(self) -> Table:
        table = Table(title="Diagnostics", title_justify="left")
        table.add_column("Check", no_wrap=True)
        table.add_column("Status")
        table.add_column("Margin", justify="right")
        for record in self.records:
            margin = "" if record.margin is None else f"{record.margin:.3e}"
            table.add_row(
                record.name,
                Text(record.status.value, style=record.status.style),
                margin,
            )
        return table


def _version() -> str:
    try:
        return importlib.metadata.version("tamed-navier-stokes")
    except importlib.metadata.PackageNotFoundError:
        return "unknown"
