import json

from hypothesis import given
import numpy as np
import pytest

from tamed import hypothesis as strategies
from tamed._registry import REPORT_URI, Validator
from tamed._report import (
    CheckRecord,
    DiagnosticsReport,
    DuplicateCheck,
    Status,
)

ENERGY = CheckRecord(name="energy", status=Status.PASS, margin=0.5)
GRADIENT = CheckRecord(name="gradient", status=Status.FAIL, margin=-1e-3)
MOMENTS = CheckRecord(name="lq-moments-4", status=Status.INFO, margin=-2.0)


def test_judge():
    assert Status.judge(0.0) is Status.PASS
    assert Status.judge(-1e-9) is Status.FAIL
    assert Status.judge(-1e-9, tolerance=1e-8) is Status.PASS


@pytest.mark.parametrize(
    "status, fatal",
    [
        (Status.PASS, False),
        (Status.INFO, False),
        (Status.SKIPPED, False),
        (Status.FAIL, True),
        (Status.INCONCLUSIVE, True),
    ],
)
def test_fatal(status, fatal):
    assert status.fatal is fatal


def test_duplicate_checks():
    with pytest.raises(DuplicateCheck):
        DiagnosticsReport(records=[ENERGY, ENERGY])


def test_passed():
    assert DiagnosticsReport(records=[ENERGY, MOMENTS]).passed


def test_failures():
    report = DiagnosticsReport(records=[ENERGY, GRADIENT, MOMENTS])
    assert not report.passed
    assert report.failures == [GRADIENT]
    assert report.informational == [MOMENTS]


def test_empty_report_passes():
    assert DiagnosticsReport.empty(seed=3).passed


def test_lookup():
    report = DiagnosticsReport(records=[ENERGY, GRADIENT])
    assert report["gradient"] == GRADIENT
    with pytest.raises(KeyError):
        report["decay"]


def test_with_records():
    report = DiagnosticsReport(records=[ENERGY]).with_records([GRADIENT])
    assert list(report) == [ENERGY, GRADIENT]


def test_nonfinite_margins_become_null():
    record = CheckRecord(name="decay", status=Status.FAIL, margin=np.nan)
    assert record.serializable()["margin"] is None


def test_numpy_details_serialize():
    record = CheckRecord(
        name="tame-time-sweep",
        status=Status.PASS,
        margin=np.float64(0.1),
        details=dict(measures=np.array([0.5, np.inf]), count=np.int64(2)),
    )
    serialized = json.loads(json.dumps(record.serializable()))
    assert serialized["details"] == dict(measures=[0.5, None], count=2)


def test_json_is_valid_and_sorted():
    report = DiagnosticsReport(
        records=[ENERGY, GRADIENT],
        metadata=dict(seed=1),
    )
    data = json.loads(report.to_json())
    assert Validator.for_uri(REPORT_URI).is_valid(data)
    expected = json.dumps(data, sort_keys=True, indent=2) + "\n"
    assert report.to_json() == expected
    assert data["passed"] is False


def test_write(tmp_path):
    report = DiagnosticsReport(records=[ENERGY])
    path = tmp_path / "report.json"
    report.write(path)
    assert DiagnosticsReport.from_dict(json.loads(path.read_text())) == report


@given(strategies.reports())
def test_reports_round_trip_through_json(report):
    loaded = DiagnosticsReport.from_dict(json.loads(report.to_json()))
    assert loaded == report
    assert loaded.passed == report.passed


@given(strategies.reports())
def test_passed_iff_nothing_is_fatal(report):
    assert report.passed == all(not each.fatal for each in report)
