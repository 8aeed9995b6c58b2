import pytest

from tamed import _suite
from tamed._report import CheckRecord, Status
from tamed._suite import SuiteSettings, verify
from tamed.exceptions import BlowUp, ConfigError


def test_unknown_case():
    with pytest.raises(ConfigError):
        verify(cases=["energy", "nonsense"])


def test_kappa_sweep_is_reported():
    report = verify(SuiteSettings(seed=3), cases=["kappa"])
    (record,) = report.records
    assert record.name == "kappa-sweep"
    assert record.status is Status.INFO
    assert set(record.details["thresholds"]) == {"2", "4", "6"}
    assert report.informational == [record]


def test_galilean_symmetry_holds_to_round_off():
    report = verify(cases=["symmetries"])
    galilean = report["symmetry-galilean"]
    assert galilean.status is Status.PASS
    assert galilean.details["tolerance"] == 1e-8
    assert galilean.details["error"] <= 1e-8


def test_a_raising_case_fails_alone(monkeypatch):
    def broken(settings):
        raise BlowUp(time=0.5)

    def fine(settings):
        return [CheckRecord(name="fine", status=Status.PASS)]

    monkeypatch.setitem(_suite.CASES, "broken", broken)
    monkeypatch.setitem(_suite.CASES, "fine", fine)
    report = verify(cases=["broken", "fine"])
    assert report["broken"].status is Status.FAIL
    assert report["fine"].status is Status.PASS


def test_metadata_names_the_cases():
    report = verify(SuiteSettings(seed=7), cases=["kappa"])
    assert report.metadata["suite"] == ["kappa"]
    assert report.metadata["seed"] == 7
