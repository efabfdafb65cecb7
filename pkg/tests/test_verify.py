import json

import pytest

from pmcflow import geometry as geo
from pmcflow import verify


@pytest.fixture
def broken_sign(monkeypatch):
    monkeypatch.setattr(geo, "EXTRINSIC_SIGN", -1.0)


def test_registry_lists_checks():
    names = verify.available_checks()
    for expected in ("tilt-equivalence", "umbilicity", "foliation", "newton", "schwarzschild-expansion"):
        assert expected in names


def test_filter_by_tag_and_glob():
    rep = verify.verify_suite("tilt")
    assert {r.name for r in rep.results} == {"tilt-equivalence", "tilt-boost-norm"}
    assert rep.ok
    rep = verify.verify_suite("foliation*", threads=1)
    assert {r.name for r in rep.results} == {"foliation", "foliation-closed-forms"}
    assert verify.verify_suite("no-such-check").results == []


def test_report_json_shape():
    rep = verify.verify_suite("umbilicity")
    data = json.loads(rep.to_json())
    assert set(data) == {"umbilicity"}
    assert set(data["umbilicity"]) >= {"pass", "margin", "detail"}


def test_tilt_equivalence_samples():
    worst, viol = verify.tilt_equivalence_samples(samples=2000, seed=3)
    assert viol == 0 and worst <= 1.0


def test_broken_sign_fails_umbilicity_and_foliation(broken_sign):
    rep = verify.verify_suite("umbilicity", threads=1)
    assert not rep.ok
    rep = verify.verify_suite("foliation", threads=1)
    by = {r.name: r for r in rep.results}
    assert not by["foliation"].passed
    # the closed-form check never touches surface geometry
    assert by["foliation-closed-forms"].passed


def test_failing_check_becomes_report_entry(monkeypatch):
    def boom():
        raise RuntimeError("boom")

    monkeypatch.setitem(verify._REGISTRY, "exploding", verify._Check("exploding", boom, ("test",)))
    rep = verify.verify_suite("exploding")
    assert not rep.ok and "RuntimeError" in rep.results[0].detail


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("PMCFLOW_THREADS", "1")
    assert verify.thread_count() == 1
    monkeypatch.setenv("PMCFLOW_THREADS", "100000")
    assert 1 <= verify.thread_count() <= 100000
    monkeypatch.setenv("PMCFLOW_THREADS", "zero")
    assert verify.thread_count() >= 1
