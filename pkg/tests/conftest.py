from __future__ import annotations

import pytest
from support import T0, key_from, make_entity

from fedcap.capability import mint_external_cap, mint_internal_cap
from fedcap.clock import ManualClock
from fedcap.crypto import SigningKey
from fedcap.model import AccessRight, Condition, EntityKind


@pytest.fixture
def clock() -> ManualClock:
    return ManualClock(T0)


@pytest.fixture
def issuer_key() -> SigningKey:
    return key_from("issuer")


@pytest.fixture
def subject_vid():
    return make_entity(EntityKind.SUBJECT, "alice", role="doctor")[3]


@pytest.fixture
def object_vid():
    return make_entity(EntityKind.OBJECT, "sensor", address="127.0.0.1:9000")[3]


@pytest.fixture
def incap(object_vid):
    return mint_internal_cap(
        object_vid,
        [AccessRight("GET", "/data"), AccessRight("PUT", "/data"), AccessRight("GET", "/sensor/*")],
    )


@pytest.fixture
def token(incap, subject_vid, issuer_key):
    return mint_external_cap(
        incap, subject_vid, [], (T0, T0 + 3600), issuer_key,
        access_rights=[AccessRight("GET", "/data")], resource="127.0.0.1:9000", now=T0,
        token_id="6f1c1a0e-2b7c-4f57-9c1e-8d2f0a4b5c6d",
    )


@pytest.fixture
def conditioned_token(incap, subject_vid, issuer_key):
    return mint_external_cap(
        incap, subject_vid, [Condition.env_equals("zone", "icu")], (T0, T0 + 3600), issuer_key,
        access_rights=[AccessRight("GET", "/data")], resource="127.0.0.1:9000", now=T0,
    )


# -- acceptance summary --------------------------------------------------------

_acceptance: dict[int, tuple[str, list[str]]] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = report.user_properties and dict(report.user_properties).get("acceptance")
    if not marker:
        return
    number, title = marker
    _acceptance.setdefault(number, (title, []))[1].append(report.outcome)


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("acceptance")
        if m:
            item.user_properties.append(("acceptance", (m.args[0], m.args[1])))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        title, outcomes = _acceptance[number]
        ok = all(o == "passed" for o in outcomes)
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}")
