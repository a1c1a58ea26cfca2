from __future__ import annotations

import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from support import T0, key_from, make_entity

from fedcap import wire
from fedcap.capability import verify_chain, verify_token_signature
from fedcap.model import AccessRight, Condition, EntityKind, RevocationScope, VirtualIdentity
from fedcap.pdc import PolicyDecisionCenter
from fedcap.policy import PolicyRule

GOLDEN = Path(__file__).parent / "fixtures" / "golden_token.json"
GOLDEN_VID_O = VirtualIdentity.from_hex("5aafceb95d9d84f307fa9e7469c24f7d8ff2f7b12acc09cd0c1d2d42115d13c6")
GOLDEN_RND0 = bytes.fromhex("e43537b0c71ca6907924a1fe54ceedaa58a983ea19bbea34ae1a484b6ebe7dae")
REFERENCE_KEYS = {"id", "issuer", "issue_time", "issue_sign", "subject", "resource", "starttime", "endtime",
                  "access_right"}


def golden_text() -> str:
    return GOLDEN.read_text()


def test_golden_token_parses_and_verifies():
    tok = wire.decode_token(golden_text())
    assert tok.issue_time == T0 and tok.endtime == T0 + 3600
    assert tok.resource == "127.0.0.1:9000"
    assert [r.key for r in tok.access_right] == [("GET", "/data"), ("PUT", "/sensor/*")]
    assert tok.access_right[0].conditions == (Condition.time_window("09:00", "17:00"),
                                              Condition.client_network("10.0.0.0/8"))
    assert verify_token_signature(tok)
    assert verify_chain(tok, GOLDEN_VID_O, GOLDEN_RND0)


def test_golden_token_round_trip():
    first = wire.decode_token(golden_text())
    again = wire.decode_token(wire.encode_token(first))
    assert again == first
    assert wire.token_to_json(again) == json.loads(golden_text())


def test_golden_carries_every_reference_field():
    assert REFERENCE_KEYS <= set(json.loads(golden_text()))
    assert set(json.loads(golden_text())) == set(wire.TOKEN_KEYS)


def _mutated(fn):
    d = json.loads(golden_text())
    fn(d)
    return json.dumps(d)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.update(extra=1),
        lambda d: d.pop("issuer"),
        lambda d: d.pop("rnd_i"),
        lambda d: d["access_right"][0].update(note="x"),
        lambda d: d["access_right"][0]["conditions"][0].update(tz="UTC"),
        lambda d: d.update(issue_time=str(T0)),
        lambda d: d.update(issue_time=float(T0)),
        lambda d: d.update(issue_time=True),
        lambda d: d.update(issuer=d["issuer"].upper()),
        lambda d: d.update(subject=d["subject"][:-2]),
        lambda d: d.update(id=d["id"].upper()),
        lambda d: d.update(id="not-a-uuid"),
        lambda d: d.update(starttime=d["endtime"] + 1),
        lambda d: d.update(access_right={}),
        lambda d: d["access_right"][0].update(action="PATCH"),
        lambda d: d["access_right"][0].update(resource="data"),
        lambda d: d["access_right"][0]["conditions"][0].update(kind="moon_phase"),
        lambda d: d["access_right"][0]["conditions"][1].update(cidr="10.0.0.0/99"),
    ],
)
def test_malformed_or_unknown_fields_rejected(mutate):
    with pytest.raises(wire.WireError):
        wire.decode_token(_mutated(mutate))


@pytest.mark.parametrize("text", ["", "[]", "null", "{", '{"id": NaN}', "\xff"])
def test_garbage_rejected(text):
    with pytest.raises(wire.WireError):
        wire.decode_token(text)


def test_duplicate_keys_rejected():
    text = golden_text().replace('"resource": "127.0.0.1:9000"',
                                 '"resource": "127.0.0.1:9000", "resource": "127.0.0.1:9001"')
    with pytest.raises(wire.WireError):
        wire.decode_token(text)


def test_encoding_is_compact_and_stable():
    tok = wire.decode_token(golden_text())
    text = wire.encode_token(tok)
    assert " " not in text and text == wire.encode_token(wire.decode_token(text))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["09:00", "12:30", "17:00"]), min_size=2, max_size=2, unique=True),
       st.lists(st.sampled_from(["mon", "tue", "sat"]), min_size=1, unique=True),
       st.sampled_from(["10.0.0.0/8", "192.168.1.0/24", "::1/128"]))
def test_condition_json_round_trip(window, days, cidr):
    start, end = sorted(window)
    for cond in (Condition.time_window(start, end), Condition.weekdays(*days),
                 Condition.client_network(cidr), Condition.env_equals("zone", "icu")):
        assert wire.condition_from_json(wire.condition_to_json(cond)) == cond


def test_rights_may_omit_conditions_on_requests():
    assert wire.rights_from_json([{"action": "GET", "resource": "/x"}]) == (AccessRight("GET", "/x"),)


def test_profile_and_certificate_round_trips(clock):
    pdc = PolicyDecisionCenter(key_from("pdc"), clock)
    _, profile, sign, vid = make_entity(EntityKind.SUBJECT, "alice", role="doctor")
    assert wire.profile_from_json(wire.profile_to_json(profile)) == profile
    dc = pdc.dac.root_certificate()
    assert wire.dc_from_json(wire.dc_to_json(dc)) == dc
    pdc.register_entity(profile, sign)
    rc = pdc.revoke_external_cap(vid, 60)
    back = wire.rc_from_json(wire.rc_to_json(rc))
    assert back == rc and back.scope is RevocationScope.SUBJECT_CAP and back.verify()
    rule = PolicyRule((("role", "doctor"),), vid, (AccessRight("GET", "/data"),), 60,
                      (Condition.env_equals("zone", "icu"),))
    assert PolicyRule.from_json(json.loads(json.dumps(rule.to_json()))) == rule
