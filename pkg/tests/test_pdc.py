from __future__ import annotations

import pytest
from support import T0, delegate, key_from, make_coordinator, make_entity

from fedcap.authz import Authorizer, RequestContext
from fedcap.capability import verify_chain, verify_token_signature
from fedcap.errors import AuthorizationFailure, DuplicateEntity, NotFound, Rejected
from fedcap.model import AccessRight, Condition, EntityKind, RevocationList
from fedcap.pdc import PolicyDecisionCenter, SyncDelta
from fedcap.policy import PolicyRule

GET, PUT, DEL = AccessRight("GET", "/data"), AccessRight("PUT", "/data"), AccessRight("DELETE", "/data")


@pytest.fixture
def world(clock):
    pdc = PolicyDecisionCenter(key_from("pdc"), clock)
    _, alice_p, alice_s, alice = make_entity(EntityKind.SUBJECT, "alice", role="doctor")
    _, bob_p, bob_s, bob = make_entity(EntityKind.SUBJECT, "bob", role="nurse")
    _, obj_p, obj_s, obj = make_entity(EntityKind.OBJECT, "sensor", address="127.0.0.1:9000")
    for p, s in ((alice_p, alice_s), (bob_p, bob_s), (obj_p, obj_s)):
        pdc.register_entity(p, s)
    pdc.publish_internal_cap(obj, [GET, PUT])
    return pdc, alice, bob, obj


def test_duplicate_registration_rejected(world):
    pdc, *_ = world
    _, profile, sign, _ = make_entity(EntityKind.SUBJECT, "alice", role="doctor")
    with pytest.raises(DuplicateEntity):
        pdc.register_entity(profile, sign)


def test_pdc_registers_itself(world):
    pdc, *_ = world
    assert pdc.lookup_profile(pdc.vid).entity_kind is EntityKind.PDC


def test_object_addresses(world):
    pdc, _, _, obj = world
    assert pdc.object_addresses() == [(obj, "domain-1", "127.0.0.1:9000")]


def test_publish_requires_registered_object(world):
    pdc, *_ = world
    _, _, _, ghost = make_entity(EntityKind.OBJECT, "ghost")
    with pytest.raises(NotFound):
        pdc.publish_internal_cap(ghost, [GET])


def test_issued_token_grants_intersection_and_verifies(world):
    pdc, alice, _, obj = world
    pdc.add_rule(PolicyRule((("role", "doctor"),), obj, (GET, DEL), 600))
    tok = pdc.issue_external_cap(alice, obj, [GET, PUT, DEL])
    assert [r.key for r in tok.access_right] == [GET.key]
    assert tok.endtime - tok.starttime == 600 and tok.resource == "127.0.0.1:9000"
    assert verify_token_signature(tok) and tok.issuer == pdc.key.public_bytes
    incap = pdc.pool.get(obj)
    assert verify_chain(tok, incap.vid_o, incap.rnd0)
    ctx = RequestContext("GET", "/data", "127.0.0.1", T0 + 1)
    assert Authorizer().authorize(tok, ctx, RevocationList()).granted


def test_rule_conditions_are_attached(world):
    pdc, alice, _, obj = world
    cond = Condition.env_equals("zone", "icu")
    pdc.add_rule(PolicyRule((("role", "doctor"),), obj, (GET,), 60, (cond,)))
    assert pdc.issue_external_cap(alice, obj, [GET]).access_right[0].conditions == (cond,)


@pytest.mark.parametrize(
    "rules, subject, match",
    [
        ([], "alice", "no policy rule"),
        ([PolicyRule((("role", "doctor"),), None, (GET,))], "bob", "no policy rule"),
        ([PolicyRule((("role", "doctor"),), None, ())], "alice", "explicitly denied"),
        ([PolicyRule((("role", "doctor"),), None, (DEL,))], "alice", "not granted"),
    ],
)
def test_issuance_rejections(world, rules, subject, match):
    pdc, alice, bob, obj = world
    pdc.load_rules([PolicyRule(r.subject_match, obj, r.granted) for r in rules])
    with pytest.raises(Rejected, match=match):
        pdc.issue_external_cap({"alice": alice, "bob": bob}[subject], obj, [GET, DEL])


def test_first_matching_rule_wins(world):
    pdc, alice, _, obj = world
    pdc.load_rules([
        PolicyRule((("role", "doctor"),), obj, ()),
        PolicyRule((), obj, (GET,)),
    ])
    with pytest.raises(Rejected, match="explicitly denied"):
        pdc.issue_external_cap(alice, obj, [GET])


def test_unregistered_parties_and_missing_incap(world):
    pdc, alice, _, obj = world
    pdc.add_rule(PolicyRule((), obj, (GET,)))
    _, _, _, ghost = make_entity(EntityKind.SUBJECT, "ghost")
    with pytest.raises(Rejected, match="subject"):
        pdc.issue_external_cap(ghost, obj, [GET])
    with pytest.raises(Rejected, match="object is not"):
        pdc.issue_external_cap(alice, ghost, [GET])
    pdc.revoke_internal_cap(obj)
    with pytest.raises(Rejected, match="internal capability"):
        pdc.issue_external_cap(alice, obj, [GET])


def test_revoke_external_cap_requires_known_subject(world):
    pdc, *_ = world
    _, _, _, ghost = make_entity(EntityKind.SUBJECT, "ghost")
    with pytest.raises(NotFound):
        pdc.revoke_external_cap(ghost, 60)


def test_delta_since_contains_only_changes(world):
    pdc, alice, _, obj = world
    v = pdc.version
    assert pdc.delta_since(v).empty
    cert = pdc.revoke_external_cap(alice, 60)
    pdc.revoke_internal_cap(obj)
    delta = pdc.delta_since(v)
    assert delta.revocations == [cert] and delta.pool == [(obj, None)] and not delta.profiles
    assert SyncDelta.from_json(delta.to_json()) == delta
    assert len(pdc.delta_since(0).profiles) == 4


def test_sync_requires_active_delegation(world):
    pdc, *_ = world
    c1 = make_coordinator(pdc, "c1", "domain-1")
    with pytest.raises(AuthorizationFailure):
        c1.sync()
    delegate(pdc, c1)
    c1.sync()
    assert c1.registry.pool.state_bytes() == pdc.pool.state_bytes()


def test_profiles_persist_across_restarts(tmp_path, clock):
    pdc = PolicyDecisionCenter(key_from("pdc"), clock, store_path=tmp_path)
    _, profile, sign, vid = make_entity(EntityKind.SUBJECT, "alice")
    pdc.register_entity(profile, sign)
    again = PolicyDecisionCenter(key_from("pdc"), clock, store_path=tmp_path)
    assert again.lookup_profile(vid) == profile
    with pytest.raises(DuplicateEntity):
        again.register_entity(profile, sign)
    again.profiles.snapshot()
    assert (tmp_path / "profiles.log.jsonl").read_text() == ""
    third = PolicyDecisionCenter(key_from("pdc"), clock, store_path=tmp_path)
    assert third.lookup_profile(vid) == profile and len(third.profiles) == 2
