"""The HTTP layer, exercised with every service on an in-process thread."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor

import pytest
from support import T0, key_from, make_entity, make_profile

from fedcap import wire
from fedcap.capability import owner_signature
from fedcap.clock import ManualClock
from fedcap.coordinator import Coordinator
from fedcap.model import AccessRight, EntityKind
from fedcap.pdc import PolicyDecisionCenter
from fedcap.policy import PolicyRule
from fedcap.provider import TOKEN_HEADER, ProviderConfig, ServiceProvider
from fedcap.services import (
    COORDINATOR_DEFAULTS,
    HttpPdcLink,
    build_coordinator_app,
    build_pdc_app,
    build_provider_app,
    load_config,
    static_handler,
)
from fedcap.web import Client, serve

GET = AccessRight("GET", "/data")


def url_of(server) -> str:
    host, port = server.server_address[:2]
    return f"http://{host}:{port}"


@pytest.fixture
def stack():
    clock = ManualClock(T0)
    servers = []

    def up(app):
        srv = serve(app, poll_interval=0.02)
        servers.append(srv)
        return url_of(srv)

    pdc = PolicyDecisionCenter(key_from("pdc"), clock)
    pdc_url = up(build_pdc_app(pdc))
    coord = Coordinator(key_from("c1"), HttpPdcLink(pdc_url), pdc.key.public_bytes, domain_id="domain-1",
                        clock=clock, attributes=(("name", "c1"),))
    coord_url = up(build_coordinator_app(coord))
    coord.pdc_link.callback = coord_url
    provider = ServiceProvider(ProviderConfig(root_key=pdc.key.public_bytes,
                                              handlers={"/data": static_handler(42)}), clock)
    provider_url = up(build_provider_app(provider, expose_baseline=True))

    pdc_c, coord_c, prov_c = Client(pdc_url), Client(coord_url), Client(provider_url)
    okey = key_from("sensor")
    oprofile = make_profile(EntityKind.OBJECT, "sensor", okey, address=provider_url.removeprefix("http://"))
    obj = wire.vid_from_json(pdc_c.expect("POST", "/register", {
        "profile": wire.profile_to_json(oprofile), "owner_sign": owner_signature(oprofile, okey).hex()})["vid"])
    provider.config.vid = obj
    _, sp, ss, alice = make_entity(EntityKind.SUBJECT, "alice", role="doctor")
    pdc_c.expect("POST", "/register", {"profile": wire.profile_to_json(sp), "owner_sign": ss.hex()})
    pdc_c.expect("POST", "/register", {"profile": wire.profile_to_json(coord.profile),
                                       "owner_sign": coord.owner_sign.hex()})
    pdc_c.expect("POST", "/admin/incap", {"object": obj.hex, "access_rights": [wire.access_right_to_json(GET)]})
    rule = PolicyRule((("role", "doctor"),), obj, (GET,), 600).to_json()
    pdc_c.expect("POST", "/admin/rule", rule)
    coord_c.expect("POST", "/admin/rule", rule)
    yield {"pdc": pdc, "coord": coord, "provider": provider, "alice": alice, "obj": obj,
           "pdc_c": pdc_c, "coord_c": coord_c, "prov_c": prov_c, "coord_url": coord_url,
           "provider_url": provider_url}
    for c in (pdc_c, coord_c, prov_c):
        c.close()
    with ThreadPoolExecutor(len(servers)) as pool:
        list(pool.map(lambda srv: (srv.shutdown(), srv.server_close()), servers))


def request_body(s):
    return {"subject": s["alice"].hex, "object": s["obj"].hex, "access_right": [wire.access_right_to_json(GET)]}


def fetch(s, token_json, path="/data"):
    headers = {TOKEN_HEADER: json.dumps(token_json)} if token_json is not None else {}
    status, body, hdrs = s["prov_c"].raw("GET", path, headers=headers)
    return status, json.loads(body), hdrs


def test_pdc_token_grants_over_http(stack):
    tok = stack["pdc_c"].expect("POST", "/cap/request", request_body(stack))
    status, body, headers = fetch(stack, tok)
    assert status == 200 and body == {"resource": "/data", "data": 42}
    assert "signature;dur=" in headers["Server-Timing"]


def test_missing_token_is_401_and_deny_is_403(stack):
    assert fetch(stack, None)[0] == 401
    tok = stack["pdc_c"].expect("POST", "/cap/request", request_body(stack))
    tok["endtime"] = tok["starttime"] + 1
    status, body, _ = fetch(stack, tok)
    assert status == 403 and body["stage"] == "signature"


def test_baseline_route(stack):
    status, body, headers = fetch(stack, None, "/_baseline/data")
    assert status == 200 and body["data"] == 42 and "Server-Timing" not in headers


def test_duplicate_registration_is_409(stack):
    s = stack
    status, _ = s["pdc_c"].call("POST", "/register", {"profile": wire.profile_to_json(s["coord"].profile),
                                                      "owner_sign": s["coord"].owner_sign.hex()})
    assert status == 409


def test_bad_input_is_400(stack):
    assert stack["pdc_c"].call("POST", "/cap/request", {"subject": "zz"})[0] == 400
    assert stack["pdc_c"].call("POST", "/register", {"profile": {}})[0] == 400


def test_rejected_issuance_is_403(stack):
    body = request_body(stack)
    body["access_right"] = [{"action": "PUT", "resource": "/data"}]
    assert stack["pdc_c"].call("POST", "/cap/request", body)[0] == 403


def test_sync_requires_proof(stack):
    assert stack["pdc_c"].call("GET", "/sync?since=0")[0] == 401
    proof = stack["coord"].claim("sync").proof
    status, _ = stack["pdc_c"].call("GET", "/sync?since=0", headers={"X-Key-Proof": json.dumps(proof.to_json())})
    assert status == 403  # not yet delegated


def test_delegation_then_coordinator_issuance_and_revocation(stack):
    s = stack
    out = s["pdc_c"].expect("POST", "/admin/delegate", {"coordinator": s["coord_url"]})
    assert out["vid"] == s["coord"].vid.hex
    info = s["coord_c"].expect("GET", "/_admin/info")
    assert info["active"] and info["synced_version"] == s["pdc"].version
    pool = s["coord_c"].expect("GET", "/admin/pool")
    assert pool["state"] == s["pdc"].pool.state_bytes().hex()

    s["coord_c"].expect("POST", "/provider/register", {"vid": s["obj"].hex,
                                                       "address": s["provider_url"].removeprefix("http://")})
    tok = s["coord_c"].expect("POST", "/cap/request", request_body(s))
    assert tok["issuer"] == s["coord"].key.public_bytes.hex()
    assert fetch(s, tok)[0] == 200

    rev = s["pdc_c"].expect("POST", "/cap/revoke", {"subject": s["alice"].hex, "ttl": 120})
    assert rev["delivery"][s["coord"].vid.hex] == {s["obj"].hex: "ok"}
    status, body, _ = fetch(s, tok)
    assert status == 403 and body["stage"] == "revocation"

    s["coord_c"].expect("POST", "/_admin/clock", {"advance": 120})
    fresh = s["coord_c"].expect("POST", "/cap/request", request_body(s))
    assert fetch(s, fresh)[0] == 200

    out = s["pdc_c"].expect("POST", "/delegation/revoke", {"old_vid": s["coord"].vid.hex})
    assert out["previous"] == {s["obj"].hex: "ok"}
    assert s["coord_c"].call("POST", "/cap/request", request_body(s))[0] == 403
    status, body, _ = fetch(s, fresh)
    assert status == 403 and body["detail"] == "issuer nullified"


def test_revocation_pushed_directly_without_coordinator(stack):
    s = stack
    tok = s["pdc_c"].expect("POST", "/cap/request", request_body(s))
    rev = s["pdc_c"].expect("POST", "/cap/revoke", {"subject": s["alice"].hex, "ttl": 60})
    assert rev["delivery"]["direct"] == {s["obj"].hex: "ok"}
    assert fetch(s, tok)[0] == 403


def test_provider_fault_injection(stack):
    s = stack
    s["prov_c"].expect("POST", "/_admin/fault", {"down": True})
    assert fetch(s, None)[0] == 503
    s["prov_c"].expect("POST", "/_admin/fault", {"down": False})
    assert fetch(s, None)[0] == 401


def test_metrics_endpoint(stack):
    s = stack
    tok = s["pdc_c"].expect("POST", "/cap/request", request_body(s))
    fetch(s, tok)
    report = s["prov_c"].expect("GET", "/metrics/stages")
    assert report["invocations"]["signature"] == 1
    s["prov_c"].expect("POST", "/metrics/reset")
    assert s["prov_c"].expect("GET", "/metrics/stages")["requests"] == 0


def test_load_config_layers(tmp_path, monkeypatch):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"domain_id": "ward-7", "sync_period": 2}))
    monkeypatch.setenv("FEDCAP_SYNC_PERIOD", "0.5")
    monkeypatch.setenv("FEDCAP_NAME", "c9")
    cfg = load_config(str(path), COORDINATOR_DEFAULTS)
    assert (cfg["domain_id"], cfg["sync_period"], cfg["name"]) == ("ward-7", 0.5, "c9")
    assert cfg["pdc_url"] == COORDINATOR_DEFAULTS["pdc_url"]
