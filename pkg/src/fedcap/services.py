"""HTTP front ends for the PDC, coordinators and service providers.

Each ``build_*`` function wires a domain object to a :class:`~fedcap.web.JsonApp`;
the ``*_main`` entry points add config loading, key files and process
lifecycle.  A started service prints one ``FEDCAP-READY {json}`` line on
stdout so a supervisor can learn its URL, VID and public key.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import sys
import threading
import time
from pathlib import Path
from typing import Any

from . import wire
from .capability import compute_vid, owner_signature
from .clock import Clock
from .coordinator import Coordinator
from .crypto import SigningKey, load_or_create_key
from .delegation import Claim, DelegationError, KeyProof
from .errors import AuthorizationFailure, DuplicateEntity, NotFound, Rejected
from .model import EntityKind, Profile, RevocationCertificate
from .pdc import PolicyDecisionCenter, SyncDelta
from .policy import PolicyRule
from .provider import ProviderConfig, ServiceProvider
from .web import Client, HttpError, JsonApp, Reply, Request, post_once, serve

log = logging.getLogger(__name__)

READY_PREFIX = "FEDCAP-READY "

PDC_DEFAULTS: dict[str, Any] = {
    "listen": "127.0.0.1:8700",
    "key_file": None,
    "policy_file": None,
    "store_dir": None,
    "dc_lifetime": 24 * 3600,
    "clock_offset": 0,
}
COORDINATOR_DEFAULTS: dict[str, Any] = {
    "listen": "127.0.0.1:8710",
    "key_file": None,
    "pdc_url": "http://127.0.0.1:8700",
    "pdc_public_key": None,
    "domain_id": "domain-1",
    "name": "coordinator",
    "policy_file": None,
    "sync_period": 10.0,
    "clock_offset": 0,
}
PROVIDER_DEFAULTS: dict[str, Any] = {
    "listen": "127.0.0.1:8720",
    "key_file": None,
    "pdc_url": None,
    "root_key": None,
    "trusted_keys": [],
    "coordinators": [],
    "name": "provider",
    "domain_id": "domain-1",
    "environment": {},
    "resources": {"/data": {"value": 42}},
    "expose_detail": True,
    "expose_baseline": False,
    "artificial_delay_ms": 0.0,
    "skew": 30,
    "clock_offset": 0,
}


def load_config(path: str | None, defaults: dict[str, Any], env_prefix: str = "FEDCAP_") -> dict[str, Any]:
    """Defaults, overlaid by a JSON file, overlaid by ``FEDCAP_<KEY>`` variables."""
    cfg = dict(defaults)
    if path:
        cfg.update(json.loads(Path(path).read_text()))
    for key, value in list(cfg.items()):
        raw = os.environ.get(env_prefix + key.upper())
        if raw is None:
            continue
        default = defaults.get(key, value)
        if isinstance(default, bool):
            cfg[key] = raw.lower() in ("1", "true", "yes", "on")
        elif isinstance(default, (int, float)) and not isinstance(default, bool):
            cfg[key] = type(default)(raw)
        elif isinstance(default, (dict, list)):
            cfg[key] = json.loads(raw)
        else:
            cfg[key] = raw
    return cfg


def _split_listen(listen: str) -> tuple[str, int]:
    host, _, port = listen.rpartition(":")
    return host or "127.0.0.1", int(port)


def _vid(value: Any):
    try:
        return wire.vid_from_json(value)
    except wire.WireError as exc:
        raise HttpError(400, str(exc)) from exc


def _parse(fn, value: Any, what: str):
    try:
        return fn(value)
    except (wire.WireError, KeyError, TypeError, ValueError) as exc:
        raise HttpError(400, f"bad {what}: {exc}") from exc


def _claim(body: dict[str, Any]) -> Claim:
    return Claim(
        _parse(wire.profile_from_json, body.get("profile"), "profile"),
        _parse(bytes.fromhex, body.get("owner_sign"), "owner_sign"),
        _parse(KeyProof.from_json, body.get("proof"), "proof"),
    )


def add_clock_routes(app: JsonApp, clock: Clock) -> None:
    @app.route("POST", "/_admin/clock")
    def _clock(req: Request):
        body = req.json()
        if "advance" in body:
            return {"now": clock.advance(int(body["advance"]))}
        if "set" in body:
            return {"now": clock.set(int(body["set"]))}
        return {"now": clock.now()}

    @app.route("GET", "/_admin/health")
    def _health(req: Request):
        return {"ok": True, "now": clock.now()}


# -- PDC ---------------------------------------------------------------------


def build_pdc_app(pdc: PolicyDecisionCenter) -> JsonApp:
    app = JsonApp("pdc")
    coordinators: dict[str, tuple[str, str]] = {}  # coordinator VID hex -> (URL, domain)
    add_clock_routes(app, pdc.clock)

    @app.route("GET", "/_admin/info")
    def info(req: Request):
        return {"vid": pdc.vid.hex, "public_key": pdc.key.public_bytes.hex(), "version": pdc.version}

    @app.route("POST", "/register")
    def register(req: Request):
        body = req.json()
        profile = _parse(wire.profile_from_json, body.get("profile"), "profile")
        sign = _parse(bytes.fromhex, body.get("owner_sign", ""), "owner_sign")
        try:
            vid = pdc.register_entity(profile, sign)
        except DuplicateEntity as exc:
            raise HttpError(409, str(exc)) from exc
        except ValueError as exc:
            raise HttpError(400, str(exc)) from exc
        return {"vid": vid.hex}

    @app.route("GET", "/profile")
    def profile(req: Request):
        rec = pdc.profiles.get(_vid(req.arg("vid")))
        if rec is None:
            raise HttpError(404, "not found")
        return {"profile": wire.profile_to_json(rec[0]), "owner_sign": rec[1].hex()}

    @app.route("POST", "/cap/request")
    def cap_request(req: Request):
        body = req.json()
        rights = _parse(wire.rights_from_json, body.get("access_right"), "access_right")
        try:
            token = pdc.issue_external_cap(_vid(body.get("subject")), _vid(body.get("object")), rights)
        except Rejected as exc:
            raise HttpError(403, f"rejected: {exc}") from exc
        return wire.token_to_json(token)

    @app.route("POST", "/cap/revoke")
    def cap_revoke(req: Request):
        body = req.json()
        try:
            cert = pdc.revoke_external_cap(_vid(body.get("subject")), int(body.get("ttl", 3600)))
        except NotFound as exc:
            raise HttpError(404, str(exc)) from exc
        return {"certificate": wire.rc_to_json(cert), "delivery": push_revocation(cert)}

    def push_revocation(cert: RevocationCertificate) -> dict[str, Any]:
        """Hand ``cert`` to every known coordinator; providers in uncovered domains get it directly."""
        delivery: dict[str, Any] = {}
        covered = set()
        for vid_hex, (url, domain) in list(coordinators.items()):
            covered.add(domain)
            try:
                delivery[vid_hex] = post_once(url, "/revocation/receive-and-forward", wire.rc_to_json(cert))[1]
            except OSError as exc:
                delivery[vid_hex] = f"unreachable: {exc}"
        direct = {}
        for vid, domain, address in pdc.object_addresses():
            if domain in covered:
                continue
            try:
                status, out = post_once(address if "://" in address else "http://" + address,
                                        "/revocation", wire.rc_to_json(cert))
                direct[vid.hex] = "ok" if status == 200 else f"failed: {out}"
            except OSError as exc:
                direct[vid.hex] = f"failed: {exc}"
        if direct:
            delivery["direct"] = direct
        return delivery

    @app.route("POST", "/incap/revoke")
    def incap_revoke(req: Request):
        pdc.revoke_internal_cap(_vid(req.json().get("object")))
        return {"version": pdc.version, "pool_version": pdc.pool.version}

    @app.route("POST", "/admin/incap")
    def incap_publish(req: Request):
        body = req.json()
        rights = _parse(wire.rights_from_json, body.get("access_rights"), "access_rights")
        try:
            incap = pdc.publish_internal_cap(_vid(body.get("object")), rights)
        except NotFound as exc:
            raise HttpError(404, str(exc)) from exc
        return wire.incap_to_json(incap)

    @app.route("POST", "/admin/rule")
    def add_rule(req: Request):
        pdc.add_rule(_parse(PolicyRule.from_json, req.json(), "rule"))
        return {"rules": len(pdc.rules)}

    @app.route("GET", "/sync")
    def sync(req: Request):
        raw = req.headers.get("X-Key-Proof")
        if not raw:
            raise HttpError(401, "missing X-Key-Proof")
        proof = _parse(lambda r: KeyProof.from_json(json.loads(r)), raw, "proof")
        try:
            pdc.iac.authenticate_proof(proof, "sync")
            delta = pdc.sync_domain(proof.vid, int(req.arg("since", "0")))
        except (DelegationError, AuthorizationFailure) as exc:
            raise HttpError(403, str(exc)) from exc
        return delta.to_json()

    @app.route("POST", "/delegation/request")
    def delegation_request(req: Request):
        try:
            dc = pdc.request_delegation(_claim(req.json()))
        except DelegationError as exc:
            raise HttpError(403, str(exc)) from exc
        return wire.dc_to_json(dc)

    @app.route("POST", "/delegation/offer")
    def delegation_offer(req: Request):
        body = req.json()
        dc = _parse(wire.dc_from_json, body.get("dc"), "dc")
        try:
            new_dc = pdc.offer_delegation(dc, _claim(body), str(body.get("domain_id", "")))
        except DelegationError as exc:
            raise HttpError(403, str(exc)) from exc
        if body.get("callback"):
            coordinators[new_dc.delegatee_vid.hex] = (str(body["callback"]), new_dc.domain_id)
        return wire.dc_to_json(new_dc)

    def push_offer(url: str, revocation: RevocationCertificate | None) -> Any:
        payload: dict[str, Any] = {"dc": wire.dc_to_json(pdc.dac.root_certificate())}
        if revocation is not None:
            payload["revocation"] = wire.rc_to_json(revocation)
        status, out = post_once(url, "/delegation/accept", payload, timeout=10.0)
        if status != 200:
            raise HttpError(502, f"coordinator refused delegation: {out}")
        coordinators[out["vid"]] = (url, out["dc"]["domain_id"])
        return out

    @app.route("POST", "/admin/delegate")
    def delegate(req: Request):
        return push_offer(str(req.json()["coordinator"]), None)

    @app.route("POST", "/delegation/revoke")
    def delegation_revoke(req: Request):
        body = req.json()
        old = _vid(body.get("old_vid"))
        try:
            cert = pdc.revoke_delegation(old)
        except DelegationError as exc:
            raise HttpError(409, str(exc)) from exc
        out: dict[str, Any] = {"certificate": wire.rc_to_json(cert)}
        previous = coordinators.pop(old.hex, None)
        if previous is not None:
            # the outgoing coordinator learns it is nullified and stops issuing
            try:
                out["previous"] = post_once(previous[0], "/revocation/receive-and-forward", wire.rc_to_json(cert))[1]
            except OSError as exc:
                out["previous"] = f"unreachable: {exc}"
        if body.get("replacement"):
            out["replacement"] = push_offer(str(body["replacement"]), cert)
        return out

    return app


# -- coordinator ---------------------------------------------------------------


class HttpPdcLink:
    def __init__(self, url: str, callback: str | None = None):
        self.url = url
        self.callback = callback

    def offer_delegation(self, dc, claim: Claim, domain_id: str):
        payload = {
            "dc": wire.dc_to_json(dc),
            "profile": wire.profile_to_json(claim.profile),
            "owner_sign": claim.owner_sign.hex(),
            "proof": claim.proof.to_json(),
            "domain_id": domain_id,
            "callback": self.callback,
        }
        status, out = post_once(self.url, "/delegation/offer", payload, timeout=10.0)
        if status != 200:
            raise DelegationError(f"DAC rejected delegation: {out}")
        return wire.dc_from_json(out)

    def sync(self, proof: KeyProof, since_version: int) -> SyncDelta:
        client = Client(self.url)
        try:
            status, out = client.call(
                "GET", f"/sync?since={since_version}", headers={"X-Key-Proof": json.dumps(proof.to_json())}
            )
        finally:
            client.close()
        if status != 200:
            raise AuthorizationFailure(f"sync refused: {out}")
        return SyncDelta.from_json(out)


class HttpProviderLink:
    def __init__(self, address: str):
        self.url = address if "://" in address else "http://" + address

    def deliver_revocation(self, cert: RevocationCertificate) -> None:
        status, out = post_once(self.url, "/revocation", wire.rc_to_json(cert))
        if status != 200:
            raise ConnectionError(f"provider answered {status}: {out}")

    def announce_delegation(self, profile: Profile, owner_sign: bytes, dc) -> None:
        payload = {"profile": wire.profile_to_json(profile), "owner_sign": owner_sign.hex(), "dc": wire.dc_to_json(dc)}
        status, out = post_once(self.url, "/delegation/announce", payload)
        if status != 200:
            raise ConnectionError(f"provider answered {status}: {out}")


def build_coordinator_app(coord: Coordinator) -> JsonApp:
    app = JsonApp("coordinator")
    add_clock_routes(app, coord.clock)

    @app.route("GET", "/_admin/info")
    def info(req: Request):
        dc = coord.certificate
        return {
            "vid": coord.vid.hex,
            "public_key": coord.key.public_bytes.hex(),
            "active": coord.active,
            "nullified": coord.nullified,
            "synced_version": coord.registry.synced_version,
            "pool_version": coord.registry.pool.version,
            "dc": wire.dc_to_json(dc) if dc else None,
            "pending": {k.hex: len(v) for k, v in coord.pending.items()},
        }

    @app.route("POST", "/delegation/accept")
    def accept(req: Request):
        body = req.json()
        offer = _parse(wire.dc_from_json, body.get("dc"), "dc")
        rev = body.get("revocation")
        revocation = _parse(wire.rc_from_json, rev, "revocation") if rev else None
        try:
            dc = coord.accept_delegation(offer, revocation)
        except DelegationError as exc:
            raise HttpError(403, str(exc)) from exc
        try:
            coord.sync()
        except Exception as exc:  # noqa: BLE001 - first sync is best-effort
            log.warning("initial sync failed: %s", exc)
        return {"vid": coord.vid.hex, "dc": wire.dc_to_json(dc)}

    @app.route("POST", "/cap/request")
    def cap_request(req: Request):
        body = req.json()
        rights = _parse(wire.rights_from_json, body.get("access_right"), "access_right")
        try:
            token = coord.issue_local_cap(_vid(body.get("subject")), _vid(body.get("object")), rights)
        except Rejected as exc:
            raise HttpError(403, f"rejected: {exc}") from exc
        return wire.token_to_json(token)

    @app.route("POST", "/provider/register")
    def provider_register(req: Request):
        body = req.json()
        address = str(body.get("address"))
        coord.register_provider(_vid(body.get("vid")), address, HttpProviderLink(address))
        return {"coordinator_vid": coord.vid.hex, "active": coord.active}

    @app.route("POST", "/revocation/receive-and-forward")
    def receive_and_forward(req: Request):
        cert = _parse(wire.rc_from_json, req.json(), "revocation certificate")
        try:
            return coord.broadcast_revocation(cert)
        except ValueError as exc:
            raise HttpError(403, str(exc)) from exc

    @app.route("POST", "/admin/sync")
    def sync_now(req: Request):
        try:
            delta = coord.sync()
        except AuthorizationFailure as exc:
            raise HttpError(403, str(exc)) from exc
        return {"version": delta.version, "pool_version": coord.registry.pool.version}

    @app.route("POST", "/admin/rule")
    def add_rule(req: Request):
        coord.add_rule(_parse(PolicyRule.from_json, req.json(), "rule"))
        return {"rules": len(coord.registry.rules)}

    @app.route("GET", "/admin/pool")
    def pool_state(req: Request):
        return {"version": coord.registry.pool.version, "state": coord.registry.pool.state_bytes().hex()}

    return app


def sync_loop(coord: Coordinator, period: float, stop: threading.Event) -> None:
    while not stop.wait(period):
        if coord.certificate is None:
            continue
        try:
            coord.sync()
        except Exception as exc:  # noqa: BLE001 - keep the loop alive
            log.warning("periodic sync failed: %s", exc)


# -- provider --------------------------------------------------------------------


def static_handler(payload: Any):
    def handler(ctx):
        return {"resource": ctx.uri_path, "data": payload}

    return handler


def build_provider_app(provider: ServiceProvider, *, expose_baseline: bool = False, delay_ms: float = 0.0) -> JsonApp:
    app = JsonApp("provider")
    state = {"down": False}
    add_clock_routes(app, provider.clock)
    delay = delay_ms / 1000.0

    def to_reply(resp) -> Reply:
        return Reply(resp.status, resp.body, resp.headers)

    @app.route("GET", "/_admin/info")
    def info(req: Request):
        return {
            "vid": provider.config.vid.hex if provider.config.vid else None,
            "trusted": [k.hex() for k in provider.trusted_issuers],
            "denied": [k.hex() for k in provider.denied_issuers],
            "revoked": sorted(v.hex for v, _ in provider.revocations.entries),
        }

    @app.route("POST", "/_admin/fault")
    def fault(req: Request):
        state["down"] = bool(req.json().get("down", False))
        return state

    @app.route("POST", "/revocation")
    def revocation(req: Request):
        if state["down"]:
            raise HttpError(503, "provider unavailable")
        cert = _parse(wire.rc_from_json, req.json(), "revocation certificate")
        return {"applied": provider.apply_revocation(cert)}

    @app.route("POST", "/delegation/announce")
    def announce(req: Request):
        body = req.json()
        profile = _parse(wire.profile_from_json, body.get("profile"), "profile")
        sign = _parse(bytes.fromhex, body.get("owner_sign"), "owner_sign")
        dc = _parse(wire.dc_from_json, body.get("dc"), "dc")
        return {"trusted": provider.announce_delegation(profile, sign, dc)}

    @app.route("GET", "/metrics/stages")
    def metrics(req: Request):
        return provider.stage_timing_report()

    @app.route("POST", "/metrics/reset")
    def metrics_reset(req: Request):
        provider.reset_timings()
        return {"ok": True}

    def resource(req: Request) -> Reply:
        if state["down"]:
            return Reply.json({"error": "provider unavailable"}, 503)
        if expose_baseline and req.path.startswith("/_baseline/"):
            resp = provider.baseline(req.method, req.path[len("/_baseline"):], req.client_address)
        else:
            resp = provider.intercept(req.method, req.path, req.headers, req.client_address)
        if delay:
            time.sleep(delay)
        return to_reply(resp)

    app.fallback = resource
    return app


# -- process entry points ----------------------------------------------------------


def _announce_ready(info: dict[str, Any]) -> None:
    sys.stdout.write(READY_PREFIX + json.dumps(info) + "\n")
    sys.stdout.flush()


def _key(path: str | None) -> SigningKey:
    return load_or_create_key(path) if path else SigningKey.generate()


def _wait_forever(stop: threading.Event) -> None:
    def _stop(*_: Any) -> None:
        stop.set()

    signal.signal(signal.SIGTERM, _stop)
    signal.signal(signal.SIGINT, _stop)
    stop.wait()


def _setup_logging(level: str) -> None:
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO), stream=sys.stderr,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _common_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--listen", help="host:port (port 0 picks a free port)")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--log-level", default=os.environ.get("FEDCAP_LOG_LEVEL", "WARNING"))


def _rules_from_file(path: str | None) -> list[PolicyRule]:
    if not path:
        return []
    return [PolicyRule.from_json(r) for r in json.loads(Path(path).read_text())]


def pdc_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="fedcap-pdc", description="Run the cloud policy decision center")
    _common_args(parser)
    args = parser.parse_args(argv)
    _setup_logging(args.log_level)
    cfg = load_config(args.config, PDC_DEFAULTS)
    if args.listen:
        cfg["listen"] = args.listen
    pdc = PolicyDecisionCenter(
        _key(cfg["key_file"]), Clock(int(cfg["clock_offset"])),
        store_path=cfg["store_dir"], dc_lifetime=int(cfg["dc_lifetime"]),
    )
    pdc.load_rules(_rules_from_file(cfg["policy_file"]))
    server = serve(build_pdc_app(pdc), *_split_listen(cfg["listen"]))
    host, port = server.server_address[:2]
    _announce_ready({"url": f"http://{host}:{port}", "vid": pdc.vid.hex, "public_key": pdc.key.public_bytes.hex()})
    _wait_forever(threading.Event())
    server.shutdown()
    return 0


def coordinator_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="fedcap-coordinator", description="Run a domain coordinator")
    _common_args(parser)
    args = parser.parse_args(argv)
    _setup_logging(args.log_level)
    cfg = load_config(args.config, COORDINATOR_DEFAULTS)
    if args.listen:
        cfg["listen"] = args.listen
    host, port = _split_listen(cfg["listen"])
    link = HttpPdcLink(cfg["pdc_url"])
    pdc_key = cfg["pdc_public_key"]
    if not pdc_key:
        pdc_key = Client(cfg["pdc_url"]).expect("GET", "/_admin/info")["public_key"]
    coord = Coordinator(
        _key(cfg["key_file"]), link, bytes.fromhex(pdc_key),
        domain_id=cfg["domain_id"], clock=Clock(int(cfg["clock_offset"])),
        attributes=(("name", cfg["name"]), ("domain", cfg["domain_id"])),
    )
    coord.set_rules(_rules_from_file(cfg["policy_file"]))
    server = serve(build_coordinator_app(coord), host, port)
    bound = server.server_address[:2]
    url = f"http://{bound[0]}:{bound[1]}"
    link.callback = url
    status, out = post_once(cfg["pdc_url"], "/register", {
        "profile": wire.profile_to_json(coord.profile), "owner_sign": coord.owner_sign.hex()})
    if status not in (200, 409):
        log.error("registration with PDC failed: %s", out)
        return 1
    stop = threading.Event()
    if float(cfg["sync_period"]) > 0:
        threading.Thread(target=sync_loop, args=(coord, float(cfg["sync_period"]), stop), daemon=True).start()
    _announce_ready({"url": url, "vid": coord.vid.hex, "public_key": coord.key.public_bytes.hex()})
    _wait_forever(stop)
    server.shutdown()
    return 0


def provider_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="fedcap-provider", description="Run an edge service provider")
    _common_args(parser)
    parser.add_argument("--trusted-keys", help="comma-separated hex issuer keys to trust in addition to the root")
    args = parser.parse_args(argv)
    _setup_logging(args.log_level)
    cfg = load_config(args.config, PROVIDER_DEFAULTS)
    if args.listen:
        cfg["listen"] = args.listen
    if args.trusted_keys:
        cfg["trusted_keys"] = [k for k in args.trusted_keys.split(",") if k]
    root_key = cfg["root_key"]
    if not root_key:
        if not cfg["pdc_url"]:
            parser.error("need root_key or pdc_url")
        root_key = Client(cfg["pdc_url"]).expect("GET", "/_admin/info")["public_key"]
    key = _key(cfg["key_file"])
    config = ProviderConfig(
        root_key=bytes.fromhex(root_key),
        trusted_issuers={bytes.fromhex(k): None for k in cfg["trusted_keys"]},
        environment={str(k): str(v) for k, v in cfg["environment"].items()},
        handlers={path: static_handler(payload) for path, payload in cfg["resources"].items()},
        skew=int(cfg["skew"]),
        expose_detail=bool(cfg["expose_detail"]),
    )
    provider = ServiceProvider(config, Clock(int(cfg["clock_offset"])))
    app = build_provider_app(
        provider, expose_baseline=bool(cfg["expose_baseline"]), delay_ms=float(cfg["artificial_delay_ms"])
    )
    server = serve(app, *_split_listen(cfg["listen"]))
    host, port = server.server_address[:2]
    address = f"{host}:{port}"
    profile = Profile(
        EntityKind.OBJECT, (("name", cfg["name"]), ("address", address)), key.public_bytes, cfg["domain_id"]
    )
    sign = owner_signature(profile, key)
    config.vid = compute_vid(profile, sign)
    if cfg["pdc_url"]:
        status, out = post_once(cfg["pdc_url"], "/register", {
            "profile": wire.profile_to_json(profile), "owner_sign": sign.hex()})
        if status not in (200, 409):
            log.error("registration with PDC failed: %s", out)
            return 1
    for url in cfg["coordinators"]:
        status, out = post_once(url, "/provider/register", {"vid": config.vid.hex, "address": address})
        if status != 200:
            log.warning("registration with coordinator %s failed: %s", url, out)
    _announce_ready({"url": f"http://{address}", "vid": config.vid.hex, "public_key": key.public_bytes.hex()})
    _wait_forever(threading.Event())
    server.shutdown()
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] not in ("pdc", "coordinator", "provider"):
        print("usage: python -m fedcap.services {pdc|coordinator|provider} [options]", file=sys.stderr)
        return 2
    kind, rest = argv[0], argv[1:]
    return {"pdc": pdc_main, "coordinator": coordinator_main, "provider": provider_main}[kind](rest)


if __name__ == "__main__":
    sys.exit(main())
