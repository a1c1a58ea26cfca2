"""Edge service provider: the enforcement point in front of resource handlers.

Framework-agnostic; :mod:`fedcap.services` wraps :meth:`ServiceProvider.intercept`
in an HTTP server.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

from . import wire
from .authz import PIPELINE, Authorizer, Decision, RequestContext, Stage, resource_matches
from .capability import compute_vid, verify_chain
from .clock import Clock
from .model import (
    Action,
    DelegationCertificate,
    InternalCapability,
    Profile,
    RevocationCertificate,
    RevocationList,
    RevocationScope,
    VirtualIdentity,
)

log = logging.getLogger(__name__)

TOKEN_HEADER = "X-Capability-Token"

Handler = Callable[[RequestContext], Any]


@dataclass
class Response:
    status: int
    body: bytes
    headers: dict[str, str] = field(default_factory=dict)

    def json(self) -> Any:
        return json.loads(self.body)


@dataclass
class ProviderConfig:
    root_key: bytes
    trusted_issuers: dict[bytes, VirtualIdentity | None] = field(default_factory=dict)
    issuer_denylist: set[bytes] = field(default_factory=set)
    environment: dict[str, str] = field(default_factory=dict)
    handlers: dict[str, Handler] = field(default_factory=dict)
    vid: VirtualIdentity | None = None
    listen: str = "127.0.0.1:0"
    strict_chain: InternalCapability | None = None
    skew: int = 30
    expose_detail: bool = True

    def __post_init__(self) -> None:
        self.trusted_issuers.setdefault(self.root_key, None)
        if not self.trusted_issuers:
            raise ValueError("provider needs at least one trusted issuer key")


def _payload_bytes(payload: Any) -> tuple[bytes, str]:
    if isinstance(payload, bytes):
        return payload, "application/octet-stream"
    if isinstance(payload, str):
        return payload.encode(), "text/plain; charset=utf-8"
    return wire.dumps(payload).encode(), "application/json"


class ServiceProvider:
    def __init__(self, config: ProviderConfig, clock: Clock | None = None):
        self.config = config
        self.clock = clock or Clock()
        self.revocations = RevocationList()
        self._trusted = dict(config.trusted_issuers)
        self._denied = frozenset(config.issuer_denylist)
        self._lock = threading.Lock()
        chain = None
        if config.strict_chain is not None:
            incap = config.strict_chain
            chain = lambda tok: verify_chain(tok, incap.vid_o, incap.rnd0)  # noqa: E731
        self.authorizer = Authorizer(skew=config.skew, issuer_check=self._issuer_check, chain_check=chain)
        self._parse_ns = 0
        self._total_ns = 0
        self._requests = 0
        self._malformed = 0

    # -- trust --------------------------------------------------------------

    def _issuer_check(self, issuer: bytes) -> str | None:
        if issuer in self._denied:
            return "issuer nullified"
        if issuer not in self._trusted:
            return "untrusted issuer"
        return None

    @property
    def trusted_issuers(self) -> dict[bytes, VirtualIdentity | None]:
        return dict(self._trusted)

    @property
    def denied_issuers(self) -> frozenset[bytes]:
        return self._denied

    def announce_delegation(self, profile: Profile, owner_sign: bytes, dc: DelegationCertificate) -> bool:
        """Trust a coordinator that presents a root-signed delegation certificate."""
        try:
            vid = compute_vid(profile, owner_sign)
        except ValueError:
            return False
        ok = (
            dc.verify(self.config.root_key)
            and dc.delegatee_vid == vid
            and dc.valid_at(self.clock.now())
            and vid not in self.revocations.revoked_coordinators
            and profile.public_key not in self._denied
        )
        if not ok:
            log.warning("rejected delegation announcement from %s", vid.hex[:12])
            return False
        with self._lock:
            trusted = dict(self._trusted)
            trusted[profile.public_key] = vid
            self._trusted = trusted
        return True

    def apply_revocation(self, cert: RevocationCertificate) -> bool:
        if cert.issuer not in self._trusted or cert.issuer in self._denied or not cert.verify():
            log.warning("ignoring revocation certificate with untrusted issuer or bad signature")
            return False
        if cert.scope is RevocationScope.COORDINATOR and cert.issuer != self.config.root_key:
            # only the delegation authority can nullify a coordinator
            log.warning("ignoring coordinator revocation not signed by the root")
            return False
        applied = self.revocations.apply(cert)
        if applied and cert.scope is RevocationScope.COORDINATOR:
            with self._lock:
                keys = {k for k, v in self._trusted.items() if v == cert.revoked_vid}
                self._denied = self._denied | keys
                self._trusted = {k: v for k, v in self._trusted.items() if k not in keys}
        self.revocations.prune(self.clock.now())
        return applied

    # -- request path ---------------------------------------------------------

    def _handler_for(self, path: str) -> Handler | None:
        handlers = self.config.handlers
        if path in handlers:
            return handlers[path]
        for pattern, h in handlers.items():
            if resource_matches(pattern, path):
                return h
        return None

    def _deny(self, status: int, decision: Decision) -> Response:
        body: dict[str, Any] = {"decision": "deny"}
        if self.config.expose_detail:
            body.update(stage=decision.stage.value, detail=decision.detail)
        return Response(status, wire.dumps(body).encode(), {"Content-Type": "application/json"})

    def _serve(self, ctx: RequestContext) -> Response:
        handler = self._handler_for(ctx.uri_path)
        if handler is None:
            return Response(404, b'{"error":"no such resource"}', {"Content-Type": "application/json"})
        try:
            payload = handler(ctx)
        except Exception:  # noqa: BLE001 - a failing handler must never look like success
            log.exception("resource handler failed for %s", ctx.uri_path)
            return Response(500, b'{"error":"handler failed"}', {"Content-Type": "application/json"})
        body, ctype = _payload_bytes(payload)
        return Response(200, body, {"Content-Type": ctype})

    def _context(self, method: str, path: str, client_address: str) -> RequestContext:
        return RequestContext(Action(method), path, client_address, self.clock.now(), dict(self.config.environment))

    def intercept(
        self, method: str, path: str, headers: Mapping[str, str], client_address: str = "127.0.0.1"
    ) -> Response:
        t_start = time.perf_counter_ns()
        raw = None
        for k, v in headers.items():
            if k.lower() == TOKEN_HEADER.lower():
                raw = v
                break
        try:
            ctx = self._context(method, path, client_address)
        except ValueError:
            return Response(405, b'{"error":"unsupported method"}', {"Content-Type": "application/json"})
        if raw is None:
            return self._unauthenticated(0, t_start, "missing capability token")
        t0 = time.perf_counter_ns()
        try:
            token = wire.decode_token(raw)
        except wire.WireError as exc:
            return self._unauthenticated(time.perf_counter_ns() - t0, t_start, f"malformed token: {exc}")
        parse_ns = time.perf_counter_ns() - t0

        decision, spent = self.authorizer.evaluate(token, ctx, self.revocations)
        resp = self._serve(ctx) if decision.granted else self._deny(403, decision)
        total_ns = time.perf_counter_ns() - t_start
        self._record(parse_ns, total_ns)
        timing = [f"parse;dur={parse_ns / 1e6:.4f}"]
        timing += [f"{s.value};dur={spent[s] / 1e6:.4f}" for s in PIPELINE if s in spent]
        timing.append(f"total;dur={total_ns / 1e6:.4f}")
        resp.headers["Server-Timing"] = ", ".join(timing)
        return resp

    def _unauthenticated(self, parse_ns: int, t_start: int, detail: str) -> Response:
        resp = self._deny(401, Decision.deny(Stage.TOKEN_TIME, detail))
        total_ns = time.perf_counter_ns() - t_start
        self._record(parse_ns, total_ns, malformed=True)
        resp.headers["Server-Timing"] = f"parse;dur={parse_ns / 1e6:.4f}, total;dur={total_ns / 1e6:.4f}"
        return resp

    def baseline(self, method: str, path: str, client_address: str = "127.0.0.1") -> Response:
        """Serve the resource with no access control at all (benchmark reference)."""
        try:
            ctx = self._context(method, path, client_address)
        except ValueError:
            return Response(405, b'{"error":"unsupported method"}', {"Content-Type": "application/json"})
        return self._serve(ctx)

    # -- timing ---------------------------------------------------------------

    def _record(self, parse_ns: int, total_ns: int, malformed: bool = False) -> None:
        with self._lock:
            self._parse_ns += parse_ns
            self._total_ns += total_ns
            self._requests += 1
            self._malformed += int(malformed)

    def reset_timings(self) -> None:
        with self._lock:
            self._parse_ns = self._total_ns = self._requests = self._malformed = 0
        self.authorizer.reset()

    def stage_timing_report(self) -> dict[str, Any]:
        snap = self.authorizer.snapshot()
        with self._lock:
            requests, parse_ns, total_ns = self._requests, self._parse_ns, self._total_ns
            malformed = self._malformed
        parsed = requests - malformed

        def entry(count: int, ns: int) -> dict[str, float]:
            return {"count": count, "total_ms": ns / 1e6, "mean_ms": (ns / 1e6 / count) if count else 0.0}

        stages = {"parse": entry(parsed, parse_ns)}
        for s in PIPELINE:
            stages[s.value] = entry(snap["invocations"][s.value], snap["elapsed_ns"][s.value])
        authz_ns = sum(snap["elapsed_ns"].values())
        fractions = {
            s.value: (snap["elapsed_ns"][s.value] / authz_ns if authz_ns else 0.0) for s in PIPELINE
        }
        return {
            "requests": requests,
            "stages": stages,
            "authorization": entry(parsed, authz_ns),
            "request_total": entry(requests, total_ns),
            "fractions": fractions,
            "invocations": snap["invocations"],
            "outcomes": snap["outcomes"],
        }
