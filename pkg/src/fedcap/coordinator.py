"""Fog-layer coordinator: the PDC's single-level delegatee for one domain."""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from typing import Protocol, Sequence

from .capability import compute_vid, owner_signature
from .clock import Clock
from .crypto import SigningKey
from .delegation import Claim, DelegationError, KeyProof
from .errors import Rejected
from .model import (
    AccessRight,
    CapabilityToken,
    DelegationCertificate,
    EntityKind,
    Profile,
    RevocationCertificate,
    RevocationScope,
    VirtualIdentity,
)
from .pdc import PolicyDecisionCenter, SyncDelta
from .policy import CapabilityPool, Issuer, PolicyRule

log = logging.getLogger(__name__)


class PdcLink(Protocol):
    def offer_delegation(self, dc: DelegationCertificate, claim: Claim, domain_id: str) -> DelegationCertificate: ...

    def sync(self, proof: KeyProof, since_version: int) -> SyncDelta: ...


class ProviderLink(Protocol):
    def deliver_revocation(self, cert: RevocationCertificate) -> None: ...

    def announce_delegation(self, profile: Profile, owner_sign: bytes, dc: DelegationCertificate) -> None: ...


class LocalPdcLink:
    """In-process stand-in for the PDC's HTTP endpoints."""

    def __init__(self, pdc: PolicyDecisionCenter):
        self.pdc = pdc

    def offer_delegation(self, dc, claim, domain_id):
        return self.pdc.offer_delegation(dc, claim, domain_id)

    def sync(self, proof, since_version):
        self.pdc.iac.authenticate_proof(proof, "sync")
        return self.pdc.sync_domain(proof.vid, since_version)


@dataclass
class ProviderEntry:
    vid: VirtualIdentity
    address: str
    link: ProviderLink


@dataclass
class DomainRegistry:
    domain_id: str
    providers: dict[VirtualIdentity, ProviderEntry] = field(default_factory=dict)
    pool: CapabilityPool = field(default_factory=CapabilityPool)
    profiles: dict[VirtualIdentity, tuple[Profile, bytes]] = field(default_factory=dict)
    certificate: DelegationCertificate | None = None
    rules: list[PolicyRule] = field(default_factory=list)
    synced_version: int = 0


DeliveryReport = dict[str, str]  # provider VID hex -> "ok" | error text


class Coordinator:
    def __init__(
        self,
        key: SigningKey,
        pdc_link: PdcLink,
        pdc_public_key: bytes,
        *,
        domain_id: str,
        clock: Clock | None = None,
        attributes: Sequence[tuple[str, str]] = (("name", "coordinator"),),
    ):
        self.key = key
        self.clock = clock or Clock()
        self.pdc_link = pdc_link
        self.pdc_public_key = pdc_public_key
        self.profile = Profile(EntityKind.COORDINATOR, tuple(attributes), key.public_bytes, domain_id)
        self.owner_sign = owner_signature(self.profile, key)
        self.vid = compute_vid(self.profile, self.owner_sign)
        self.registry = DomainRegistry(domain_id)
        self.issuer = Issuer(key, self.clock)
        self.nullified = False
        self.latest_coordinator_cert: RevocationCertificate | None = None
        self._seen_certs: set[bytes] = set()
        self._pending: dict[VirtualIdentity, list[RevocationCertificate]] = {}
        self._lock = threading.RLock()

    # -- delegation ---------------------------------------------------------

    @property
    def certificate(self) -> DelegationCertificate | None:
        return self.registry.certificate

    @property
    def active(self) -> bool:
        dc = self.registry.certificate
        return dc is not None and not self.nullified and dc.valid_at(self.clock.now())

    def claim(self, purpose: str) -> Claim:
        return Claim(self.profile, self.owner_sign, KeyProof.create(self.key, self.vid, purpose, self.clock.now()))

    def accept_delegation(
        self, offer: DelegationCertificate, revocation: RevocationCertificate | None = None
    ) -> DelegationCertificate:
        """Acknowledge a root offer with the DAC and install the resulting certificate."""
        if not offer.verify(self.pdc_public_key):
            log.error("delegation offer carries a certificate not signed by the PDC")
            raise DelegationError("offered delegation certificate is forged")
        try:
            dc = self.pdc_link.offer_delegation(offer, self.claim("delegation-ack"), self.registry.domain_id)
        except DelegationError as exc:
            log.error("delegation acknowledgement rejected: %s", exc)
            raise
        if dc.delegatee_vid != self.vid or not dc.verify(self.pdc_public_key):
            raise DelegationError("DAC returned a certificate for someone else")
        with self._lock:
            current = self.registry.certificate
            if current is None or dc.issue_time > current.issue_time:
                self.registry.certificate = dc
            self.nullified = False
            installed = self.registry.certificate
            providers = list(self.registry.providers.values())
        for entry in providers:
            self._announce(entry)
        if revocation is not None:
            self.broadcast_revocation(revocation)
        return installed

    def _announce(self, entry: ProviderEntry) -> None:
        dc = self.registry.certificate
        if dc is None:
            return
        try:
            entry.link.announce_delegation(self.profile, self.owner_sign, dc)
        except Exception as exc:  # noqa: BLE001 - transport errors of any kind
            log.warning("announce to %s failed: %s", entry.address, exc)

    # -- sync ---------------------------------------------------------------

    def sync(self) -> SyncDelta:
        delta = self.pdc_link.sync(self.claim("sync").proof, self.registry.synced_version)
        self.apply_delta(delta)
        for cert in delta.revocations:
            self._forward(cert)
        self.retry_pending()
        return delta

    def apply_delta(self, delta: SyncDelta) -> None:
        with self._lock:
            reg = self.registry
            for profile, sign in delta.profiles:
                reg.profiles[compute_vid(profile, sign)] = (profile, sign)
            for vid, incap in delta.pool:
                if incap is None:
                    reg.pool.entries.pop(vid, None)
                else:
                    reg.pool.entries[vid] = incap
            reg.pool.version = delta.pool_version
            reg.synced_version = delta.version

    def lookup_profile(self, vid: VirtualIdentity) -> Profile | None:
        rec = self.registry.profiles.get(vid)
        return rec[0] if rec else None

    # -- issuance -----------------------------------------------------------

    def set_rules(self, rules: Sequence[PolicyRule]) -> None:
        with self._lock:
            self.registry.rules = list(rules)

    def add_rule(self, rule: PolicyRule) -> None:
        with self._lock:
            self.registry.rules.append(rule)

    def issue_local_cap(
        self, subject_vid: VirtualIdentity, object_vid: VirtualIdentity, requested: Sequence[AccessRight]
    ) -> CapabilityToken:
        with self._lock:
            dc = self.registry.certificate
            if dc is None or self.nullified:
                raise Rejected("coordinator holds no delegation")
            if not dc.valid_at(self.clock.now()):
                raise Rejected("delegation lapsed")
            return self.issuer.issue(
                self.registry.rules, self.lookup_profile, self.registry.pool,
                subject_vid, object_vid, requested, not_after=dc.expiry,
            )

    # -- providers and revocation broadcast ---------------------------------

    def register_provider(self, vid: VirtualIdentity, address: str, link: ProviderLink) -> None:
        entry = ProviderEntry(vid, address, link)
        with self._lock:
            self.registry.providers[vid] = entry
            latest = self.latest_coordinator_cert
        if self.active:
            self._announce(entry)
        if latest is not None:
            self._deliver(entry, latest)

    def _trusted_cert(self, cert: RevocationCertificate) -> bool:
        return cert.issuer in (self.pdc_public_key, self.key.public_bytes) and cert.verify()

    def _forward(self, cert: RevocationCertificate) -> None:
        if cert.signature in self._seen_certs:
            return
        self.broadcast_revocation(cert)

    def _deliver(self, entry: ProviderEntry, cert: RevocationCertificate) -> str:
        try:
            entry.link.deliver_revocation(cert)
            return "ok"
        except Exception as exc:  # noqa: BLE001 - transport errors of any kind
            with self._lock:
                queue = self._pending.setdefault(entry.vid, [])
                if cert not in queue:
                    queue.append(cert)
            return f"failed: {exc}"

    def broadcast_revocation(self, cert: RevocationCertificate) -> DeliveryReport:
        if not self._trusted_cert(cert):
            raise ValueError("revocation certificate signature invalid or issuer untrusted")
        with self._lock:
            self._seen_certs.add(cert.signature)
            if cert.scope is RevocationScope.COORDINATOR:
                latest = self.latest_coordinator_cert
                if latest is None or cert.issue_time > latest.issue_time:
                    self.latest_coordinator_cert = cert
                if cert.revoked_vid == self.vid:
                    self.nullified = True
            providers = list(self.registry.providers.values())
        return {e.vid.hex: self._deliver(e, cert) for e in providers}

    def retry_pending(self) -> DeliveryReport:
        with self._lock:
            pending, self._pending = self._pending, {}
            providers = dict(self.registry.providers)
        report: DeliveryReport = {}
        for vid, certs in pending.items():
            entry = providers.get(vid)
            if entry is None:
                continue
            results = [self._deliver(entry, c) for c in sorted(certs, key=lambda c: c.issue_time)]
            report[vid.hex] = next((r for r in results if r != "ok"), "ok")
        return report

    @property
    def pending(self) -> dict[VirtualIdentity, list[RevocationCertificate]]:
        return {k: list(v) for k, v in self._pending.items()}
