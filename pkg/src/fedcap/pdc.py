"""Cloud policy decision center (PDC)."""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from . import wire
from .capability import compute_vid, owner_signature
from .clock import Clock
from .crypto import SigningKey
from .delegation import Claim, DelegationAuthority, IdentityAuthority, KeyProof
from .errors import AuthorizationFailure, DuplicateEntity, NotFound
from .model import (
    AccessRight,
    CapabilityToken,
    DelegationCertificate,
    EntityKind,
    InternalCapability,
    Profile,
    RevocationCertificate,
    RevocationScope,
    VirtualIdentity,
)
from .policy import CapabilityPool, Issuer, PolicyRule, publish

log = logging.getLogger(__name__)


class ProfileStore:
    """Registered profiles, optionally persisted as JSON-lines log plus snapshot."""

    def __init__(self, path: str | os.PathLike | None = None):
        self._by_vid: dict[VirtualIdentity, tuple[Profile, bytes]] = {}
        self._canon: set[bytes] = set()
        self.path = Path(path) if path else None
        if self.path:
            self.path.mkdir(parents=True, exist_ok=True)
            self._load()

    @property
    def _snapshot_file(self) -> Path:
        return self.path / "profiles.snapshot.json"

    @property
    def _log_file(self) -> Path:
        return self.path / "profiles.log.jsonl"

    def _load(self) -> None:
        records: list[dict[str, Any]] = []
        if self._snapshot_file.exists():
            records.extend(json.loads(self._snapshot_file.read_text()))
        if self._log_file.exists():
            for line in self._log_file.read_text().splitlines():
                if line.strip():
                    records.append(json.loads(line))
        for rec in records:
            profile = wire.profile_from_json(rec["profile"])
            self._insert(profile, bytes.fromhex(rec["owner_sign"]))

    def _insert(self, profile: Profile, owner_sign: bytes) -> VirtualIdentity:
        vid = compute_vid(profile, owner_sign)
        self._by_vid[vid] = (profile, owner_sign)
        self._canon.add(profile.canonical())
        return vid

    def contains_profile(self, profile: Profile) -> bool:
        return profile.canonical() in self._canon

    def add(self, profile: Profile, owner_sign: bytes) -> VirtualIdentity:
        vid = self._insert(profile, owner_sign)
        if self.path:
            rec = {"profile": wire.profile_to_json(profile), "owner_sign": owner_sign.hex()}
            with self._log_file.open("a") as fh:
                fh.write(json.dumps(rec) + "\n")
        return vid

    def snapshot(self) -> None:
        """Fold the log into the snapshot file and truncate the log."""
        if not self.path:
            return
        recs = [
            {"profile": wire.profile_to_json(p), "owner_sign": s.hex()} for p, s in self._by_vid.values()
        ]
        tmp = self._snapshot_file.with_suffix(".tmp")
        tmp.write_text(json.dumps(recs))
        tmp.replace(self._snapshot_file)
        self._log_file.write_text("")

    def get(self, vid: VirtualIdentity) -> tuple[Profile, bytes] | None:
        return self._by_vid.get(vid)

    def __len__(self) -> int:
        return len(self._by_vid)

    def __iter__(self):
        return iter(self._by_vid.items())


@dataclass
class SyncDelta:
    version: int
    pool_version: int
    profiles: list[tuple[Profile, bytes]] = field(default_factory=list)
    pool: list[tuple[VirtualIdentity, InternalCapability | None]] = field(default_factory=list)
    revocations: list[RevocationCertificate] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not (self.profiles or self.pool or self.revocations)

    def to_json(self) -> dict[str, Any]:
        return {
            "version": self.version,
            "pool_version": self.pool_version,
            "profiles": [
                {"profile": wire.profile_to_json(p), "owner_sign": s.hex()} for p, s in self.profiles
            ],
            "pool": [
                {"vid": v.hex, "incap": wire.incap_to_json(c) if c else None} for v, c in self.pool
            ],
            "revocations": [wire.rc_to_json(r) for r in self.revocations],
        }

    @classmethod
    def from_json(cls, d: dict[str, Any]) -> "SyncDelta":
        return cls(
            version=int(d["version"]),
            pool_version=int(d["pool_version"]),
            profiles=[
                (wire.profile_from_json(p["profile"]), bytes.fromhex(p["owner_sign"])) for p in d["profiles"]
            ],
            pool=[
                (wire.vid_from_json(e["vid"]), wire.incap_from_json(e["incap"]) if e["incap"] else None)
                for e in d["pool"]
            ],
            revocations=[wire.rc_from_json(r) for r in d["revocations"]],
        )


class PolicyDecisionCenter:
    """Registration, capability pool, issuance, revocation and sync source.

    Also hosts the delegation authority; the PDC's own identity is the root
    delegator.  Every state change bumps ``version`` so coordinators can pull
    exactly what changed since their last sync.
    """

    def __init__(
        self,
        key: SigningKey,
        clock: Clock | None = None,
        *,
        domain_id: str = "cloud",
        store_path: str | os.PathLike | None = None,
        dc_lifetime: int | None = None,
    ):
        self.key = key
        self.clock = clock or Clock()
        self.profiles = ProfileStore(store_path)
        self.pool = CapabilityPool()
        self.rules: list[PolicyRule] = []
        self.issuer = Issuer(key, self.clock)
        self.version = 0
        self._profile_versions: dict[VirtualIdentity, int] = {}
        self._pool_changes: dict[VirtualIdentity, int] = {}
        self._revocations: list[tuple[int, RevocationCertificate]] = []
        self._lock = threading.RLock()

        for vid, _ in self.profiles:
            self.version += 1
            self._profile_versions[vid] = self.version
        self.profile = Profile(EntityKind.PDC, (("name", "pdc"),), key.public_bytes, domain_id)
        self.owner_sign = owner_signature(self.profile, key)
        self.vid = compute_vid(self.profile, self.owner_sign)
        if self.profiles.get(self.vid) is None:
            self.register_entity(self.profile, self.owner_sign)

        self.iac = IdentityAuthority(self.lookup_profile, self.clock)
        kw = {"dc_lifetime": dc_lifetime} if dc_lifetime else {}
        self.dac = DelegationAuthority(key, self.vid, self.iac, self.clock, **kw)

    # -- registration -----------------------------------------------------

    def register_entity(self, profile: Profile, owner_sign: bytes) -> VirtualIdentity:
        with self._lock:
            if self.profiles.contains_profile(profile):
                raise DuplicateEntity("profile already registered")
            vid = self.profiles.add(profile, owner_sign)
            self.version += 1
            self._profile_versions[vid] = self.version
            log.info("registered %s %s", profile.entity_kind.value, vid.hex[:12])
            return vid

    def lookup_profile(self, vid: VirtualIdentity) -> Profile | None:
        rec = self.profiles.get(vid)
        return rec[0] if rec else None

    def object_addresses(self) -> list[tuple[VirtualIdentity, str, str]]:
        """(vid, domain_id, address) for every registered object that advertises an address."""
        with self._lock:
            recs = list(self.profiles)
        return [
            (vid, p.domain_id, p.attribute("address"))
            for vid, (p, _) in recs
            if p.entity_kind is EntityKind.OBJECT and p.attribute("address")
        ]

    def require_profile(self, vid: VirtualIdentity) -> Profile:
        p = self.lookup_profile(vid)
        if p is None:
            raise NotFound(f"no entity {vid.hex[:12]}")
        return p

    # -- capability pool ----------------------------------------------------

    def publish_internal_cap(self, object_vid: VirtualIdentity, rights: Sequence[AccessRight]) -> InternalCapability:
        with self._lock:
            self.require_profile(object_vid)
            incap = publish(self.pool, object_vid, rights)
            self.version += 1
            self._pool_changes[object_vid] = self.version
            return incap

    def revoke_internal_cap(self, object_vid: VirtualIdentity) -> None:
        with self._lock:
            if not self.pool.remove(object_vid):
                log.warning("revoke_internal_cap: %s not in pool", object_vid.hex[:12])
                return
            self.version += 1
            self._pool_changes[object_vid] = self.version

    # -- policy and issuance ------------------------------------------------

    def add_rule(self, rule: PolicyRule) -> None:
        with self._lock:
            self.rules.append(rule)

    def load_rules(self, rules: Iterable[PolicyRule]) -> None:
        with self._lock:
            self.rules = list(rules)

    def issue_external_cap(
        self, subject_vid: VirtualIdentity, object_vid: VirtualIdentity, requested: Sequence[AccessRight]
    ) -> CapabilityToken:
        with self._lock:
            return self.issuer.issue(self.rules, self.lookup_profile, self.pool, subject_vid, object_vid, requested)

    def revoke_external_cap(self, subject_vid: VirtualIdentity, ttl: int) -> RevocationCertificate:
        with self._lock:
            self.require_profile(subject_vid)
            now = self.clock.now()
            body = RevocationCertificate(subject_vid, RevocationScope.SUBJECT_CAP, now, now + ttl, self.key.public_bytes)
            cert = RevocationCertificate(
                body.revoked_vid, body.scope, body.issue_time, body.expire_time,
                body.issuer, self.key.sign(body.body()),
            )
            self._record_revocation(cert)
            return cert

    def _record_revocation(self, cert: RevocationCertificate) -> None:
        self.version += 1
        self._revocations.append((self.version, cert))

    # -- synchronization ----------------------------------------------------

    def sync_domain(self, coordinator_vid: VirtualIdentity, since_version: int) -> SyncDelta:
        if self.dac.active_certificate(coordinator_vid) is None:
            raise AuthorizationFailure("coordinator holds no valid delegation")
        with self._lock:
            return self.delta_since(since_version)

    def delta_since(self, since_version: int) -> SyncDelta:
        with self._lock:
            profiles = [
                self.profiles.get(v) for v, ver in sorted(self._profile_versions.items(), key=lambda kv: kv[1])
                if ver > since_version
            ]
            pool = [
                (v, self.pool.get(v)) for v, ver in sorted(self._pool_changes.items(), key=lambda kv: kv[1])
                if ver > since_version
            ]
            revs = [c for ver, c in self._revocations if ver > since_version]
            return SyncDelta(self.version, self.pool.version, profiles, pool, revs)

    def revocations_since(self, since_version: int) -> list[RevocationCertificate]:
        with self._lock:
            return [c for ver, c in self._revocations if ver > since_version]

    # -- delegation ---------------------------------------------------------

    def root_claim(self, purpose: str) -> Claim:
        proof = KeyProof.create(self.key, self.vid, purpose, self.clock.now())
        return Claim(self.profile, self.owner_sign, proof)

    def request_delegation(self, claim: Claim) -> DelegationCertificate:
        return self.dac.request_delegation(claim)

    def offer_delegation(self, dc: DelegationCertificate, delegatee: Claim, domain_id: str) -> DelegationCertificate:
        return self.dac.offer_delegation(dc, delegatee, domain_id)

    def revoke_delegation(self, old: VirtualIdentity, new_delegatee: Claim | None = None) -> RevocationCertificate:
        """Revoke ``old``; the certificate is recorded even if the replacement is then refused."""
        with self._lock:
            domain = next((s.domain_id for s in self.dac.domains.values() if s.delegatee == old), None)
            cert = self.dac.revoke_delegation(old)
            self._record_revocation(cert)
        if new_delegatee is not None and domain is not None:
            self.dac.offer_delegation(self.dac.root_certificate(), new_delegatee, domain)
        return cert
