"""Delegation authority (DAC) and identification authority (IAC).

Only the root (cloud PDC identity) may propagate delegation, and only one
level deep: the root holds a self-issued certificate, offers it to a
coordinator, and the DAC answers the coordinator's acknowledgement with a
certificate naming that coordinator.  Revoked delegatees land on the
delegation revocation list (DRL) permanently.
"""

from __future__ import annotations

import logging
import secrets
import threading
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

from . import canonical as C
from .capability import compute_vid
from .clock import Clock
from .crypto import SigningKey, verify
from .errors import FedcapError
from .model import (
    DelegationCertificate,
    Profile,
    RevocationCertificate,
    RevocationScope,
    VirtualIdentity,
)

log = logging.getLogger(__name__)

DEFAULT_DC_LIFETIME = 24 * 3600
DEFAULT_COORDINATOR_REVOCATION_TTL = 365 * 24 * 3600
PROOF_SKEW = 30
ROOT_DOMAIN = "*"


class DelegationError(FedcapError):
    """The DAC's failure notification."""


class IdentityError(DelegationError):
    pass


@dataclass(frozen=True)
class KeyProof:
    """Signature over (vid, purpose, timestamp, nonce) proving key possession."""

    vid: VirtualIdentity
    purpose: str
    timestamp: int
    nonce: str
    signature: bytes

    @staticmethod
    def message(vid: VirtualIdentity, purpose: str, timestamp: int, nonce: str) -> bytes:
        return C.enc_record(
            "KeyProof", [vid.canonical(), C.enc_str(purpose), C.enc_int(timestamp), C.enc_str(nonce)]
        )

    @classmethod
    def create(cls, key: SigningKey, vid: VirtualIdentity, purpose: str, now: int) -> "KeyProof":
        nonce = secrets.token_hex(16)
        return cls(vid, purpose, now, nonce, key.sign(cls.message(vid, purpose, now, nonce)))

    def to_json(self) -> dict:
        return {
            "vid": self.vid.hex,
            "purpose": self.purpose,
            "timestamp": self.timestamp,
            "nonce": self.nonce,
            "signature": self.signature.hex(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "KeyProof":
        return cls(
            VirtualIdentity.from_hex(d["vid"]),
            str(d["purpose"]),
            int(d["timestamp"]),
            str(d["nonce"]),
            bytes.fromhex(d["signature"]),
        )


class Claim(NamedTuple):
    """An identity presented for authentication: profile, owner signature, key proof."""

    profile: Profile
    owner_sign: bytes
    proof: KeyProof


ProfileLookup = Callable[[VirtualIdentity], "Profile | None"]


class IdentityAuthority:
    """IAC: a VID is authentic if it is registered and its key holder signed a fresh proof."""

    def __init__(self, lookup: ProfileLookup, clock: Clock, skew: int = PROOF_SKEW):
        self._lookup = lookup
        self._clock = clock
        self._skew = skew
        self._seen: dict[str, int] = {}
        self._lock = threading.Lock()

    def authenticate_proof(self, proof: KeyProof, purpose: str) -> Profile:
        profile = self._lookup(proof.vid)
        if profile is None:
            raise IdentityError(f"unknown identity {proof.vid.hex[:12]}")
        if proof.purpose != purpose:
            raise IdentityError("proof issued for a different purpose")
        now = self._clock.now()
        if abs(now - proof.timestamp) > self._skew:
            raise IdentityError("stale identity proof")
        msg = KeyProof.message(proof.vid, proof.purpose, proof.timestamp, proof.nonce)
        if not verify(profile.public_key, proof.signature, msg):
            raise IdentityError("identity proof signature invalid")
        with self._lock:
            self._seen = {n: t for n, t in self._seen.items() if t >= now - 2 * self._skew}
            if proof.nonce in self._seen:
                raise IdentityError("replayed identity proof")
            self._seen[proof.nonce] = proof.timestamp
        return profile

    def authenticate(self, claim: Claim, purpose: str) -> VirtualIdentity:
        try:
            vid = compute_vid(claim.profile, claim.owner_sign)
        except ValueError as exc:
            raise IdentityError(str(exc)) from exc
        if vid != claim.proof.vid:
            raise IdentityError("proof does not belong to the presented identity")
        self.authenticate_proof(claim.proof, purpose)
        return vid


@dataclass
class DelegationRevocationList:
    entries: dict[VirtualIdentity, int] = field(default_factory=dict)

    def add(self, vid: VirtualIdentity, when: int) -> None:
        self.entries.setdefault(vid, when)

    def __contains__(self, vid: VirtualIdentity) -> bool:
        return vid in self.entries


@dataclass
class DelegationState:
    domain_id: str
    delegatee: VirtualIdentity | None = None
    certificate: DelegationCertificate | None = None
    revoked: list[VirtualIdentity] = field(default_factory=list)


class DelegationAuthority:
    """DAC: issues, acknowledges and revokes delegation certificates."""

    def __init__(
        self,
        root_key: SigningKey,
        root_vid: VirtualIdentity,
        iac: IdentityAuthority,
        clock: Clock,
        *,
        dc_lifetime: int = DEFAULT_DC_LIFETIME,
    ):
        self.root_key = root_key
        self.root_vid = root_vid
        self.iac = iac
        self.clock = clock
        self.dc_lifetime = dc_lifetime
        self.drl = DelegationRevocationList()
        self.domains: dict[str, DelegationState] = {}
        self.issued: list[DelegationCertificate] = []
        self._lock = threading.RLock()

    def _sign(self, delegatee: VirtualIdentity, domain_id: str) -> DelegationCertificate:
        now = self.clock.now()
        dc = DelegationCertificate(delegatee, self.root_vid, domain_id, 1, now, now + self.dc_lifetime)
        signed = DelegationCertificate(
            dc.delegatee_vid, dc.delegator_vid, dc.domain_id, dc.depth,
            dc.issue_time, dc.expiry, self.root_key.sign(dc.body()),
        )
        self.issued.append(signed)
        return signed

    def request_delegation(self, claim: Claim) -> DelegationCertificate:
        """Delegation request: only the authenticated root gets a (self) certificate."""
        with self._lock:
            vid = self.iac.authenticate(claim, "delegation-request")
            if vid in self.drl:
                raise DelegationError("identity is on the delegation revocation list")
            if vid != self.root_vid:
                raise DelegationError("only the root delegator may request delegation")
            return self._sign(vid, ROOT_DOMAIN)

    def root_certificate(self) -> DelegationCertificate:
        """The root's own certificate, obtained without a network round trip."""
        with self._lock:
            return self._sign(self.root_vid, ROOT_DOMAIN)

    def offer_delegation(self, dc: DelegationCertificate, delegatee: Claim, domain_id: str) -> DelegationCertificate:
        """Delegation acknowledgement for an offer carrying ``dc``; returns the delegatee's certificate."""
        with self._lock:
            if not dc.verify(self.root_key.public_bytes):
                raise DelegationError("offered delegation certificate is forged")
            now = self.clock.now()
            if not dc.valid_at(now):
                raise DelegationError("offered delegation certificate is stale")
            if dc.delegatee_vid != self.root_vid or dc.delegator_vid != self.root_vid:
                raise DelegationError("only the root delegator may propagate delegation")
            if dc.delegator_vid in self.drl:
                raise DelegationError("delegator is on the delegation revocation list")
            vid = self.iac.authenticate(delegatee, "delegation-ack")
            if vid == self.root_vid:
                raise DelegationError("root cannot be a domain delegatee")
            if vid in self.drl:
                raise DelegationError("delegatee is on the delegation revocation list")
            state = self.domains.setdefault(domain_id, DelegationState(domain_id))
            current = state.certificate
            if (
                state.delegatee is not None
                and state.delegatee != vid
                and current is not None
                and current.valid_at(now)
            ):
                raise DelegationError(f"domain {domain_id!r} already has an active delegatee")
            for other in self.domains.values():
                if other is not state and other.delegatee == vid:
                    raise DelegationError("delegatee already serves another domain")
            new_dc = self._sign(vid, domain_id)
            state.delegatee, state.certificate = vid, new_dc
            log.info("delegated domain %s to %s", domain_id, vid.hex[:12])
            return new_dc

    def revoke_delegation(
        self,
        old_delegatee: VirtualIdentity,
        new_delegatee: Claim | None = None,
        *,
        ttl: int = DEFAULT_COORDINATOR_REVOCATION_TTL,
    ) -> RevocationCertificate:
        with self._lock:
            state = next((s for s in self.domains.values() if s.delegatee == old_delegatee), None)
            if state is None:
                raise DelegationError("not an active delegatee")
            now = self.clock.now()
            self.drl.add(old_delegatee, now)
            state.revoked.append(old_delegatee)
            state.delegatee = state.certificate = None
            body = RevocationCertificate(
                old_delegatee, RevocationScope.COORDINATOR, now, now + ttl, self.root_key.public_bytes
            )
            cert = RevocationCertificate(
                body.revoked_vid, body.scope, body.issue_time, body.expire_time,
                body.issuer, self.root_key.sign(body.body()),
            )
            if new_delegatee is not None:
                self.offer_delegation(self.root_certificate(), new_delegatee, state.domain_id)
            return cert

    def active_certificate(self, vid: VirtualIdentity) -> DelegationCertificate | None:
        """The unexpired certificate ``vid`` currently holds as a domain delegatee."""
        with self._lock:
            if vid in self.drl:
                return None
            now = self.clock.now()
            for state in self.domains.values():
                if state.delegatee == vid and state.certificate and state.certificate.valid_at(now):
                    return state.certificate
            return None
