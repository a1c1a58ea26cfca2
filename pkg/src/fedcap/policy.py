"""Flat allowlist policy rules, the capability pool, and token issuance.

Rules are evaluated first-match, default-deny.  A rule matches when every
``(attribute, value)`` pair in ``subject_match`` equals the subject profile's
attribute and ``object_vid`` names the requested object.  A matching rule
with no granted rights is a tombstone: an explicit deny.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

from . import canonical as C
from . import wire
from .capability import mint_external_cap, mint_internal_cap
from .clock import Clock
from .crypto import SigningKey
from .errors import Rejected
from .model import (
    AccessRight,
    CapabilityToken,
    Condition,
    InternalCapability,
    Profile,
    VirtualIdentity,
)


@dataclass(frozen=True)
class PolicyRule:
    subject_match: tuple[tuple[str, str], ...]
    object_vid: VirtualIdentity
    granted: tuple[AccessRight, ...]
    validity_duration: int = 3600
    conditions: tuple[Condition, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "subject_match", tuple((str(k), str(v)) for k, v in self.subject_match))
        object.__setattr__(self, "granted", tuple(self.granted))
        object.__setattr__(self, "conditions", tuple(self.conditions))
        if self.validity_duration <= 0:
            raise ValueError("validity_duration must be positive")

    @property
    def is_tombstone(self) -> bool:
        return not self.granted

    def matches(self, subject: Profile, object_vid: VirtualIdentity) -> bool:
        return object_vid == self.object_vid and all(
            subject.attribute(k) == v for k, v in self.subject_match
        )

    def to_json(self) -> dict[str, Any]:
        return {
            "subject_match": {k: v for k, v in self.subject_match},
            "object_vid": self.object_vid.hex,
            "granted": [wire.access_right_to_json(r) for r in self.granted],
            "validity_duration": self.validity_duration,
            "conditions": [wire.condition_to_json(c) for c in self.conditions],
        }

    @classmethod
    def from_json(cls, d: dict[str, Any]) -> "PolicyRule":
        return cls(
            subject_match=tuple(d.get("subject_match", {}).items()),
            object_vid=wire.vid_from_json(d["object_vid"]),
            granted=wire.rights_from_json(d.get("granted", [])),
            validity_duration=int(d.get("validity_duration", 3600)),
            conditions=tuple(wire.condition_from_json(c) for c in d.get("conditions", [])),
        )


@dataclass
class CapabilityPool:
    """Object VID -> internal capability, with a version bumped on every mutation."""

    entries: dict[VirtualIdentity, InternalCapability] = field(default_factory=dict)
    version: int = 0

    def put(self, incap: InternalCapability) -> None:
        self.entries[incap.vid_o] = incap
        self.version += 1

    def remove(self, vid: VirtualIdentity) -> bool:
        if vid not in self.entries:
            return False
        del self.entries[vid]
        self.version += 1
        return True

    def get(self, vid: VirtualIdentity) -> InternalCapability | None:
        return self.entries.get(vid)

    def state_bytes(self) -> bytes:
        """Canonical image of the pool, used to compare replicas."""
        ordered = sorted(self.entries.values(), key=lambda c: c.vid_o.digest)
        return C.enc_record("CapabilityPool", [C.enc_int(self.version), C.enc_list(c.canonical() for c in ordered)])


def select_rule(
    rules: Sequence[PolicyRule], subject: Profile, object_vid: VirtualIdentity
) -> tuple[int, PolicyRule] | None:
    for i, rule in enumerate(rules):
        if rule.matches(subject, object_vid):
            return i, rule
    return None


def grant_intersection(
    rule: PolicyRule, incap: InternalCapability, requested: Iterable[AccessRight]
) -> tuple[AccessRight, ...]:
    """Rule elements whose (action, resource) was requested and exists in the pool entry."""
    wanted = {r.key for r in requested}
    available = {r.key for r in incap.access_rights}
    return tuple(r for r in rule.granted if r.key in wanted and r.key in available)


@dataclass(frozen=True)
class IssuanceRecord:
    token: CapabilityToken
    rule_index: int
    rule: PolicyRule


class Issuer:
    """Policy-based external capability issuance shared by PDC and coordinators."""

    def __init__(self, key: SigningKey, clock: Clock):
        self.key = key
        self.clock = clock
        self.log: list[IssuanceRecord] = []
        self._lock = threading.Lock()

    def issue(
        self,
        rules: Sequence[PolicyRule],
        lookup: Callable[[VirtualIdentity], Profile | None],
        pool: CapabilityPool,
        subject_vid: VirtualIdentity,
        object_vid: VirtualIdentity,
        requested: Sequence[AccessRight],
        *,
        not_after: int | None = None,
    ) -> CapabilityToken:
        subject = lookup(subject_vid)
        if subject is None:
            raise Rejected("subject is not registered")
        obj = lookup(object_vid)
        if obj is None:
            raise Rejected("object is not registered")
        incap = pool.get(object_vid)
        if incap is None:
            raise Rejected("object has no internal capability (service unavailable)")
        hit = select_rule(rules, subject, object_vid)
        if hit is None:
            raise Rejected("no policy rule matches")
        index, rule = hit
        if rule.is_tombstone:
            raise Rejected("explicitly denied by policy")
        granted = grant_intersection(rule, incap, requested)
        if not granted:
            raise Rejected("requested rights not granted by policy")
        now = self.clock.now()
        end = now + rule.validity_duration
        if not_after is not None:
            end = min(end, not_after)
        token = mint_external_cap(
            incap,
            subject_vid,
            rule.conditions,
            (now, end),
            self.key,
            access_rights=granted,
            resource=obj.attribute("address") or object_vid.hex,
            now=now,
        )
        with self._lock:
            self.log.append(IssuanceRecord(token, index, rule))
        return token


def publish(pool: CapabilityPool, vid_o: VirtualIdentity, rights: Sequence[AccessRight]) -> InternalCapability:
    incap = mint_internal_cap(vid_o, rights)
    pool.put(incap)
    return incap
