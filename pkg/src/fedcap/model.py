"""Domain values shared by every fedcap component.

All value types are frozen dataclasses that validate their invariants on
construction and know how to encode themselves canonically (see
:mod:`fedcap.canonical`).  ``RevocationList`` is the one mutable container;
it is safe for concurrent readers with serialized writers.
"""

from __future__ import annotations

import ipaddress
import re
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Iterable, Mapping

from . import canonical as C
from .crypto import DIGEST_SIZE, verify


class EntityKind(str, Enum):
    SUBJECT = "subject"
    OBJECT = "object"
    COORDINATOR = "coordinator"
    PDC = "pdc"


class Action(str, Enum):
    GET = "GET"
    PUT = "PUT"
    POST = "POST"
    DELETE = "DELETE"


class ConditionKind(str, Enum):
    TIME_WINDOW = "time_window"
    WEEKDAY_SET = "weekday_set"
    CLIENT_NETWORK = "client_network"
    ENV_EQUALS = "env_equals"


class RevocationScope(str, Enum):
    SUBJECT_CAP = "subject_cap"
    COORDINATOR = "coordinator"


WEEKDAYS = ("monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday")
_CLOCK_RE = re.compile(r"^([01]\d|2[0-3]):([0-5]\d)(?::([0-5]\d))?$")


def clock_seconds(text: str) -> int:
    """``"HH:MM"`` or ``"HH:MM:SS"`` to seconds after midnight."""
    m = _CLOCK_RE.match(text)
    if not m:
        raise ValueError(f"bad clock time {text!r}")
    return int(m.group(1)) * 3600 + int(m.group(2)) * 60 + int(m.group(3) or 0)


def _normalize_weekday(name: str) -> str:
    low = name.strip().lower()
    for day in WEEKDAYS:
        if low == day or low == day[:3]:
            return day
    raise ValueError(f"unknown weekday {name!r}")


@dataclass(frozen=True)
class VirtualIdentity:
    digest: bytes

    def __post_init__(self) -> None:
        if not isinstance(self.digest, bytes) or len(self.digest) != DIGEST_SIZE:
            raise ValueError("VID digest must be exactly 32 bytes")

    @property
    def hex(self) -> str:
        return self.digest.hex()

    @classmethod
    def from_hex(cls, text: str) -> "VirtualIdentity":
        if not isinstance(text, str) or text != text.lower():
            raise ValueError("VID text form is lowercase hex")
        return cls(bytes.fromhex(text))

    def canonical(self) -> bytes:
        return C.enc_record("VID", [C.enc_bytes(self.digest)])

    def __str__(self) -> str:
        return self.hex

    def __repr__(self) -> str:
        return f"VID({self.hex[:12]})"


@dataclass(frozen=True)
class Profile:
    entity_kind: EntityKind
    attributes: tuple[tuple[str, str], ...]
    public_key: bytes
    domain_id: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "entity_kind", EntityKind(self.entity_kind))
        attrs = tuple((str(k), str(v)) for k, v in self.attributes)
        object.__setattr__(self, "attributes", attrs)
        if not attrs:
            raise ValueError("profile attributes must be non-empty")
        keys = [k for k, _ in attrs]
        if len(set(keys)) != len(keys):
            raise ValueError("profile attribute keys must be unique")
        if not self.domain_id:
            raise ValueError("profile domain_id must be non-empty")
        if not isinstance(self.public_key, bytes):
            raise ValueError("public_key must be bytes")

    def attribute(self, key: str) -> str | None:
        for k, v in self.attributes:
            if k == key:
                return v
        return None

    def canonical(self) -> bytes:
        return C.enc_record(
            "Profile",
            [
                C.enc_str(self.entity_kind.value),
                C.enc_list(C.enc_list([C.enc_str(k), C.enc_str(v)]) for k, v in self.attributes),
                C.enc_bytes(self.public_key),
                C.enc_str(self.domain_id),
            ],
        )


@dataclass(frozen=True)
class Condition:
    """A local context constraint checked on the service provider.

    ``params`` layout per kind:
      time_window     (start "HH:MM", end "HH:MM"), UTC, half-open
      weekday_set     (day, ...) lowercase full names, UTC
      client_network  (cidr,)
      env_equals      (key, value)
    """

    kind: ConditionKind
    params: tuple[str, ...]

    def __post_init__(self) -> None:
        kind = ConditionKind(self.kind)
        object.__setattr__(self, "kind", kind)
        params = tuple(self.params)
        if not all(isinstance(p, str) for p in params):
            raise ValueError("condition parameters must be strings")
        if kind is ConditionKind.TIME_WINDOW:
            if len(params) != 2:
                raise ValueError("time_window takes start and end")
            if clock_seconds(params[0]) >= clock_seconds(params[1]):
                raise ValueError("time_window start must precede end")
        elif kind is ConditionKind.WEEKDAY_SET:
            if not params:
                raise ValueError("weekday_set must be non-empty")
            params = tuple(_normalize_weekday(d) for d in params)
        elif kind is ConditionKind.CLIENT_NETWORK:
            if len(params) != 1:
                raise ValueError("client_network takes one CIDR")
            ipaddress.ip_network(params[0], strict=False)
        elif kind is ConditionKind.ENV_EQUALS:
            if len(params) != 2 or not params[0]:
                raise ValueError("env_equals takes a key and a value")
        object.__setattr__(self, "params", params)

    @classmethod
    def time_window(cls, start: str, end: str) -> "Condition":
        return cls(ConditionKind.TIME_WINDOW, (start, end))

    @classmethod
    def weekdays(cls, *days: str) -> "Condition":
        return cls(ConditionKind.WEEKDAY_SET, days)

    @classmethod
    def client_network(cls, cidr: str) -> "Condition":
        return cls(ConditionKind.CLIENT_NETWORK, (cidr,))

    @classmethod
    def env_equals(cls, key: str, value: str) -> "Condition":
        return cls(ConditionKind.ENV_EQUALS, (key, value))

    def is_satisfied(self, now: int, client_address: str, environment: Mapping[str, str]) -> bool:
        if self.kind is ConditionKind.TIME_WINDOW:
            t = now % 86400
            return clock_seconds(self.params[0]) <= t < clock_seconds(self.params[1])
        if self.kind is ConditionKind.WEEKDAY_SET:
            day = WEEKDAYS[datetime.fromtimestamp(now, tz=timezone.utc).weekday()]
            return day in self.params
        if self.kind is ConditionKind.CLIENT_NETWORK:
            net = ipaddress.ip_network(self.params[0], strict=False)
            return ipaddress.ip_address(client_address) in net
        key, value = self.params
        return environment.get(key) == value

    def canonical(self) -> bytes:
        return C.enc_record(
            "Condition",
            [C.enc_str(self.kind.value), C.enc_list(C.enc_str(p) for p in self.params)],
        )


@dataclass(frozen=True)
class AccessRight:
    action: Action
    resource: str
    conditions: tuple[Condition, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "action", Action(self.action))
        object.__setattr__(self, "conditions", tuple(self.conditions))
        if not isinstance(self.resource, str) or not self.resource.startswith("/"):
            raise ValueError(f"resource must begin with '/': {self.resource!r}")

    @property
    def key(self) -> tuple[str, str]:
        return (self.action.value, self.resource)

    def bare(self) -> "AccessRight":
        return AccessRight(self.action, self.resource)

    def canonical(self) -> bytes:
        return C.enc_record(
            "AccessRight",
            [
                C.enc_str(self.action.value),
                C.enc_str(self.resource),
                C.enc_list(c.canonical() for c in self.conditions),
            ],
        )


def encode_rights(rights: Iterable[AccessRight]) -> bytes:
    return C.enc_list(r.canonical() for r in rights)


@dataclass(frozen=True)
class InternalCapability:
    vid_o: VirtualIdentity
    access_rights: tuple[AccessRight, ...]
    rnd0: bytes

    def __post_init__(self) -> None:
        object.__setattr__(self, "access_rights", tuple(self.access_rights))
        if len(self.rnd0) != DIGEST_SIZE:
            raise ValueError("rnd0 must be 32 bytes")

    def canonical(self) -> bytes:
        return C.enc_record(
            "InternalCapability",
            [self.vid_o.canonical(), encode_rights(self.access_rights), C.enc_bytes(self.rnd0)],
        )


@dataclass(frozen=True)
class CapabilityToken:
    id: str
    issuer: bytes
    issue_time: int
    issue_sign: bytes
    subject: VirtualIdentity
    resource: str
    starttime: int
    endtime: int
    access_right: tuple[AccessRight, ...]
    rnd_i: bytes

    def __post_init__(self) -> None:
        object.__setattr__(self, "access_right", tuple(self.access_right))
        for name in ("issue_time", "starttime", "endtime"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int):
                raise ValueError(f"{name} must be an integer")
        if self.starttime > self.endtime:
            raise ValueError("starttime must not exceed endtime")
        if self.issue_time > self.endtime:
            raise ValueError("issue_time must not exceed endtime")
        if len(self.rnd_i) != DIGEST_SIZE:
            raise ValueError("rnd_i must be 32 bytes")

    def body(self) -> bytes:
        """Canonical bytes covered by ``issue_sign``."""
        return C.enc_record(
            "CapabilityToken",
            [
                C.enc_str(self.id),
                C.enc_bytes(self.issuer),
                C.enc_int(self.issue_time),
                self.subject.canonical(),
                C.enc_str(self.resource),
                C.enc_int(self.starttime),
                C.enc_int(self.endtime),
                encode_rights(self.access_right),
                C.enc_bytes(self.rnd_i),
            ],
        )

    def canonical(self) -> bytes:
        return C.enc_record("SignedCapabilityToken", [self.body(), C.enc_bytes(self.issue_sign)])


@dataclass(frozen=True)
class DelegationCertificate:
    delegatee_vid: VirtualIdentity
    delegator_vid: VirtualIdentity
    domain_id: str
    depth: int
    issue_time: int
    expiry: int
    signature: bytes = b""

    def __post_init__(self) -> None:
        if self.depth != 1:
            raise ValueError("delegation depth is limited to 1")
        if self.issue_time >= self.expiry:
            raise ValueError("delegation certificate must expire after issue")
        if not self.domain_id:
            raise ValueError("domain_id must be non-empty")

    def body(self) -> bytes:
        return C.enc_record(
            "DelegationCertificate",
            [
                self.delegatee_vid.canonical(),
                self.delegator_vid.canonical(),
                C.enc_str(self.domain_id),
                C.enc_int(self.depth),
                C.enc_int(self.issue_time),
                C.enc_int(self.expiry),
            ],
        )

    def canonical(self) -> bytes:
        return C.enc_record("SignedDelegationCertificate", [self.body(), C.enc_bytes(self.signature)])

    def verify(self, root_key: bytes) -> bool:
        return verify(root_key, self.signature, self.body())

    def valid_at(self, now: int) -> bool:
        return self.issue_time <= now < self.expiry


@dataclass(frozen=True)
class RevocationCertificate:
    revoked_vid: VirtualIdentity
    scope: RevocationScope
    issue_time: int
    expire_time: int
    issuer: bytes
    signature: bytes = b""

    def __post_init__(self) -> None:
        object.__setattr__(self, "scope", RevocationScope(self.scope))
        if self.issue_time >= self.expire_time:
            raise ValueError("revocation certificate must expire after issue")

    def body(self) -> bytes:
        return C.enc_record(
            "RevocationCertificate",
            [
                self.revoked_vid.canonical(),
                C.enc_str(self.scope.value),
                C.enc_int(self.issue_time),
                C.enc_int(self.expire_time),
                C.enc_bytes(self.issuer),
            ],
        )

    def canonical(self) -> bytes:
        return C.enc_record("SignedRevocationCertificate", [self.body(), C.enc_bytes(self.signature)])

    def verify(self) -> bool:
        return verify(self.issuer, self.signature, self.body())


@dataclass
class RevocationList:
    """Provider-side list of revoked subjects plus the latest coordinator revocation.

    Writers take the lock and swap in fresh containers, so a reader holding a
    reference never sees a half-applied certificate.
    """

    _entries: dict[VirtualIdentity, int] = field(default_factory=dict)
    last_certificate: RevocationCertificate | None = None
    _revoked_issuers: frozenset[VirtualIdentity] = frozenset()
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    @property
    def entries(self) -> set[tuple[VirtualIdentity, int]]:
        return set(self._entries.items())

    @property
    def revoked_coordinators(self) -> frozenset[VirtualIdentity]:
        return self._revoked_issuers

    def add(self, vid: VirtualIdentity, expire_time: int) -> None:
        with self._lock:
            entries = dict(self._entries)
            entries[vid] = max(expire_time, entries.get(vid, expire_time))
            self._entries = entries

    def apply(self, cert: RevocationCertificate) -> bool:
        """Record ``cert`` (signature already checked).  Returns False if ignored."""
        if cert.scope is RevocationScope.SUBJECT_CAP:
            self.add(cert.revoked_vid, cert.expire_time)
            return True
        with self._lock:
            last = self.last_certificate
            if last is not None and cert.issue_time <= last.issue_time:
                return False
            self._revoked_issuers = self._revoked_issuers | {cert.revoked_vid}
            self.last_certificate = cert
            return True

    def is_revoked(self, vid: VirtualIdentity, now: int) -> bool:
        expire = self._entries.get(vid)
        return expire is not None and now < expire

    def prune(self, now: int) -> int:
        with self._lock:
            keep = {v: e for v, e in self._entries.items() if e > now}
            dropped = len(self._entries) - len(keep)
            self._entries = keep
        return dropped
