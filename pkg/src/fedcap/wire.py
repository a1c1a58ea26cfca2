"""JSON wire encodings.

Tokens follow the field layout of the deployed prototype::

    {"id", "issuer", "issue_time", "issue_sign", "subject", "resource",
     "starttime", "endtime", "access_right": [{"action", "resource",
     "conditions"}], "rnd_i"}

Binary values are lowercase hex.  Parsing is strict: exact key sets,
lowercase hex only, real integers, no duplicate keys.  Anything else raises
:class:`WireError`, which callers treat as a deny.
"""

from __future__ import annotations

import json
import re
from typing import Any, Callable

from .model import (
    AccessRight,
    CapabilityToken,
    Condition,
    ConditionKind,
    DelegationCertificate,
    InternalCapability,
    Profile,
    RevocationCertificate,
    VirtualIdentity,
)


class WireError(ValueError):
    pass


_HEX_RE = re.compile(r"^(?:[0-9a-f]{2})*$")
_UUID_RE = re.compile(r"^[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}$")

TOKEN_KEYS = (
    "id", "issuer", "issue_time", "issue_sign", "subject", "resource",
    "starttime", "endtime", "access_right", "rnd_i",
)
ACCESS_RIGHT_KEYS = ("action", "resource", "conditions")
_CONDITION_KEYS = {
    ConditionKind.TIME_WINDOW: ("start", "end"),
    ConditionKind.WEEKDAY_SET: ("days",),
    ConditionKind.CLIENT_NETWORK: ("cidr",),
    ConditionKind.ENV_EQUALS: ("key", "value"),
}


def _no_duplicates(pairs: list[tuple[str, Any]]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for k, v in pairs:
        if k in out:
            raise WireError(f"duplicate key {k!r}")
        out[k] = v
    return out


def _reject_constant(name: str) -> Any:
    raise WireError(f"non-finite number {name}")


def loads(text: str | bytes) -> Any:
    try:
        return json.loads(text, object_pairs_hook=_no_duplicates, parse_constant=_reject_constant)
    except WireError:
        raise
    except (ValueError, UnicodeDecodeError) as exc:
        raise WireError(f"invalid JSON: {exc}") from exc


def dumps(obj: Any) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


# -- field helpers ----------------------------------------------------------

def _obj(data: Any, keys: tuple[str, ...], what: str) -> dict[str, Any]:
    if not isinstance(data, dict):
        raise WireError(f"{what} must be an object")
    got = set(data)
    if got != set(keys):
        extra, missing = sorted(got - set(keys)), sorted(set(keys) - got)
        raise WireError(f"{what}: unknown keys {extra}, missing keys {missing}")
    return data


def _hex(value: Any, what: str, size: int | None = None) -> bytes:
    if not isinstance(value, str) or not _HEX_RE.match(value):
        raise WireError(f"{what} must be lowercase hex")
    raw = bytes.fromhex(value)
    if size is not None and len(raw) != size:
        raise WireError(f"{what} must be {size} bytes")
    return raw


def _int(value: Any, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise WireError(f"{what} must be an integer")
    return value


def _str(value: Any, what: str) -> str:
    if not isinstance(value, str):
        raise WireError(f"{what} must be a string")
    return value


def _list(value: Any, what: str) -> list[Any]:
    if not isinstance(value, list):
        raise WireError(f"{what} must be a list")
    return value


def _guard(fn: Callable[[], Any], what: str) -> Any:
    """Run a constructor, converting invariant failures into WireError."""
    try:
        return fn()
    except WireError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise WireError(f"invalid {what}: {exc}") from exc


# -- VID --------------------------------------------------------------------

def vid_from_json(value: Any) -> VirtualIdentity:
    return VirtualIdentity(_hex(value, "vid", 32))


# -- conditions and access rights -----------------------------------------

def condition_to_json(c: Condition) -> dict[str, Any]:
    if c.kind is ConditionKind.TIME_WINDOW:
        return {"kind": c.kind.value, "start": c.params[0], "end": c.params[1]}
    if c.kind is ConditionKind.WEEKDAY_SET:
        return {"kind": c.kind.value, "days": list(c.params)}
    if c.kind is ConditionKind.CLIENT_NETWORK:
        return {"kind": c.kind.value, "cidr": c.params[0]}
    return {"kind": c.kind.value, "key": c.params[0], "value": c.params[1]}


def condition_from_json(data: Any) -> Condition:
    if not isinstance(data, dict) or "kind" not in data:
        raise WireError("condition must be an object with a kind")
    try:
        kind = ConditionKind(data["kind"])
    except ValueError as exc:
        raise WireError(f"unknown condition kind {data['kind']!r}") from exc
    fields = _CONDITION_KEYS[kind]
    d = _obj(data, ("kind",) + fields, "condition")
    if kind is ConditionKind.WEEKDAY_SET:
        days = [_str(x, "weekday") for x in _list(d["days"], "days")]
        return _guard(lambda: Condition(kind, tuple(days)), "condition")
    params = tuple(_str(d[f], f) for f in fields)
    return _guard(lambda: Condition(kind, params), "condition")


def access_right_to_json(r: AccessRight) -> dict[str, Any]:
    return {
        "action": r.action.value,
        "resource": r.resource,
        "conditions": [condition_to_json(c) for c in r.conditions],
    }


def access_right_from_json(data: Any, *, require_conditions: bool = True) -> AccessRight:
    if not require_conditions and isinstance(data, dict) and "conditions" not in data:
        data = {**data, "conditions": []}
    d = _obj(data, ACCESS_RIGHT_KEYS, "access_right element")
    conds = tuple(condition_from_json(c) for c in _list(d["conditions"], "conditions"))
    action, resource = _str(d["action"], "action"), _str(d["resource"], "resource")
    return _guard(lambda: AccessRight(action, resource, conds), "access right")


def rights_from_json(data: Any, *, require_conditions: bool = False) -> tuple[AccessRight, ...]:
    return tuple(
        access_right_from_json(r, require_conditions=require_conditions)
        for r in _list(data, "access rights")
    )


# -- tokens -----------------------------------------------------------------

def token_to_json(t: CapabilityToken) -> dict[str, Any]:
    return {
        "id": t.id,
        "issuer": t.issuer.hex(),
        "issue_time": t.issue_time,
        "issue_sign": t.issue_sign.hex(),
        "subject": t.subject.hex,
        "resource": t.resource,
        "starttime": t.starttime,
        "endtime": t.endtime,
        "access_right": [access_right_to_json(r) for r in t.access_right],
        "rnd_i": t.rnd_i.hex(),
    }


def token_from_json(data: Any) -> CapabilityToken:
    d = _obj(data, TOKEN_KEYS, "token")
    token_id = _str(d["id"], "id")
    if not _UUID_RE.match(token_id):
        raise WireError("id must be a lowercase UUID")
    rights = tuple(access_right_from_json(r) for r in _list(d["access_right"], "access_right"))
    fields = dict(
        id=token_id,
        issuer=_hex(d["issuer"], "issuer"),
        issue_time=_int(d["issue_time"], "issue_time"),
        issue_sign=_hex(d["issue_sign"], "issue_sign"),
        subject=vid_from_json(d["subject"]),
        resource=_str(d["resource"], "resource"),
        starttime=_int(d["starttime"], "starttime"),
        endtime=_int(d["endtime"], "endtime"),
        access_right=rights,
        rnd_i=_hex(d["rnd_i"], "rnd_i", 32),
    )
    return _guard(lambda: CapabilityToken(**fields), "token")


def encode_token(t: CapabilityToken) -> str:
    return dumps(token_to_json(t))


def decode_token(text: str | bytes) -> CapabilityToken:
    return token_from_json(loads(text))


# -- profiles, capabilities, certificates ---------------------------------

def profile_to_json(p: Profile) -> dict[str, Any]:
    return {
        "entity_kind": p.entity_kind.value,
        "attributes": [[k, v] for k, v in p.attributes],
        "public_key": p.public_key.hex(),
        "domain_id": p.domain_id,
    }


def profile_from_json(data: Any) -> Profile:
    d = _obj(data, ("entity_kind", "attributes", "public_key", "domain_id"), "profile")
    attrs = []
    for pair in _list(d["attributes"], "attributes"):
        if not isinstance(pair, list) or len(pair) != 2:
            raise WireError("attribute must be a [key, value] pair")
        attrs.append((_str(pair[0], "attribute key"), _str(pair[1], "attribute value")))
    kind, key = d["entity_kind"], _hex(d["public_key"], "public_key")
    domain = _str(d["domain_id"], "domain_id")
    return _guard(lambda: Profile(kind, tuple(attrs), key, domain), "profile")


def incap_to_json(c: InternalCapability) -> dict[str, Any]:
    return {
        "vid_o": c.vid_o.hex,
        "access_rights": [access_right_to_json(r) for r in c.access_rights],
        "rnd0": c.rnd0.hex(),
    }


def incap_from_json(data: Any) -> InternalCapability:
    d = _obj(data, ("vid_o", "access_rights", "rnd0"), "internal capability")
    rights = tuple(access_right_from_json(r) for r in _list(d["access_rights"], "access_rights"))
    vid, rnd0 = vid_from_json(d["vid_o"]), _hex(d["rnd0"], "rnd0", 32)
    return _guard(lambda: InternalCapability(vid, rights, rnd0), "internal capability")


_DC_KEYS = ("delegatee_vid", "delegator_vid", "domain_id", "depth", "issue_time", "expiry", "signature")


def dc_to_json(dc: DelegationCertificate) -> dict[str, Any]:
    return {
        "delegatee_vid": dc.delegatee_vid.hex,
        "delegator_vid": dc.delegator_vid.hex,
        "domain_id": dc.domain_id,
        "depth": dc.depth,
        "issue_time": dc.issue_time,
        "expiry": dc.expiry,
        "signature": dc.signature.hex(),
    }


def dc_from_json(data: Any) -> DelegationCertificate:
    d = _obj(data, _DC_KEYS, "delegation certificate")
    fields = dict(
        delegatee_vid=vid_from_json(d["delegatee_vid"]),
        delegator_vid=vid_from_json(d["delegator_vid"]),
        domain_id=_str(d["domain_id"], "domain_id"),
        depth=_int(d["depth"], "depth"),
        issue_time=_int(d["issue_time"], "issue_time"),
        expiry=_int(d["expiry"], "expiry"),
        signature=_hex(d["signature"], "signature"),
    )
    return _guard(lambda: DelegationCertificate(**fields), "delegation certificate")


_RC_KEYS = ("revoked_vid", "scope", "issue_time", "expire_time", "issuer", "signature")


def rc_to_json(rc: RevocationCertificate) -> dict[str, Any]:
    return {
        "revoked_vid": rc.revoked_vid.hex,
        "scope": rc.scope.value,
        "issue_time": rc.issue_time,
        "expire_time": rc.expire_time,
        "issuer": rc.issuer.hex(),
        "signature": rc.signature.hex(),
    }


def rc_from_json(data: Any) -> RevocationCertificate:
    d = _obj(data, _RC_KEYS, "revocation certificate")
    fields = dict(
        revoked_vid=vid_from_json(d["revoked_vid"]),
        scope=_str(d["scope"], "scope"),
        issue_time=_int(d["issue_time"], "issue_time"),
        expire_time=_int(d["expire_time"], "expire_time"),
        issuer=_hex(d["issuer"], "issuer"),
        signature=_hex(d["signature"], "signature"),
    )
    return _guard(lambda: RevocationCertificate(**fields), "revocation certificate")
