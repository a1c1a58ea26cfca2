"""Identity and capability construction: VIDs, internal/external capabilities.

Hash chaining::

    vid   = H(canon(profile) || owner_sign)
    rnd0  = H(canon(vid_o) || canon(rights))
    rnd_i = H(canon(vid_s) || canon(vid_o) || canon(bare rights)
              || canon(per-right condition lists) || canon(rnd0))

The external token carries the provider's network address rather than its
VID, so ``vid_o`` and ``rnd0`` must be supplied again to re-check the chain.
"""

from __future__ import annotations

import time
import uuid
from dataclasses import replace
from typing import Sequence

from . import canonical as C
from .crypto import SigningKey, digest, verify
from .model import (
    AccessRight,
    CapabilityToken,
    Condition,
    InternalCapability,
    Profile,
    VirtualIdentity,
    encode_rights,
)


def compute_vid(profile: Profile, owner_sign: bytes) -> VirtualIdentity:
    if not owner_sign:
        raise ValueError("owner signature must be non-empty")
    return VirtualIdentity(digest(profile.canonical(), bytes(owner_sign)))


def owner_signature(profile: Profile, owner_key: SigningKey) -> bytes:
    """Convenience: the owner signs the canonical profile."""
    return owner_key.sign(profile.canonical())


def compute_rnd0(vid_o: VirtualIdentity, rights: Sequence[AccessRight]) -> bytes:
    return digest(vid_o.canonical(), encode_rights(rights))


def mint_internal_cap(vid_o: VirtualIdentity, ar: Sequence[AccessRight]) -> InternalCapability:
    rights = tuple(ar)
    return InternalCapability(vid_o, rights, compute_rnd0(vid_o, rights))


def compute_rnd_i(
    subject: VirtualIdentity,
    vid_o: VirtualIdentity,
    rights: Sequence[AccessRight],
    rnd0: bytes,
) -> bytes:
    bare = encode_rights(r.bare() for r in rights)
    conds = C.enc_list(C.enc_list(c.canonical() for c in r.conditions) for r in rights)
    return digest(subject.canonical(), vid_o.canonical(), bare, conds, C.enc_bytes(rnd0))


def mint_external_cap(
    incap: InternalCapability,
    subject_vid: VirtualIdentity,
    conditions: Sequence[Condition],
    validity: tuple[int, int],
    issuer_key: SigningKey,
    *,
    access_rights: Sequence[AccessRight] | None = None,
    resource: str | None = None,
    now: int | None = None,
    token_id: str | None = None,
) -> CapabilityToken:
    """Derive a signed, subject-bound token from ``incap``.

    ``access_rights`` narrows the grant (defaults to everything in ``incap``);
    each must name an (action, resource) pair present in ``incap``.  The
    ``conditions`` are appended to every granted right.
    """
    start, end = validity
    if start > end:
        raise ValueError("validity start must not exceed end")
    allowed = {r.key for r in incap.access_rights}
    chosen = incap.access_rights if access_rights is None else tuple(access_rights)
    for r in chosen:
        if r.key not in allowed:
            raise ValueError(f"{r.action.value} {r.resource} not in internal capability")
    extra = tuple(conditions)
    rights = tuple(AccessRight(r.action, r.resource, r.conditions + extra) for r in chosen)

    issue_time = int(time.time()) if now is None else now
    unsigned = CapabilityToken(
        id=token_id or str(uuid.uuid4()),
        issuer=issuer_key.public_bytes,
        issue_time=issue_time,
        issue_sign=b"",
        subject=subject_vid,
        resource=resource if resource is not None else incap.vid_o.hex,
        starttime=start,
        endtime=end,
        access_right=rights,
        rnd_i=compute_rnd_i(subject_vid, incap.vid_o, rights, incap.rnd0),
    )
    return sign_token(unsigned, issuer_key)


def sign_token(token: CapabilityToken, issuer_key: SigningKey) -> CapabilityToken:
    body_token = replace(token, issuer=issuer_key.public_bytes)
    return replace(body_token, issue_sign=issuer_key.sign(body_token.body()))


def verify_token_signature(token: CapabilityToken) -> bool:
    return verify(token.issuer, token.issue_sign, token.body())


def verify_chain(token: CapabilityToken, vid_o: VirtualIdentity, rnd0: bytes) -> bool:
    """Recompute ``rnd_i`` from the token's parts plus the object's ``vid_o``/``rnd0``."""
    return compute_rnd_i(token.subject, vid_o, token.access_right, rnd0) == token.rnd_i
