"""Deterministic keys and entities shared by the test modules."""

from __future__ import annotations

import hashlib

from fedcap.capability import compute_vid, owner_signature
from fedcap.crypto import SigningKey
from fedcap.model import EntityKind, Profile

T0 = 1_700_000_000  # 2023-11-14 22:13:20 UTC, a Tuesday


def key_from(label: str) -> SigningKey:
    return SigningKey.from_seed(hashlib.sha256(label.encode()).digest())


def make_profile(kind: EntityKind, name: str, key: SigningKey, domain: str = "domain-1", **attrs: str) -> Profile:
    return Profile(kind, (("name", name),) + tuple(attrs.items()), key.public_bytes, domain)


def make_entity(kind: EntityKind, name: str, domain: str = "domain-1", **attrs: str):
    key = key_from(name)
    profile = make_profile(kind, name, key, domain, **attrs)
    sign = owner_signature(profile, key)
    return key, profile, sign, compute_vid(profile, sign)




def make_coordinator(pdc, name: str, domain: str):
    """A coordinator wired to ``pdc`` in-process and registered with it (not yet delegated)."""
    from fedcap.coordinator import Coordinator, LocalPdcLink

    coord = Coordinator(key_from(name), LocalPdcLink(pdc), pdc.key.public_bytes, domain_id=domain,
                        clock=pdc.clock, attributes=(("name", name),))
    pdc.register_entity(coord.profile, coord.owner_sign)
    return coord


def delegate(pdc, coord):
    return coord.accept_delegation(pdc.dac.root_certificate())
