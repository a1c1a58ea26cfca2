"""Hashing and Ed25519 signing helpers."""

from __future__ import annotations

import hashlib
from pathlib import Path

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

DIGEST_SIZE = 32
PUBLIC_KEY_SIZE = 32
SIGNATURE_SIZE = 64


def digest(*parts: bytes) -> bytes:
    """SHA-256 over the concatenation of ``parts``."""
    h = hashlib.sha256()
    for p in parts:
        h.update(p)
    return h.digest()


class SigningKey:
    """Thin wrapper so callers never touch the cryptography API directly."""

    __slots__ = ("_key", "public_bytes")

    def __init__(self, key: Ed25519PrivateKey):
        self._key = key
        self.public_bytes: bytes = key.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw
        )

    @classmethod
    def generate(cls) -> "SigningKey":
        return cls(Ed25519PrivateKey.generate())

    @classmethod
    def from_seed(cls, seed: bytes) -> "SigningKey":
        return cls(Ed25519PrivateKey.from_private_bytes(seed))

    def seed(self) -> bytes:
        return self._key.private_bytes(
            serialization.Encoding.Raw,
            serialization.PrivateFormat.Raw,
            serialization.NoEncryption(),
        )

    def sign(self, message: bytes) -> bytes:
        return self._key.sign(message)

    def __repr__(self) -> str:
        return f"SigningKey(public={self.public_bytes.hex()[:16]}...)"


def verify(public_key: bytes, signature: bytes, message: bytes) -> bool:
    """True iff ``signature`` is valid; malformed keys or signatures give False."""
    if len(public_key) != PUBLIC_KEY_SIZE or len(signature) != SIGNATURE_SIZE:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(bytes(public_key)).verify(
            bytes(signature), message
        )
    except (InvalidSignature, ValueError):
        return False
    return True


def load_or_create_key(path: str | Path) -> SigningKey:
    """Load a hex-encoded 32-byte seed from ``path``, creating it if missing."""
    p = Path(path)
    if p.exists():
        return SigningKey.from_seed(bytes.fromhex(p.read_text().strip()))
    key = SigningKey.generate()
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(key.seed().hex() + "\n")
    p.chmod(0o600)
    return key
