"""Deterministic, injective byte encoding used for hashing and signing.

Every value is a one-byte type tag followed by a netstring
(``<decimal length>:<payload>,``).  Records and lists nest by encoding
their members and wrapping the concatenation in another netstring, so the
encoding is self-delimiting and no two distinct values share a byte string.

    tag  payload
    s    UTF-8 text
    i    decimal ASCII integer
    b    raw bytes
    l    concatenated encodings of the items, in order
    r    encoding of the record name, then of each field in declared order
"""

from __future__ import annotations

from typing import Iterable, Sequence, Union

Atom = Union[str, int, bytes]


class SerializationError(ValueError):
    """A value could not be encoded (bad type or violated invariant)."""


def _netstring(tag: bytes, payload: bytes) -> bytes:
    return tag + str(len(payload)).encode("ascii") + b":" + payload + b","


def enc_str(value: str) -> bytes:
    if not isinstance(value, str):
        raise SerializationError(f"expected str, got {type(value).__name__}")
    return _netstring(b"s", value.encode("utf-8"))


def enc_int(value: int) -> bytes:
    # bool is an int subclass; refuse it so True never aliases 1
    if isinstance(value, bool) or not isinstance(value, int):
        raise SerializationError(f"expected int, got {type(value).__name__}")
    return _netstring(b"i", str(value).encode("ascii"))


def enc_bytes(value: bytes) -> bytes:
    if not isinstance(value, (bytes, bytearray)):
        raise SerializationError(f"expected bytes, got {type(value).__name__}")
    return _netstring(b"b", bytes(value))


def enc_list(encoded_items: Iterable[bytes]) -> bytes:
    return _netstring(b"l", b"".join(encoded_items))


def enc_record(name: str, encoded_fields: Sequence[bytes]) -> bytes:
    return _netstring(b"r", enc_str(name) + b"".join(encoded_fields))


def enc_atom(value: Atom) -> bytes:
    if isinstance(value, str):
        return enc_str(value)
    if isinstance(value, (bytes, bytearray)):
        return enc_bytes(value)
    return enc_int(value)


def canonical_serialize(value: object) -> bytes:
    """Encode any fedcap domain value (or a plain atom) canonically.

    Domain types expose ``canonical()``; invariants are re-checked there so a
    hand-built invalid instance fails loudly instead of hashing garbage.
    """
    canonical = getattr(value, "canonical", None)
    if callable(canonical):
        return canonical()
    if isinstance(value, (str, int, bytes, bytearray)):
        return enc_atom(value)
    if isinstance(value, (list, tuple)):
        return enc_list(canonical_serialize(v) for v in value)
    raise SerializationError(f"cannot serialize {type(value).__name__}")
