"""Cryptographic schemes over canonical term encodings.

Every scheme binds to encode(term), never to raw user bytes, so two
structurally different terms can never collide under a signature, MAC,
hash, or encryption. Instantiations: Ed25519 signatures, X25519 key
negotiation, AES-256-GCM authenticated encryption with the nonce carried
inside the ciphertext, HMAC-SHA-256 MACs, and SHA-256 for hashing and
wrap-key derivation.

All randomness flows through an injected Rng handle. The library default
draws from OS entropy; the simulator injects a seeded generator so that
whole protocol runs replay byte-for-byte.
"""

from __future__ import annotations

import hashlib
import hmac as _hmac
import random
import secrets
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .codec import (
    TAG_SEV_KEK,
    TAG_SEV_KIK,
    Atom,
    Label,
    MalformedEncoding,
    Term,
    Tuple,
    decode,
    encode,
)

KEY_LEN = 32
NONCE_LEN = 12
DIGEST_LEN = 32
SIG_LEN = 64

#: Only these labels may ever enter wrap-key derivation.
WRAP_KEY_LABELS = (Label(TAG_SEV_KEK), Label(TAG_SEV_KIK))


class InvalidPublicElement(ValueError):
    """Key-negotiation public element is malformed or degenerate."""


class UnknownDerivationLabel(ValueError):
    """derive_wrap_key called with a label outside WRAP_KEY_LABELS."""


class DecryptionFailure(ValueError):
    """Authenticated decryption failed: wrong key, tampering, truncation."""


class Rng:
    """Byte source for key and nonce generation.

    Rng() draws from OS entropy. Rng(seed) is a deterministic stream: the
    same seed yields the same byte sequence, which is what makes simulator
    runs replayable. A seeded handle must have a single owner; sharing one
    across actors is fine only when the call order is itself deterministic.
    """

    def __init__(self, seed: int | None = None) -> None:
        self.seed = seed
        self._rand = None if seed is None else random.Random(seed)

    def bytes(self, n: int) -> bytes:
        if self._rand is None:
            return secrets.token_bytes(n)
        return self._rand.randbytes(n)

    def choice(self, seq):
        if self._rand is None:
            return secrets.choice(seq)
        return self._rand.choice(seq)

    def randrange(self, n: int) -> int:
        if self._rand is None:
            return secrets.randbelow(n)
        return self._rand.randrange(n)


@dataclass(frozen=True)
class SigKeyPair:
    """Ed25519 signing key pair; private is the 32-byte seed."""

    private: bytes
    public: bytes


@dataclass(frozen=True)
class KxKeyPair:
    """X25519 key-negotiation pair."""

    private: bytes
    public: bytes


def sig_keygen(rng: Rng) -> SigKeyPair:
    priv = rng.bytes(KEY_LEN)
    pub = Ed25519PrivateKey.from_private_bytes(priv).public_key()
    return SigKeyPair(private=priv, public=pub.public_bytes_raw())


def sign(term: Term, private: bytes) -> bytes:
    """Sign the canonical encoding of term. 64-byte signature."""
    return Ed25519PrivateKey.from_private_bytes(private).sign(encode(term))


def verify(term: Term, signature: bytes, public: bytes) -> bool:
    """Check a signature against encode(term). Never raises."""
    try:
        Ed25519PublicKey.from_public_bytes(public).verify(signature, encode(term))
        return True
    except (InvalidSignature, ValueError, TypeError):
        return False


def kx_keygen(rng: Rng) -> KxKeyPair:
    priv = rng.bytes(KEY_LEN)
    pub = X25519PrivateKey.from_private_bytes(priv).public_key()
    return KxKeyPair(private=priv, public=pub.public_bytes_raw())


def shared_secret(public: bytes, private: bytes) -> bytes:
    """X25519 exchange: both sides of a pair derive the same 32 bytes.

    Raises InvalidPublicElement for elements of the wrong length or for
    degenerate elements (the all-zero element and other low-order points
    whose exchange output would be all zeros).
    """
    try:
        pk = X25519PublicKey.from_public_bytes(public)
        sk = X25519PrivateKey.from_private_bytes(private)
        return sk.exchange(pk)
    except (ValueError, TypeError) as exc:
        raise InvalidPublicElement(str(exc)) from exc


def derive_wrap_key(label: Label, secret: bytes) -> bytes:
    """Derive a 32-byte wrap key from a negotiated secret.

    The key is SHA-256 over encode(Tuple([label, Atom(secret)])); distinct
    labels therefore yield unrelated keys from the same secret.
    """
    if label not in WRAP_KEY_LABELS:
        raise UnknownDerivationLabel(f"no such derivation label: {label!r}")
    return hashlib.sha256(encode(Tuple([label, Atom(secret)]))).digest()


def fresh_key(rng: Rng) -> bytes:
    """Fresh 32-byte symmetric encryption key."""
    return rng.bytes(KEY_LEN)


def fresh_mac_key(rng: Rng) -> bytes:
    """Fresh 32-byte MAC key."""
    return rng.bytes(KEY_LEN)


def encrypt(term: Term, key: bytes, rng: Rng) -> bytes:
    """AEAD-encrypt encode(term): 12-byte fresh nonce || GCM ciphertext."""
    nonce = rng.bytes(NONCE_LEN)
    return nonce + AESGCM(key).encrypt(nonce, encode(term), None)


def decrypt(blob: bytes, key: bytes) -> Term:
    """Invert encrypt. Raises DecryptionFailure on any mismatch.

    Tag failure, truncation, a wrong key, and ciphertexts whose plaintext
    is not a well-formed term all land on the same error: the caller
    learns only that the blob was not produced for this key.
    """
    if len(blob) < NONCE_LEN + 16:
        raise DecryptionFailure("ciphertext too short")
    try:
        plain = AESGCM(key).decrypt(blob[:NONCE_LEN], blob[NONCE_LEN:], None)
    except (InvalidTag, ValueError) as exc:
        raise DecryptionFailure("authentication failed") from exc
    try:
        return decode(plain)
    except MalformedEncoding as exc:
        raise DecryptionFailure("plaintext is not a term") from exc


def mac(term: Term, key: bytes) -> bytes:
    """HMAC-SHA-256 over encode(term)."""
    return _hmac.new(key, encode(term), hashlib.sha256).digest()


def verify_mac(term: Term, tag: bytes, key: bytes) -> bool:
    """Constant-time MAC check. Never raises."""
    try:
        return _hmac.compare_digest(mac(term, key), tag)
    except (TypeError, ValueError):
        return False


def digest(term: Term) -> bytes:
    """SHA-256 of the canonical encoding."""
    return hashlib.sha256(encode(term)).digest()
