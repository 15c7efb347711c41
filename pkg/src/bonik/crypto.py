"""Shared cryptographic primitives: hashing, signing, hybrid encryption, nonces.

Every other layer goes through this facade so the client, gateway, the
simulated network entities, and the chaincodes agree on one set of schemes:

* SHA-256 for digests,
* ECDSA over P-256 (SHA-256) for signatures, 64-byte r||s wire form,
* ECIES-style sealing (ephemeral ECDH on P-256 -> HKDF-SHA256 -> AES-256-GCM),
* 128-bit nonces from the OS CSPRNG.

P-256 + AES-GCM + HKDF are the overlap between the pyca/cryptography stack
and the browser's WebCrypto API, which the chat client relies on.
"""
from __future__ import annotations

import base64
import json
import secrets
from dataclasses import dataclass
from hashlib import sha256
from typing import Any

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.asymmetric.utils import (
    decode_dss_signature,
    encode_dss_signature,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

CURVE = ec.SECP256R1()
SEAL_MAX_PAYLOAD = 64 * 1024
_SEAL_INFO = b"bonik-seal-v1"
_GCM_NONCE_LEN = 12
_SIG_LEN = 64


class CryptoError(Exception):
    """Base error for this module."""


class SealError(CryptoError):
    """Envelope cannot be opened: tampered, wrong key, or malformed."""


class PayloadTooLarge(CryptoError):
    """Payload exceeds the configured sealing bound."""


def b64e(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def b64d(text: str) -> bytes:
    return base64.b64decode(text.encode("ascii"), validate=True)


def canonical_bytes(obj: Any) -> bytes:
    """Canonical JSON serialization: sorted keys, no insignificant whitespace.

    This is the byte form that gets hashed or signed, on both sides of the
    wire (the browser client reimplements the same rules).
    """
    return json.dumps(
        obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    """SHA-256 digest of ``data`` as 64 lowercase hex characters."""
    return sha256(data).hexdigest()


def digest_object(obj: Any) -> str:
    """SHA-256 of the canonical JSON form of ``obj``."""
    return sha256_hex(canonical_bytes(obj))


def fresh_nonce() -> str:
    """128 bits from the OS CSPRNG, as 32 hex characters."""
    return secrets.token_hex(16)


@dataclass(frozen=True)
class KeyPair:
    """P-256 keypair. ``public_key`` is the 65-byte uncompressed point,
    ``private_key`` is PKCS#8 DER. Both usable for sign/verify and seal/open.
    """

    public_key: bytes
    private_key: bytes

    @property
    def public_b64(self) -> str:
        return b64e(self.public_key)

    @property
    def private_b64(self) -> str:
        return b64e(self.private_key)


@dataclass(frozen=True)
class SealedEnvelope:
    """Hybrid-encryption envelope.

    ``wrapped_key`` carries the ephemeral ECDH public point that determines
    the content key; ``ciphertext`` is nonce || AES-GCM output, so any
    single-bit tamper of either field fails authentication on open.
    """

    wrapped_key: bytes
    ciphertext: bytes

    def to_wire(self) -> dict:
        return {"wrapped_key": b64e(self.wrapped_key), "ciphertext": b64e(self.ciphertext)}

    @classmethod
    def from_wire(cls, obj: dict) -> "SealedEnvelope":
        try:
            return cls(wrapped_key=b64d(obj["wrapped_key"]), ciphertext=b64d(obj["ciphertext"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise SealError(f"malformed envelope: {exc}") from exc


def generate_keypair() -> KeyPair:
    private = ec.generate_private_key(CURVE)
    return KeyPair(
        public_key=private.public_key().public_bytes(
            serialization.Encoding.X962, serialization.PublicFormat.UncompressedPoint
        ),
        private_key=private.private_bytes(
            serialization.Encoding.DER,
            serialization.PrivateFormat.PKCS8,
            serialization.NoEncryption(),
        ),
    )


def _load_private(private_key: bytes) -> ec.EllipticCurvePrivateKey:
    try:
        key = serialization.load_der_private_key(private_key, password=None)
    except (ValueError, TypeError) as exc:
        raise CryptoError(f"bad private key: {exc}") from exc
    if not isinstance(key, ec.EllipticCurvePrivateKey):
        raise CryptoError("private key is not an EC key")
    return key


def _load_public(public_key: bytes) -> ec.EllipticCurvePublicKey:
    try:
        return ec.EllipticCurvePublicKey.from_encoded_point(CURVE, public_key)
    except ValueError as exc:
        raise CryptoError(f"bad public key: {exc}") from exc


def sign(private_key: bytes, message: bytes) -> bytes:
    """ECDSA P-256/SHA-256 signature in raw 64-byte r||s form.

    Deterministic nonces (RFC 6979 style), so signing the same message
    twice yields the same bytes; verifiers cannot tell the difference.
    """
    der = _load_private(private_key).sign(
        message, ec.ECDSA(hashes.SHA256(), deterministic_signing=True)
    )
    r, s = decode_dss_signature(der)
    return r.to_bytes(32, "big") + s.to_bytes(32, "big")


def verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    """True iff ``signature`` was produced over exactly ``message`` by the
    key matching ``public_key``. Malformed inputs verify false, not raise.
    """
    if len(signature) != _SIG_LEN:
        return False
    try:
        pub = _load_public(public_key)
    except CryptoError:
        return False
    r = int.from_bytes(signature[:32], "big")
    s = int.from_bytes(signature[32:], "big")
    try:
        pub.verify(encode_dss_signature(r, s), message, ec.ECDSA(hashes.SHA256()))
        return True
    except (InvalidSignature, ValueError):
        return False


def _content_key(private: ec.EllipticCurvePrivateKey, peer: ec.EllipticCurvePublicKey) -> bytes:
    shared = private.exchange(ec.ECDH(), peer)
    return HKDF(algorithm=hashes.SHA256(), length=32, salt=None, info=_SEAL_INFO).derive(shared)


def seal(public_key: bytes, payload: bytes) -> SealedEnvelope:
    """Encrypt ``payload`` so only the holder of the matching private key
    can read it. Payloads above SEAL_MAX_PAYLOAD are refused.
    """
    if len(payload) > SEAL_MAX_PAYLOAD:
        raise PayloadTooLarge(f"payload of {len(payload)} bytes exceeds {SEAL_MAX_PAYLOAD}")
    recipient = _load_public(public_key)
    ephemeral = ec.generate_private_key(CURVE)
    key = _content_key(ephemeral, recipient)
    gcm_nonce = secrets.token_bytes(_GCM_NONCE_LEN)
    ciphertext = AESGCM(key).encrypt(gcm_nonce, payload, None)
    wrapped = ephemeral.public_key().public_bytes(
        serialization.Encoding.X962, serialization.PublicFormat.UncompressedPoint
    )
    return SealedEnvelope(wrapped_key=wrapped, ciphertext=gcm_nonce + ciphertext)


def open_envelope(private_key: bytes, envelope: SealedEnvelope) -> bytes:
    """Inverse of :func:`seal`. Raises SealError on any tamper or key mismatch."""
    if len(envelope.ciphertext) < _GCM_NONCE_LEN + 16:
        raise SealError("ciphertext too short")
    try:
        ephemeral_pub = _load_public(envelope.wrapped_key)
    except CryptoError as exc:
        raise SealError(str(exc)) from exc
    key = _content_key(_load_private(private_key), ephemeral_pub)
    gcm_nonce, ciphertext = envelope.ciphertext[:_GCM_NONCE_LEN], envelope.ciphertext[_GCM_NONCE_LEN:]
    try:
        return AESGCM(key).decrypt(gcm_nonce, ciphertext, None)
    except Exception as exc:  # InvalidTag and friends
        raise SealError("authenticated decryption failed") from exc
