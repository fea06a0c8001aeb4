"""Attestation payloads and signed documents.

The payload is the statement the enclave signs: its measurements, a 32-byte
data commitment in ``user_data``, a timestamp and an optional echoed nonce.
Wire encoding is deterministic CBOR with a fixed key order, so identical
payloads are byte-identical everywhere. The signed structure is a domain
separation tag followed by the encoded payload; the signature is ECDSA
P-384 / SHA-384 in raw r||s form, and the full document bundles payload,
leaf certificate, CA bundle and signature into one CBOR map.
"""

from __future__ import annotations

import base64
import threading
from dataclasses import dataclass

from cryptography import x509
from cryptography.hazmat.primitives.asymmetric import ec

from . import cborcodec
from .cborcodec import CborDecodeError, Decoder
from .chain import SIGNATURE_LENGTH, certificate_to_der, sign_raw
from .digest import DigestAlgorithm, DigestValue, MeasurementSet

SIGNING_DOMAIN_TAG = b"PoG-ATTEST-v1"
DIGEST_ALGORITHM_LABEL = "SHA384"
MAX_NONCE_LENGTH = 64
USER_DATA_LENGTH = 32
PCR_LENGTH = 48

PAYLOAD_KEYS = ("module_id", "digest", "timestamp", "pcrs", "user_data", "nonce", "public_key")
DOCUMENT_KEYS = ("payload", "certificate", "ca_bundle", "signature")


class DocumentParseError(ValueError):
    """Structurally invalid document or payload bytes.

    Attributes:
        offset: byte offset of the offending element, when known.
    """

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class ConfigurationError(ValueError):
    """Signing key and certificate chain do not belong together."""


@dataclass(frozen=True)
class AttestationPayload:
    """The signed statement: measurements plus the per-turn commitment."""

    module_id: str
    timestamp_ms: int
    measurements: MeasurementSet
    user_data: bytes
    nonce: bytes | None = None
    public_key: bytes | None = None
    digest_algorithm: str = DIGEST_ALGORITHM_LABEL

    def __post_init__(self) -> None:
        if not self.module_id:
            raise ValueError("module_id must be non-empty")
        if self.timestamp_ms < 0:
            raise ValueError("timestamp_ms must be unsigned")
        if self.digest_algorithm != DIGEST_ALGORITHM_LABEL:
            raise ValueError(f"digest_algorithm must be {DIGEST_ALGORITHM_LABEL!r}")
        if len(self.user_data) != USER_DATA_LENGTH:
            raise ValueError(
                f"user_data must be exactly {USER_DATA_LENGTH} bytes "
                f"(SHA-256 commitment), got {len(self.user_data)}"
            )
        if self.nonce is not None and len(self.nonce) > MAX_NONCE_LENGTH:
            raise ValueError(f"nonce must be at most {MAX_NONCE_LENGTH} bytes")


def encode_payload(payload: AttestationPayload) -> bytes:
    """Deterministic CBOR encoding of the payload (fixed key order)."""
    wire = {
        "module_id": payload.module_id,
        "digest": payload.digest_algorithm,
        "timestamp": payload.timestamp_ms,
        "pcrs": {
            0: payload.measurements.pcr0.value,
            1: payload.measurements.pcr1.value,
            2: payload.measurements.pcr2.value,
        },
        "user_data": payload.user_data,
        "nonce": payload.nonce,
        "public_key": payload.public_key,
    }
    return cborcodec.encode(wire)


def decode_payload(data: bytes) -> AttestationPayload:
    """Strict inverse of :func:`encode_payload`."""
    decoder = Decoder(data)
    payload = _read_payload(decoder)
    if not decoder.exhausted():
        raise DocumentParseError("trailing bytes after payload", decoder.offset)
    return payload


def _read_payload(decoder: Decoder) -> AttestationPayload:
    try:
        count = decoder.read_map_header("payload map")
        if count != len(PAYLOAD_KEYS):
            raise DocumentParseError(
                f"payload map must have {len(PAYLOAD_KEYS)} entries, got {count}",
                decoder.offset,
            )

        def expect_key(name: str) -> None:
            at = decoder.offset
            key = decoder.read_text("map key")
            if key != name:
                raise DocumentParseError(f"expected key {name!r}, got {key!r}", at)

        expect_key("module_id")
        module_id = decoder.read_text("module_id")
        expect_key("digest")
        digest_algorithm = decoder.read_text("digest")
        expect_key("timestamp")
        timestamp_ms = decoder.read_uint("timestamp")
        expect_key("pcrs")
        at = decoder.offset
        pcr_count = decoder.read_map_header("pcrs map")
        if pcr_count != 3:
            raise DocumentParseError(f"pcrs map must have 3 entries, got {pcr_count}", at)
        registers: list[bytes] = []
        for index in range(3):
            at = decoder.offset
            if decoder.read_uint("pcr index") != index:
                raise DocumentParseError(f"expected pcr index {index}", at)
            at = decoder.offset
            value = decoder.read_bytes(f"pcr{index}")
            if len(value) != PCR_LENGTH:
                raise DocumentParseError(
                    f"bad digest length: pcr{index} must be {PCR_LENGTH} bytes, "
                    f"got {len(value)}",
                    at,
                )
            registers.append(value)
        expect_key("user_data")
        at = decoder.offset
        user_data = decoder.read_bytes("user_data")
        if len(user_data) != USER_DATA_LENGTH:
            raise DocumentParseError(
                f"user_data must be {USER_DATA_LENGTH} bytes, got {len(user_data)}", at
            )
        expect_key("nonce")
        at = decoder.offset
        nonce = decoder.read_bytes_or_null("nonce")
        if nonce is not None and len(nonce) > MAX_NONCE_LENGTH:
            raise DocumentParseError("nonce longer than 64 bytes", at)
        expect_key("public_key")
        public_key = decoder.read_bytes_or_null("public_key")
    except CborDecodeError as exc:
        raise DocumentParseError(str(exc).rsplit(" (at byte", 1)[0], exc.offset) from exc

    try:
        measurements = MeasurementSet(
            DigestValue(DigestAlgorithm.SHA384, registers[0]),
            DigestValue(DigestAlgorithm.SHA384, registers[1]),
            DigestValue(DigestAlgorithm.SHA384, registers[2]),
        )
        return AttestationPayload(
            module_id=module_id,
            timestamp_ms=timestamp_ms,
            measurements=measurements,
            user_data=user_data,
            nonce=nonce,
            public_key=public_key,
            digest_algorithm=digest_algorithm,
        )
    except ValueError as exc:
        raise DocumentParseError(str(exc)) from exc


def signed_structure(payload_bytes: bytes) -> bytes:
    """Bytes the attestation key actually signs."""
    return SIGNING_DOMAIN_TAG + payload_bytes


@dataclass(frozen=True)
class AttestationDocument:
    """Signed attestation: payload, leaf certificate, CA bundle, signature.

    ``ca_bundle`` is ordered leaf-side first with the self-signed root last.
    """

    payload: AttestationPayload
    certificate: bytes
    ca_bundle: tuple[bytes, ...]
    signature: bytes

    def __post_init__(self) -> None:
        if len(self.signature) != SIGNATURE_LENGTH:
            raise ValueError(
                f"signature must be {SIGNATURE_LENGTH} bytes, got {len(self.signature)}"
            )

    def payload_bytes(self) -> bytes:
        return encode_payload(self.payload)


def sign_document(
    payload: AttestationPayload,
    signing_key: ec.EllipticCurvePrivateKey,
    chain: list[x509.Certificate],
    lock: threading.Lock | None = None,
) -> AttestationDocument:
    """Sign ``payload`` under ``signing_key`` and attach ``chain``.

    ``chain[0]`` must certify the signing key; the chain must end at a
    self-signed root. Concurrent calls sharing one key must serialize;
    pass the key's ``lock`` to have that handled here.
    """
    if not chain:
        raise ConfigurationError("certificate chain is empty")
    leaf_public = chain[0].public_key()
    if not isinstance(leaf_public, ec.EllipticCurvePublicKey):
        raise ConfigurationError("leaf certificate does not carry an EC public key")
    if leaf_public.public_numbers() != signing_key.public_key().public_numbers():
        raise ConfigurationError("signing key does not match the leaf certificate")
    if chain[-1].subject != chain[-1].issuer:
        raise ConfigurationError("chain does not terminate at a self-signed root")

    payload_bytes = encode_payload(payload)
    data = signed_structure(payload_bytes)
    if lock is not None:
        with lock:
            signature = sign_raw(signing_key, data)
    else:
        signature = sign_raw(signing_key, data)
    return AttestationDocument(
        payload=payload,
        certificate=certificate_to_der(chain[0]),
        ca_bundle=tuple(certificate_to_der(cert) for cert in chain[1:]),
        signature=signature,
    )


def serialize_document(document: AttestationDocument) -> bytes:
    """Raw CBOR form of the document (the on-disk / on-wire artifact)."""
    wire = {
        "payload": document.payload_bytes(),
        "certificate": document.certificate,
        "ca_bundle": list(document.ca_bundle),
        "signature": document.signature,
    }
    return cborcodec.encode(wire)


def document_to_base64(document: AttestationDocument) -> str:
    """Base64 text form for embedding in JSON envelopes."""
    return base64.b64encode(serialize_document(document)).decode("ascii")


def parse_document(data: bytes) -> AttestationDocument:
    """Strict structural parse. Performs no signature checking."""
    decoder = Decoder(data)
    try:
        count = decoder.read_map_header("document map")
        if count != len(DOCUMENT_KEYS):
            raise DocumentParseError(
                f"document map must have {len(DOCUMENT_KEYS)} entries, got {count}",
                decoder.offset,
            )

        def expect_key(name: str) -> None:
            at = decoder.offset
            key = decoder.read_text("map key")
            if key != name:
                raise DocumentParseError(f"expected key {name!r}, got {key!r}", at)

        expect_key("payload")
        payload_at = decoder.offset
        payload_bytes = decoder.read_bytes("payload")
        expect_key("certificate")
        at = decoder.offset
        certificate = decoder.read_bytes("certificate")
        if not certificate:
            raise DocumentParseError("certificate must be non-empty", at)
        expect_key("ca_bundle")
        at = decoder.offset
        bundle_count = decoder.read_array_header("ca_bundle")
        if bundle_count == 0:
            raise DocumentParseError("ca_bundle must be non-empty", at)
        ca_bundle = []
        for i in range(bundle_count):
            at = decoder.offset
            der = decoder.read_bytes(f"ca_bundle[{i}]")
            if not der:
                raise DocumentParseError(f"ca_bundle[{i}] must be non-empty", at)
            ca_bundle.append(der)
        expect_key("signature")
        at = decoder.offset
        signature = decoder.read_bytes("signature")
        if len(signature) != SIGNATURE_LENGTH:
            raise DocumentParseError(
                f"signature must be {SIGNATURE_LENGTH} bytes, got {len(signature)}", at
            )
    except CborDecodeError as exc:
        raise DocumentParseError(str(exc).rsplit(" (at byte", 1)[0], exc.offset) from exc
    if not decoder.exhausted():
        raise DocumentParseError("trailing bytes after document", decoder.offset)

    inner = Decoder(payload_bytes)
    payload = _read_payload(inner)
    if not inner.exhausted():
        raise DocumentParseError("trailing bytes after payload", payload_at)
    return AttestationDocument(
        payload=payload,
        certificate=certificate,
        ca_bundle=tuple(ca_bundle),
        signature=signature,
    )
