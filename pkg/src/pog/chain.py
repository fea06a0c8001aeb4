"""ECDSA P-384 certificate chains for attestation signing keys.

Issuance builds the three-level chain the simulated platform uses
(root -> platform CA -> enclave leaf); validation walks a document's
embedded chain against a trust anchor. Check order inside
:func:`validate_chain` is fixed and observable through the returned
failure category: link signatures, then the document signature, then
root-equals-anchor, then validity windows.
"""

from __future__ import annotations

import datetime
import warnings
from dataclasses import dataclass
from enum import Enum

from cryptography import x509
from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.asymmetric.utils import (
    decode_dss_signature,
    encode_dss_signature,
)
from cryptography.hazmat.primitives.serialization import Encoding
from cryptography.x509.oid import NameOID

ECDSA_SHA384 = "ecdsa-with-SHA384"
SIGNATURE_LENGTH = 96  # P-384: 48-byte r || 48-byte s

_OID_TO_NAME = {x509.SignatureAlgorithmOID.ECDSA_WITH_SHA384: ECDSA_SHA384}


class ChainFailure(Enum):
    BROKEN_LINK = "broken_link"
    BAD_DOCUMENT_SIGNATURE = "bad_document_signature"
    UNTRUSTED_ROOT = "untrusted_root"
    CERT_EXPIRED = "cert_expired"


@dataclass(frozen=True)
class ChainValidationResult:
    ok: bool
    failure: ChainFailure | None = None
    detail: str = ""


@dataclass(frozen=True)
class TrustAnchor:
    """Root of trust a verifier holds: the platform root certificate (DER)
    and the signature suites it accepts."""

    root_certificate: bytes
    allowed_signature_algorithms: frozenset[str] = frozenset({ECDSA_SHA384})

    @classmethod
    def from_pem(cls, pem_data: bytes) -> TrustAnchor:
        cert = x509.load_pem_x509_certificate(pem_data)
        return cls(root_certificate=cert.public_bytes(Encoding.DER))


# -- issuance -----------------------------------------------------------------


def generate_signing_key() -> ec.EllipticCurvePrivateKey:
    return ec.generate_private_key(ec.SECP384R1())


def _name(common_name: str) -> x509.Name:
    return x509.Name(
        [
            x509.NameAttribute(NameOID.ORGANIZATION_NAME, "pog-sim platform"),
            x509.NameAttribute(NameOID.COMMON_NAME, common_name),
        ]
    )


def _builder(
    subject: x509.Name,
    issuer: x509.Name,
    public_key: ec.EllipticCurvePublicKey,
    not_before: datetime.datetime,
    not_after: datetime.datetime,
    is_ca: bool,
) -> x509.CertificateBuilder:
    return (
        x509.CertificateBuilder()
        .subject_name(subject)
        .issuer_name(issuer)
        .public_key(public_key)
        .serial_number(x509.random_serial_number())
        .not_valid_before(not_before)
        .not_valid_after(not_after)
        .add_extension(x509.BasicConstraints(ca=is_ca, path_length=None), critical=True)
    )


def issue_root_certificate(
    key: ec.EllipticCurvePrivateKey,
    common_name: str = "pog-sim root",
    valid_days: int = 3650,
    now: datetime.datetime | None = None,
) -> x509.Certificate:
    now = now or datetime.datetime.now(datetime.timezone.utc)
    name = _name(common_name)
    builder = _builder(
        name,
        name,
        key.public_key(),
        now - datetime.timedelta(minutes=5),
        now + datetime.timedelta(days=valid_days),
        is_ca=True,
    )
    return builder.sign(key, hashes.SHA384())


def issue_intermediate_certificate(
    root_key: ec.EllipticCurvePrivateKey,
    root_cert: x509.Certificate,
    key: ec.EllipticCurvePrivateKey,
    common_name: str = "pog-sim platform CA",
    valid_days: int = 1825,
    now: datetime.datetime | None = None,
) -> x509.Certificate:
    now = now or datetime.datetime.now(datetime.timezone.utc)
    builder = _builder(
        _name(common_name),
        root_cert.subject,
        key.public_key(),
        now - datetime.timedelta(minutes=5),
        now + datetime.timedelta(days=valid_days),
        is_ca=True,
    )
    return builder.sign(root_key, hashes.SHA384())


def issue_leaf_certificate(
    issuer_key: ec.EllipticCurvePrivateKey,
    issuer_cert: x509.Certificate,
    public_key: ec.EllipticCurvePublicKey,
    common_name: str,
    valid_hours: int = 24,
    now: datetime.datetime | None = None,
) -> x509.Certificate:
    now = now or datetime.datetime.now(datetime.timezone.utc)
    builder = _builder(
        _name(common_name),
        issuer_cert.subject,
        public_key,
        now - datetime.timedelta(minutes=5),
        now + datetime.timedelta(hours=valid_hours),
        is_ca=False,
    )
    return builder.sign(issuer_key, hashes.SHA384())


def certificate_to_der(cert: x509.Certificate) -> bytes:
    return cert.public_bytes(Encoding.DER)


def certificate_to_pem(cert: x509.Certificate) -> bytes:
    return cert.public_bytes(Encoding.PEM)


# -- raw (r || s) ECDSA signatures ---------------------------------------------


def sign_raw(key: ec.EllipticCurvePrivateKey, data: bytes) -> bytes:
    """ECDSA P-384 / SHA-384 signature in fixed-length r||s form."""
    der_sig = key.sign(data, ec.ECDSA(hashes.SHA384()))
    r, s = decode_dss_signature(der_sig)
    return r.to_bytes(48, "big") + s.to_bytes(48, "big")


def verify_raw_signature(
    public_key: ec.EllipticCurvePublicKey, data: bytes, signature: bytes
) -> bool:
    if len(signature) != SIGNATURE_LENGTH:
        return False
    r = int.from_bytes(signature[:48], "big")
    s = int.from_bytes(signature[48:], "big")
    try:
        public_key.verify(encode_dss_signature(r, s), data, ec.ECDSA(hashes.SHA384()))
        return True
    except InvalidSignature:
        return False


# -- validation ----------------------------------------------------------------


class _UnusableCertificate(Exception):
    pass


def _load_der(der: bytes, which: str) -> x509.Certificate:
    # Parse strictly: lenient-parse deprecation warnings (e.g. non-positive
    # serials in corrupted certificates) are rejections here, matching what
    # future parser releases will do unconditionally.
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            return x509.load_der_x509_certificate(der)
    except Exception as exc:
        raise _UnusableCertificate(f"{which}: {exc}") from exc


def _check_link(child: x509.Certificate, issuer: x509.Certificate) -> bool:
    """True iff ``issuer``'s key verifies ``child``'s signature.

    Key extraction is lazy in the X.509 parser, so a structurally parseable
    certificate can still blow up here; any such defect is a failed link.
    """
    try:
        public_key = issuer.public_key()
        if not isinstance(public_key, ec.EllipticCurvePublicKey):
            return False
        hash_alg = child.signature_hash_algorithm
        if hash_alg is None:
            return False
        public_key.verify(
            child.signature, child.tbs_certificate_bytes, ec.ECDSA(hash_alg)
        )
        return True
    except Exception:
        return False


def _algorithm_name(cert: x509.Certificate) -> str:
    return _OID_TO_NAME.get(
        cert.signature_algorithm_oid, cert.signature_algorithm_oid.dotted_string
    )


def validate_chain(
    certificate_der: bytes,
    ca_bundle_der: list[bytes],
    signed_data: bytes,
    signature: bytes,
    anchor: TrustAnchor,
    now_ms: int,
) -> ChainValidationResult:
    """Validate leaf + bundle against ``anchor`` and verify ``signature``
    over ``signed_data`` under the leaf key.

    The bundle is ordered leaf-side first; its last element must be the
    self-signed root. ``now_ms`` is the verification clock in epoch
    milliseconds; every validity window must contain it.
    """
    if not ca_bundle_der:
        return ChainValidationResult(False, ChainFailure.BROKEN_LINK, "empty ca_bundle")
    # An unparseable certificate cannot anchor any link, so it is reported
    # as a broken link: parser strictness differs between stacks, and only
    # this classification keeps independent verifiers verdict-identical.
    try:
        leaf = _load_der(certificate_der, "leaf certificate")
        bundle = [
            _load_der(der, f"ca_bundle[{i}]") for i, der in enumerate(ca_bundle_der)
        ]
    except _UnusableCertificate as exc:
        return ChainValidationResult(False, ChainFailure.BROKEN_LINK, str(exc))

    ordered = [leaf] + bundle
    for i, cert in enumerate(ordered):
        name = _algorithm_name(cert)
        if name not in anchor.allowed_signature_algorithms:
            return ChainValidationResult(
                False,
                ChainFailure.BROKEN_LINK,
                f"certificate {i} uses disallowed algorithm {name}",
            )

    # Each certificate signs the one below it; the root signs itself.
    for i in range(len(ordered) - 1):
        if not _check_link(ordered[i], ordered[i + 1]):
            return ChainValidationResult(
                False,
                ChainFailure.BROKEN_LINK,
                f"certificate {i} is not signed by certificate {i + 1}",
            )
    root = ordered[-1]
    if not _check_link(root, root):
        return ChainValidationResult(
            False, ChainFailure.BROKEN_LINK, "root certificate is not self-signed"
        )

    try:
        leaf_key = leaf.public_key()
    except Exception as exc:
        return ChainValidationResult(
            False, ChainFailure.BAD_DOCUMENT_SIGNATURE, f"leaf key unusable: {exc}"
        )
    if not isinstance(leaf_key, ec.EllipticCurvePublicKey) or not isinstance(
        leaf_key.curve, ec.SECP384R1
    ):
        return ChainValidationResult(
            False, ChainFailure.BAD_DOCUMENT_SIGNATURE, "leaf key is not ECDSA P-384"
        )
    if not verify_raw_signature(leaf_key, signed_data, signature):
        return ChainValidationResult(
            False,
            ChainFailure.BAD_DOCUMENT_SIGNATURE,
            "document signature does not verify under the leaf key",
        )

    if certificate_to_der(root) != anchor.root_certificate:
        return ChainValidationResult(
            False,
            ChainFailure.UNTRUSTED_ROOT,
            "chain does not root in the trust anchor",
        )

    when = datetime.datetime.fromtimestamp(now_ms / 1000.0, tz=datetime.timezone.utc)
    for i, cert in enumerate(ordered):
        if when < cert.not_valid_before_utc or when > cert.not_valid_after_utc:
            which = "leaf" if i == 0 else ("root" if cert is root else f"intermediate {i}")
            return ChainValidationResult(
                False,
                ChainFailure.CERT_EXPIRED,
                f"{which} certificate not valid at {when.isoformat()}",
            )

    return ChainValidationResult(True)
