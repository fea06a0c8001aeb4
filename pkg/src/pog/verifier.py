"""Offline verification of attestation documents.

Verification is total: any input produces a structured report, never an
exception. Checks run in a fixed order and the verdict is the first
failure:

    1. structural parse                      -> MALFORMED
    2. certificate chain + document signature -> SIGNATURE_INVALID /
                                                 UNTRUSTED_ROOT / CERT_EXPIRED
    3. measurement equality (pcr0..2)         -> MEASUREMENT_MISMATCH
    4. commitment over (input?, response)     -> COMMITMENT_MISMATCH
    5. nonce equality, when one is expected   -> NONCE_MISMATCH

No step touches the network; everything needed travels in the document,
the trust anchor and the caller's expectations.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from enum import Enum

from .chain import ChainFailure, TrustAnchor, validate_chain
from .commitment import CanonicalizationError, make_commitment
from .digest import MeasurementSet
from .document import (
    AttestationDocument,
    DocumentParseError,
    parse_document,
    signed_structure,
)
from .image import ImageFormatError, measure_image


class Verdict(Enum):
    PASS = "PASS"
    SIGNATURE_INVALID = "SIGNATURE_INVALID"
    UNTRUSTED_ROOT = "UNTRUSTED_ROOT"
    CERT_EXPIRED = "CERT_EXPIRED"
    MEASUREMENT_MISMATCH = "MEASUREMENT_MISMATCH"
    COMMITMENT_MISMATCH = "COMMITMENT_MISMATCH"
    NONCE_MISMATCH = "NONCE_MISMATCH"
    MALFORMED = "MALFORMED"

    @property
    def exit_code(self) -> int:
        """CLI exit code; PASS is 0, the rest follow enum order."""
        return list(Verdict).index(self)


_CHAIN_VERDICTS = {
    ChainFailure.BROKEN_LINK: Verdict.SIGNATURE_INVALID,
    ChainFailure.BAD_DOCUMENT_SIGNATURE: Verdict.SIGNATURE_INVALID,
    ChainFailure.UNTRUSTED_ROOT: Verdict.UNTRUSTED_ROOT,
    ChainFailure.CERT_EXPIRED: Verdict.CERT_EXPIRED,
}


@dataclass(frozen=True)
class VerificationExpectation:
    """What the verifier believes the honest enclave looks like.

    Exactly one of ``expected_measurements`` / ``image_bytes`` must be
    supplied; with ``image_bytes`` the measurements are recomputed locally.
    ``clock_ms`` pins the verification time (epoch ms) for reproducible
    expiry checks; None means "now".
    """

    trust_anchor: TrustAnchor
    response: str
    input: str | None = None
    expected_measurements: MeasurementSet | None = None
    image_bytes: bytes | None = None
    nonce: bytes | None = None
    clock_ms: int | None = None

    def __post_init__(self) -> None:
        if (self.expected_measurements is None) == (self.image_bytes is None):
            raise ValueError(
                "exactly one of expected_measurements / image_bytes must be supplied"
            )


@dataclass(frozen=True)
class VerificationReport:
    verdict: Verdict
    failing_detail: str
    checked_at_ms: int
    document_summary: dict | None = None

    @property
    def passed(self) -> bool:
        return self.verdict is Verdict.PASS

    def to_json_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "failing_detail": self.failing_detail,
            "checked_at_ms": self.checked_at_ms,
            "document_summary": self.document_summary,
        }


def _summarize(document: AttestationDocument) -> dict:
    payload = document.payload
    return {
        "module_id": payload.module_id,
        "timestamp_ms": payload.timestamp_ms,
        "pcr0": payload.measurements.pcr0.hex,
        "pcr1": payload.measurements.pcr1.hex,
        "pcr2": payload.measurements.pcr2.hex,
        "user_data": payload.user_data.hex(),
        "nonce": payload.nonce.hex() if payload.nonce is not None else None,
    }


def measure_expected(image_bytes: bytes) -> MeasurementSet:
    """Self-computed measurements of a published image; byte-for-byte the
    same registers the enclave reports for that image."""
    return measure_image(image_bytes)


def verify(document_bytes: bytes, expectation: VerificationExpectation) -> VerificationReport:
    """Verify a raw attestation document against the expectation."""
    checked_at = int(time.time() * 1000)
    clock_ms = expectation.clock_ms if expectation.clock_ms is not None else checked_at

    def report(verdict: Verdict, detail: str, summary: dict | None = None) -> VerificationReport:
        return VerificationReport(
            verdict=verdict,
            failing_detail=detail if verdict is not Verdict.PASS else "",
            checked_at_ms=checked_at,
            document_summary=summary,
        )

    try:
        document = parse_document(document_bytes)
    except DocumentParseError as exc:
        return report(Verdict.MALFORMED, str(exc))
    except Exception as exc:  # verification is total
        return report(Verdict.MALFORMED, f"unexpected parse failure: {exc}")
    summary = _summarize(document)

    try:
        chain_result = validate_chain(
            document.certificate,
            list(document.ca_bundle),
            signed_structure(document.payload_bytes()),
            document.signature,
            expectation.trust_anchor,
            clock_ms,
        )
    except Exception as exc:
        return report(Verdict.MALFORMED, f"unexpected chain failure: {exc}", summary)
    if not chain_result.ok:
        assert chain_result.failure is not None
        return report(
            _CHAIN_VERDICTS[chain_result.failure], chain_result.detail, summary
        )

    if expectation.expected_measurements is not None:
        expected = expectation.expected_measurements
    else:
        assert expectation.image_bytes is not None
        try:
            expected = measure_expected(expectation.image_bytes)
        except ImageFormatError as exc:
            return report(Verdict.MALFORMED, f"expected image: {exc}", summary)
    reported = document.payload.measurements
    for name in ("pcr0", "pcr1", "pcr2"):
        got = getattr(reported, name)
        want = getattr(expected, name)
        if got.value != want.value:
            return report(
                Verdict.MEASUREMENT_MISMATCH,
                f"{name} mismatch: document reports {got.hex}, expected {want.hex}",
                summary,
            )

    try:
        commitment = make_commitment(expectation.input, expectation.response)
    except CanonicalizationError as exc:
        return report(Verdict.COMMITMENT_MISMATCH, f"cannot recompute commitment: {exc}", summary)
    if commitment.digest.value != document.payload.user_data:
        return report(
            Verdict.COMMITMENT_MISMATCH,
            "commitment over (input, response) does not match user_data: "
            f"computed {commitment.digest.hex}, document carries "
            f"{document.payload.user_data.hex()}",
            summary,
        )

    if expectation.nonce is not None and expectation.nonce != document.payload.nonce:
        got_nonce = document.payload.nonce.hex() if document.payload.nonce else "<absent>"
        return report(
            Verdict.NONCE_MISMATCH,
            f"expected nonce {expectation.nonce.hex()}, document carries {got_nonce}",
            summary,
        )

    return report(Verdict.PASS, "", summary)
