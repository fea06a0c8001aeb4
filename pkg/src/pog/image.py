"""Enclave image bundles (.pgeif) and their measurement.

An image is the immutable public artifact that gets measured at boot:
a JSON manifest, the application section (guardrail wrapper code plus its
configuration) and a runtime blob, length-prefixed in fixed order behind
a magic header. Building is byte-deterministic, so anyone can rebuild the
published image and recompute its measurements.

Register definitions (all SHA-384):
    pcr0  full image bytes
    pcr1  manifest section || runtime section (each with its length prefix)
    pcr2  application section (with its length prefix)
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass

from .digest import DigestAlgorithm, DigestValue, MeasurementSet, compute_digest

MAGIC = b"PGEIF1"
FILE_EXTENSION = ".pgeif"

_LENGTH = struct.Struct(">I")


class ImageFormatError(ValueError):
    """Image bytes or manifest do not conform to the bundle format."""


def _validate_manifest(manifest: str) -> None:
    try:
        parsed = json.loads(manifest)
    except json.JSONDecodeError as exc:
        raise ImageFormatError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(parsed, dict):
        raise ImageFormatError("manifest must be a JSON object")
    guardrail = parsed.get("guardrail")
    if not isinstance(guardrail, dict) or not isinstance(guardrail.get("id"), str):
        raise ImageFormatError(
            "manifest must name exactly one guardrail configuration "
            "(object key 'guardrail' with a string 'id')"
        )


@dataclass(frozen=True)
class EnclaveImage:
    """Parsed image sections. Use :func:`build_image` to construct."""

    manifest: str
    application: bytes
    runtime: bytes

    def to_bytes(self) -> bytes:
        manifest_raw = self.manifest.encode("utf-8")
        return b"".join(
            (
                MAGIC,
                _LENGTH.pack(len(manifest_raw)),
                manifest_raw,
                _LENGTH.pack(len(self.application)),
                self.application,
                _LENGTH.pack(len(self.runtime)),
                self.runtime,
            )
        )


def build_image(manifest: str, application: bytes, runtime: bytes) -> EnclaveImage:
    """Deterministic bundle from the three sections.

    The manifest must be valid JSON naming exactly one guardrail
    configuration. Empty sections are allowed.
    """
    _validate_manifest(manifest)
    return EnclaveImage(manifest=manifest, application=application, runtime=runtime)


def parse_image(data: bytes) -> EnclaveImage:
    if data[: len(MAGIC)] != MAGIC:
        raise ImageFormatError("bad magic; not a PGEIF1 image")
    offset = len(MAGIC)
    sections: list[bytes] = []
    for name in ("manifest", "application", "runtime"):
        if offset + _LENGTH.size > len(data):
            raise ImageFormatError(f"truncated {name} length at byte {offset}")
        (length,) = _LENGTH.unpack_from(data, offset)
        offset += _LENGTH.size
        if offset + length > len(data):
            raise ImageFormatError(f"truncated {name} section at byte {offset}")
        sections.append(data[offset : offset + length])
        offset += length
    if offset != len(data):
        raise ImageFormatError(f"trailing bytes after sections at byte {offset}")
    try:
        manifest = sections[0].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ImageFormatError(f"manifest is not UTF-8: {exc}") from exc
    _validate_manifest(manifest)
    return EnclaveImage(manifest=manifest, application=sections[1], runtime=sections[2])


def measure_image(image: EnclaveImage | bytes) -> MeasurementSet:
    """Pure function of the image bytes; see register definitions above."""
    if isinstance(image, (bytes, bytearray)):
        image = parse_image(bytes(image))
    manifest_raw = image.manifest.encode("utf-8")
    pcr0 = compute_digest(DigestAlgorithm.SHA384, image.to_bytes())
    pcr1_hash = hashlib.sha384()
    pcr1_hash.update(_LENGTH.pack(len(manifest_raw)))
    pcr1_hash.update(manifest_raw)
    pcr1_hash.update(_LENGTH.pack(len(image.runtime)))
    pcr1_hash.update(image.runtime)
    pcr2_hash = hashlib.sha384()
    pcr2_hash.update(_LENGTH.pack(len(image.application)))
    pcr2_hash.update(image.application)
    return MeasurementSet(
        pcr0=pcr0,
        pcr1=DigestValue(DigestAlgorithm.SHA384, pcr1_hash.digest()),
        pcr2=DigestValue(DigestAlgorithm.SHA384, pcr2_hash.digest()),
    )


def compose_application(wrapper_source: str, guardrail_config: str) -> bytes:
    """Application section: wrapper code followed by its guardrail
    configuration, with the configuration hash embedded so the config is
    demonstrably covered by pcr2."""
    config_raw = guardrail_config.encode("utf-8")
    config_sha256 = hashlib.sha256(config_raw).hexdigest()
    parts = [
        wrapper_source.encode("utf-8"),
        f"\n# --- guardrail configuration (sha256: {config_sha256}) ---\n".encode("utf-8"),
        config_raw,
        b"\n",
    ]
    return b"".join(parts)
