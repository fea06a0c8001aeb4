"""Digest values and PCR-style measurement registers.

All hash outputs in the system flow through :class:`DigestValue`, which pins
the algorithm to its output length and renders lowercase hex. Measurements
are three fixed SHA-384 registers over enclave image sections (see
``pog.image`` for the register definitions).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum


class DigestAlgorithm(Enum):
    SHA256 = "SHA256"
    SHA384 = "SHA384"

    @property
    def digest_size(self) -> int:
        return 32 if self is DigestAlgorithm.SHA256 else 48

    @property
    def hashlib_name(self) -> str:
        return "sha256" if self is DigestAlgorithm.SHA256 else "sha384"


@dataclass(frozen=True)
class DigestValue:
    """A digest output bound to its algorithm.

    Invariant: ``len(value) == algorithm.digest_size``.
    """

    algorithm: DigestAlgorithm
    value: bytes

    def __post_init__(self) -> None:
        if len(self.value) != self.algorithm.digest_size:
            raise ValueError(
                f"{self.algorithm.value} digest must be "
                f"{self.algorithm.digest_size} bytes, got {len(self.value)}"
            )

    @property
    def hex(self) -> str:
        """Lowercase hex, no separators."""
        return self.value.hex()

    @classmethod
    def from_hex(cls, algorithm: DigestAlgorithm, hex_text: str) -> DigestValue:
        try:
            raw = bytes.fromhex(hex_text)
        except ValueError:
            raise ValueError(f"not a hex string: {hex_text!r}") from None
        return cls(algorithm, raw)


def compute_digest(algorithm: DigestAlgorithm, data: bytes) -> DigestValue:
    """FIPS 180-4 digest of ``data`` under ``algorithm``. Total function."""
    h = hashlib.new(algorithm.hashlib_name)
    h.update(data)
    return DigestValue(algorithm, h.digest())


@dataclass(frozen=True)
class MeasurementSet:
    """Three SHA-384 platform-configuration registers.

    pcr0 covers the full image, pcr1 the manifest and runtime sections,
    pcr2 the application section. Identical image bytes always yield an
    identical MeasurementSet.
    """

    pcr0: DigestValue
    pcr1: DigestValue
    pcr2: DigestValue

    def __post_init__(self) -> None:
        for name in ("pcr0", "pcr1", "pcr2"):
            register: DigestValue = getattr(self, name)
            if register.algorithm is not DigestAlgorithm.SHA384:
                raise ValueError(f"{name} must be SHA-384")

    @classmethod
    def from_hex(cls, pcr0: str, pcr1: str, pcr2: str) -> MeasurementSet:
        return cls(
            DigestValue.from_hex(DigestAlgorithm.SHA384, pcr0),
            DigestValue.from_hex(DigestAlgorithm.SHA384, pcr1),
            DigestValue.from_hex(DigestAlgorithm.SHA384, pcr2),
        )

    def to_json_dict(self) -> dict[str, str]:
        """Measurement report shape: lowercase hex per register."""
        return {"pcr0": self.pcr0.hex, "pcr1": self.pcr1.hex, "pcr2": self.pcr2.hex}
