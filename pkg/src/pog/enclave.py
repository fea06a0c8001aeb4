"""Software-simulated trusted execution environment.

The simulator provides INTEGRITY semantics only: images are measured before
any secret enters, measurements are immutable afterwards, and attestation
documents are signed with a key that never leaves this module. It does NOT
provide isolation or confidentiality — nothing here protects the agent
secret from a host with debugger access. Deploy on real TEE hardware for
that.

Boot flow: measure the image, generate a fresh P-384 attestation keypair,
have the platform authority issue a 24-hour leaf certificate chaining
through its platform CA to its self-signed root, then (optionally) accept
the developer's agent as unmeasured secret input.
"""

from __future__ import annotations

import datetime
import secrets
import threading
import time
from dataclasses import dataclass, field

from cryptography import x509
from cryptography.hazmat.primitives.asymmetric import ec

from .chain import (
    TrustAnchor,
    certificate_to_der,
    certificate_to_pem,
    generate_signing_key,
    issue_intermediate_certificate,
    issue_leaf_certificate,
    issue_root_certificate,
)
from .commitment import Commitment
from .digest import MeasurementSet
from .document import AttestationDocument, AttestationPayload, sign_document
from .image import EnclaveImage, measure_image

DEFAULT_EXECUTABLE_PREFIXES = ("#!", "<?php", "<script")

LEAF_VALIDITY_HOURS = 24


class SecretRejectedError(ValueError):
    """Agent secret looks executable; only prompt artifacts are accepted."""


@dataclass
class AgentSecret:
    """The developer's private agent: prompt artifacts only, never code."""

    system_prompt: str
    persona_config: dict[str, str] = field(default_factory=dict)
    declared_tools: list[str] = field(default_factory=list)


def _looks_executable(text: str, denylist: tuple[str, ...]) -> str | None:
    stripped = text.lstrip()
    for prefix in denylist:
        if stripped.startswith(prefix):
            return prefix
    return None


class PlatformAuthority:
    """Simulated platform trust anchor: root key/cert plus the platform CA
    that issues per-enclave attestation leaf certificates."""

    def __init__(self, name: str = "pog-sim", root_valid_days: int = 3650):
        self.name = name
        self._root_key = generate_signing_key()
        self.root_certificate = issue_root_certificate(
            self._root_key, common_name=f"{name} root", valid_days=root_valid_days
        )
        self._ca_key = generate_signing_key()
        self.ca_certificate = issue_intermediate_certificate(
            self._root_key,
            self.root_certificate,
            self._ca_key,
            common_name=f"{name} platform CA",
        )

    def trust_anchor(self) -> TrustAnchor:
        return TrustAnchor(root_certificate=certificate_to_der(self.root_certificate))

    def root_certificate_pem(self) -> bytes:
        """PEM export for distribution to verifiers."""
        return certificate_to_pem(self.root_certificate)

    def issue_enclave_chain(
        self,
        public_key: ec.EllipticCurvePublicKey,
        module_id: str,
        now: datetime.datetime | None = None,
    ) -> list[x509.Certificate]:
        leaf = issue_leaf_certificate(
            self._ca_key,
            self.ca_certificate,
            public_key,
            common_name=module_id,
            valid_hours=LEAF_VALIDITY_HOURS,
            now=now,
        )
        return [leaf, self.ca_certificate, self.root_certificate]


class EnclaveState:
    """A booted enclave: frozen measurements, confined signing key, chain,
    and the (replaceable) agent secret.

    Concurrency: ``attest`` may be called from many threads; signing
    serializes on an internal lock. ``inject_secret`` is a single-owner
    operation.
    """

    def __init__(
        self,
        measurements: MeasurementSet,
        signing_key: ec.EllipticCurvePrivateKey,
        chain: list[x509.Certificate],
        module_id: str,
        executable_prefixes: tuple[str, ...] = DEFAULT_EXECUTABLE_PREFIXES,
    ):
        self.measurements = measurements
        self.module_id = module_id
        self.chain = chain
        self.booted_at_ms = int(time.time() * 1000)
        self.secret: AgentSecret | None = None
        self.executable_prefixes = executable_prefixes
        # Private: the attestation key must never leave this object.
        self._signing_key = signing_key
        self._sign_lock = threading.Lock()

    def inject_secret(self, secret: AgentSecret) -> None:
        """Store the agent secret. Latest injection wins; measurements are
        untouched. Secrets carrying executable markers are rejected."""
        hit = _looks_executable(secret.system_prompt, self.executable_prefixes)
        if hit:
            raise SecretRejectedError(
                f"system_prompt starts with executable marker {hit!r}"
            )
        for key, value in secret.persona_config.items():
            hit = _looks_executable(value, self.executable_prefixes)
            if hit:
                raise SecretRejectedError(
                    f"persona_config[{key!r}] starts with executable marker {hit!r}"
                )
        self.secret = secret

    def attest(
        self, commitment: Commitment, nonce: bytes | None = None
    ) -> AttestationDocument:
        """Fresh signed attestation carrying the boot-time measurements and
        the given commitment; the nonce is echoed verbatim."""
        payload = AttestationPayload(
            module_id=self.module_id,
            timestamp_ms=int(time.time() * 1000),
            measurements=self.measurements,
            user_data=commitment.digest.value,
            nonce=nonce,
        )
        return sign_document(payload, self._signing_key, self.chain, lock=self._sign_lock)

    def public_view(self) -> dict:
        """Everything an operator may see; contains no key material."""
        return {
            "module_id": self.module_id,
            "booted_at_ms": self.booted_at_ms,
            "measurements": self.measurements.to_json_dict(),
            "certificate_chain_pem": [
                certificate_to_pem(cert).decode("ascii") for cert in self.chain
            ],
            "secret_injected": self.secret is not None,
        }

    def __repr__(self) -> str:  # never leak the key through repr
        return (
            f"EnclaveState(module_id={self.module_id!r}, "
            f"pcr0={self.measurements.pcr0.hex[:16]}..., "
            f"secret_injected={self.secret is not None})"
        )


def boot_enclave(image: EnclaveImage, platform: PlatformAuthority) -> EnclaveState:
    """Measure the image and bring up an enclave with a fresh attestation
    keypair certified by ``platform``. The secret is empty after boot."""
    measurements = measure_image(image)
    module_id = f"sim-{secrets.token_hex(6)}-enc{secrets.token_hex(2)}"
    signing_key = generate_signing_key()
    chain = platform.issue_enclave_chain(signing_key.public_key(), module_id)
    return EnclaveState(
        measurements=measurements,
        signing_key=signing_key,
        chain=chain,
        module_id=module_id,
    )
