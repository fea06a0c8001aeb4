"""Data commitments binding an attestation document to a chat exchange.

The commitment is SHA-256 over a canonical JSON encoding of the user input
and the delivered response (or the response alone when input binding is not
required). Canonical means: keys sorted lexicographically, no insignificant
whitespace, minimal JSON string escaping, UTF-8 bytes. The same encoding is
what a verifier recomputes from the envelope's ``custom_data``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .digest import DigestAlgorithm, DigestValue, compute_digest


class CanonicalizationError(ValueError):
    """Input text cannot be canonically encoded (bad UTF-8 or empty response)."""


def canonical_custom_data(input_text: str | None, response: str) -> bytes:
    """Canonical JSON bytes of the (input, response) pair.

    The ``input`` key is present iff ``input_text`` is supplied; ``response``
    is always present and must be non-empty.
    """
    if not response:
        raise CanonicalizationError("response must be non-empty")
    payload: dict[str, str] = {"response": response}
    if input_text is not None:
        payload["input"] = input_text
    try:
        text = json.dumps(
            payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False
        )
        return text.encode("utf-8")
    except (UnicodeEncodeError, ValueError) as exc:
        raise CanonicalizationError(f"text is not encodable: {exc}") from exc


@dataclass(frozen=True)
class Commitment:
    """SHA-256 commitment over the canonical custom data.

    ``binds_input`` is True iff the digest covers the input as well as the
    response.
    """

    method: DigestAlgorithm
    digest: DigestValue
    binds_input: bool

    def __post_init__(self) -> None:
        if self.method is not DigestAlgorithm.SHA256:
            raise ValueError("commitments use SHA-256")
        if self.digest.algorithm is not self.method:
            raise ValueError("digest algorithm does not match commitment method")


def make_commitment(input_text: str | None, response: str) -> Commitment:
    """Commit to ``(input, response)``, or to the response alone when
    ``input_text`` is None."""
    data = canonical_custom_data(input_text, response)
    return Commitment(
        method=DigestAlgorithm.SHA256,
        digest=compute_digest(DigestAlgorithm.SHA256, data),
        binds_input=input_text is not None,
    )
