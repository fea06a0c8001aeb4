"""Attested guardrail execution for AI agents.

A moderation proxy runs inside a (simulated) trusted execution environment;
its image — guardrail wrapper code plus configuration — is measured at
boot, every response is moderated, and on request the enclave signs an
attestation document binding the measured code to the exact exchanged
text. Anyone can verify the proof offline against the platform root
certificate and a self-computed measurement of the public image.

The simulator provides integrity semantics only — no isolation, no
confidentiality. See README for the trust model.
"""

from .chain import (
    ChainFailure,
    ChainValidationResult,
    TrustAnchor,
    validate_chain,
)
from .commitment import Commitment, canonical_custom_data, make_commitment
from .digest import DigestAlgorithm, DigestValue, MeasurementSet, compute_digest
from .document import (
    AttestationDocument,
    AttestationPayload,
    DocumentParseError,
    document_to_base64,
    encode_payload,
    decode_payload,
    parse_document,
    serialize_document,
    sign_document,
)
from .enclave import (
    AgentSecret,
    EnclaveState,
    PlatformAuthority,
    SecretRejectedError,
    boot_enclave,
)
from .guardrails import (
    GuardrailKind,
    GuardrailSpec,
    GuardrailUnavailableError,
    GuardrailVerdict,
    ModerationOutcome,
    Target,
    evaluate,
    load_guardrail_spec,
    moderate,
)
from .harness import (
    AttackKind,
    AttackScenario,
    AttackSummary,
    LatencyRecord,
    LatencyTask,
    build_baseline,
    run_attack,
    run_latency,
)
from .image import (
    EnclaveImage,
    ImageFormatError,
    build_image,
    compose_application,
    measure_image,
    parse_image,
)
from .proxy import (
    AttestationEnvelope,
    ChatTurn,
    NoTurnError,
    ProxyService,
    SkillRejectedError,
)
from .upstream import ScriptedStub, ToolCall, UpstreamError, UpstreamReply
from .verifier import (
    VerificationExpectation,
    VerificationReport,
    Verdict,
    measure_expected,
    verify,
)

__version__ = "0.1.0"
