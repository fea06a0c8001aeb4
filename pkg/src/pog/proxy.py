"""In-enclave moderation proxy.

Every chat turn runs the guarded pipeline: input guardrails, then the
upstream model, then guardrails over each tool call, then response
guardrails. Blocking replaces the delivered text with the refusal template
and short-circuits later stages (an input-blocked turn never reaches the
model; a tool-call-blocked turn never delivers model text). Attestation
flows commit to what the user actually received: the ``%attest%`` command
attests the latest turn, and the attestation skill lets the agent attach a
proof for a response it already produced through the moderated pipeline.

The envelope the proxy emits is never model-generated; it is appended by
the proxy itself from the enclave's signed document.
"""

from __future__ import annotations

import base64
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .commitment import make_commitment
from .document import AttestationDocument, document_to_base64
from .enclave import EnclaveState
from .guardrails import (
    DEFAULT_REFUSAL_TEMPLATE,
    ExternalModelClient,
    GuardrailSpec,
    GuardrailVerdict,
    ModerationOutcome,
    Target,
    evaluate_stage,
)
from .upstream import ToolCall, UpstreamError, UpstreamReply

ATTEST_COMMAND = "%attest%"
CUSTOM_DIGEST_METHOD = "sha256"


class ProxyError(RuntimeError):
    pass


class NoTurnError(ProxyError):
    """Attestation requested before any completed turn in the session."""


class SkillRejectedError(ProxyError):
    """Attestation skill called with text no moderated turn produced."""


@dataclass
class ChatTurn:
    """One completed exchange; ``response`` is the delivered (moderated)
    text the commitment binds."""

    session_id: str
    user_input: str
    response: str
    tool_calls: list[ToolCall]
    outcome: ModerationOutcome
    attestation: AttestationDocument | None = None
    created_at_ms: int = field(default_factory=lambda: int(time.time() * 1000))

    def to_view(self) -> dict:
        return {
            "session_id": self.session_id,
            "user_input": self.user_input,
            "response": self.response,
            "tool_calls": [call.to_json_dict() for call in self.tool_calls],
            "blocked": self.outcome.blocked,
            "verdicts": [v.to_json_dict() for v in self.outcome.verdicts],
            "attested": self.attestation is not None,
            "created_at_ms": self.created_at_ms,
        }


@dataclass(frozen=True)
class AttestationEnvelope:
    """The JSON envelope handed to users: the exchanged text plus the
    base64 attestation document whose ``user_data`` commits to it."""

    custom_data: dict[str, str]
    attestation_document: str  # base64 of the raw CBOR document
    custom_digest_method: str = CUSTOM_DIGEST_METHOD

    def to_json_dict(self) -> dict:
        return {
            "custom_digest_method": self.custom_digest_method,
            "custom_data": dict(self.custom_data),
            "attestation_document": self.attestation_document,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), ensure_ascii=False)

    @classmethod
    def from_json_dict(cls, data: dict) -> AttestationEnvelope:
        try:
            return cls(
                custom_data=dict(data["custom_data"]),
                attestation_document=data["attestation_document"],
                custom_digest_method=data.get("custom_digest_method", CUSTOM_DIGEST_METHOD),
            )
        except (KeyError, TypeError) as exc:
            raise ProxyError(f"malformed attestation envelope: {exc}") from exc

    def document_bytes(self) -> bytes:
        return base64.b64decode(self.attestation_document)


class _Session:
    def __init__(self, session_id: str):
        self.session_id = session_id
        self.turns: list[ChatTurn] = []
        self.lock = threading.RLock()


class ProxyService:
    """Session-aware moderation proxy bound to one booted enclave.

    Turns within a session are strictly serialized; attestation requests
    share the session lock so they always see a completed latest turn.
    """

    def __init__(
        self,
        enclave: EnclaveState,
        guardrail_specs: list[GuardrailSpec],
        upstream,
        refusal_template: str = DEFAULT_REFUSAL_TEMPLATE,
        guardrail_clients: dict[str, ExternalModelClient] | None = None,
        transcript_dir: str | Path | None = None,
    ):
        if not guardrail_specs:
            raise ValueError("at least one guardrail spec is required")
        if enclave.secret is None:
            raise ValueError("enclave must have an injected agent secret")
        self.enclave = enclave
        self.guardrail_specs = guardrail_specs
        self.upstream = upstream
        self.refusal_template = refusal_template
        self.guardrail_clients = guardrail_clients or {}
        self.transcript_dir = Path(transcript_dir) if transcript_dir else None
        self._sessions: dict[str, _Session] = {}
        self._sessions_lock = threading.Lock()

    # -- session plumbing ---------------------------------------------------

    def _session(self, session_id: str) -> _Session:
        with self._sessions_lock:
            session = self._sessions.get(session_id)
            if session is None:
                session = _Session(session_id)
                self._sessions[session_id] = session
            return session

    def _log_turn(self, turn: ChatTurn) -> None:
        if self.transcript_dir is None:
            return
        self.transcript_dir.mkdir(parents=True, exist_ok=True)
        path = self.transcript_dir / f"{turn.session_id}.jsonl"
        with path.open("a", encoding="utf-8") as handle:
            handle.write(json.dumps(turn.to_view(), ensure_ascii=False) + "\n")

    # -- chat pipeline --------------------------------------------------------

    def handle_message(self, session_id: str, text: str) -> ChatTurn | AttestationEnvelope:
        """Route one inbound message: the attest command returns the
        envelope for the latest turn; everything else runs the pipeline."""
        if text.strip() == ATTEST_COMMAND:
            return self.handle_attest_request(session_id, bind_input=True)
        return self.handle_chat(session_id, text)

    def handle_chat(self, session_id: str, user_input: str) -> ChatTurn:
        session = self._session(session_id)
        with session.lock:
            turn = self._run_pipeline(session_id, user_input)
            session.turns.append(turn)
            self._log_turn(turn)
            return turn

    def _run_pipeline(self, session_id: str, user_input: str) -> ChatTurn:
        specs = self.guardrail_specs
        clients = self.guardrail_clients
        verdicts: list[GuardrailVerdict] = list(
            evaluate_stage(specs, Target.INPUT, user_input, clients)
        )
        if any(not v.safe for v in verdicts):
            outcome = ModerationOutcome(
                original_response="",
                final_response=self.refusal_template,
                blocked=True,
                verdicts=verdicts,
            )
            return ChatTurn(session_id, user_input, self.refusal_template, [], outcome)

        assert self.enclave.secret is not None
        try:
            reply: UpstreamReply = self.upstream.complete(
                self.enclave.secret.system_prompt, user_input
            )
        except UpstreamError as exc:
            verdicts.append(
                GuardrailVerdict(
                    target=Target.RESPONSE,
                    safe=False,
                    categories=("upstream_unavailable",),
                    rationale=str(exc),
                    guardrail_id="proxy",
                )
            )
            outcome = ModerationOutcome(
                original_response="",
                final_response=self.refusal_template,
                blocked=True,
                verdicts=verdicts,
            )
            return ChatTurn(session_id, user_input, self.refusal_template, [], outcome)

        tool_calls = list(reply.tool_calls)
        for call in tool_calls:
            verdicts.extend(
                evaluate_stage(specs, Target.TOOL_CALL, call.render(), clients)
            )
        if any(not v.safe for v in verdicts):
            # Blocked before response delivery: the model text is discarded.
            outcome = ModerationOutcome(
                original_response="",
                final_response=self.refusal_template,
                blocked=True,
                verdicts=verdicts,
            )
            return ChatTurn(
                session_id, user_input, self.refusal_template, tool_calls, outcome
            )

        verdicts.extend(evaluate_stage(specs, Target.RESPONSE, reply.response, clients))
        blocked = any(not v.safe for v in verdicts)
        final = self.refusal_template if blocked else reply.response
        outcome = ModerationOutcome(
            original_response=reply.response,
            final_response=final,
            blocked=blocked,
            verdicts=verdicts,
        )
        return ChatTurn(session_id, user_input, final, tool_calls, outcome)

    # -- attestation flows -----------------------------------------------------

    def _envelope_for(self, turn: ChatTurn, bind_input: bool, nonce: bytes | None) -> AttestationEnvelope:
        input_text = turn.user_input if bind_input else None
        commitment = make_commitment(input_text, turn.response)
        document = self.enclave.attest(commitment, nonce=nonce)
        turn.attestation = document
        custom_data: dict[str, str] = {"response": turn.response}
        if bind_input:
            custom_data["input"] = turn.user_input
        return AttestationEnvelope(
            custom_data=custom_data,
            attestation_document=document_to_base64(document),
        )

    def handle_attest_request(
        self, session_id: str, bind_input: bool = True, nonce: bytes | None = None
    ) -> AttestationEnvelope:
        """Attest the latest completed turn of the session."""
        session = self._session(session_id)
        with session.lock:
            if not session.turns:
                raise NoTurnError(f"session {session_id!r} has no completed turn")
            return self._envelope_for(session.turns[-1], bind_input, nonce)

    def attestation_skill_call(
        self, session_id: str, intended_response: str
    ) -> AttestationEnvelope:
        """Agent-initiated attestation for a response it already produced
        through the moderated pipeline. Binds the response only; the
        envelope lands in the matched turn's tool calls."""
        session = self._session(session_id)
        with session.lock:
            match = next(
                (
                    turn
                    for turn in reversed(session.turns)
                    if turn.response == intended_response
                ),
                None,
            )
            if match is None:
                raise SkillRejectedError(
                    "intended response was not produced by any moderated turn"
                )
            envelope = self._envelope_for(match, bind_input=False, nonce=None)
            match.tool_calls.append(
                ToolCall(
                    name="attestation_skill",
                    arguments=json.dumps(
                        {"response_sha256": make_commitment(None, intended_response).digest.hex}
                    ),
                    result=envelope.to_json(),
                )
            )
            return envelope

    def latest_turn(self, session_id: str) -> ChatTurn | None:
        session = self._session(session_id)
        with session.lock:
            return session.turns[-1] if session.turns else None
