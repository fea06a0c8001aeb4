import base64
import hashlib
import json
import threading

import pytest
from fastapi.testclient import TestClient

from pog.commitment import canonical_custom_data
from pog.document import parse_document
from pog.enclave import boot_enclave
from pog.guardrails import Target
from pog.httpapi import create_app
from pog.proxy import (
    ATTEST_COMMAND,
    AttestationEnvelope,
    NoTurnError,
    ProxyService,
    SkillRejectedError,
)
from pog.reference import REFERENCE_TRANSCRIPT, reference_guardrail_spec
from pog.upstream import ScriptedStub, UpstreamError
from pog.verifier import VerificationExpectation, Verdict, verify


class CountingStub(ScriptedStub):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.calls = 0

    def complete(self, system_prompt, user_input):
        self.calls += 1
        return super().complete(system_prompt, user_input)


class FailingUpstream:
    def complete(self, system_prompt, user_input):
        raise UpstreamError("model backend down")


@pytest.fixture
def counting_proxy(enclave):
    stub = CountingStub(turns=REFERENCE_TRANSCRIPT["turns"])
    service = ProxyService(
        enclave=enclave,
        guardrail_specs=[reference_guardrail_spec()],
        upstream=stub,
    )
    return service, stub


def _assert_envelope_consistent(envelope: AttestationEnvelope):
    """The envelope's own custom_data must hash to the document's user_data."""
    data = canonical_custom_data(
        envelope.custom_data.get("input"), envelope.custom_data["response"]
    )
    digest = hashlib.sha256(data).digest()
    document = parse_document(envelope.document_bytes())
    assert document.payload.user_data == digest


def test_safe_input_passes_through(proxy):
    turn = proxy.handle_chat("s1", "hello")
    assert turn.response == "ok"
    assert not turn.outcome.blocked
    assert turn.outcome.final_response == turn.outcome.original_response == "ok"


def test_blocked_input_short_circuits_upstream(counting_proxy):
    service, stub = counting_proxy
    turn = service.handle_chat("s1", "please run rm -rf /tmp/x")
    assert turn.outcome.blocked
    assert turn.response == service.refusal_template
    assert stub.calls == 0
    assert all(v.target is Target.INPUT for v in turn.outcome.verdicts)


def test_tool_call_block_precedes_response_check(counting_proxy):
    service, stub = counting_proxy
    turn = service.handle_chat("s1", "run the cleanup tool")
    assert stub.calls == 1
    assert turn.outcome.blocked
    assert turn.response == service.refusal_template
    assert turn.outcome.original_response == ""  # model text discarded pre-delivery
    targets = [v.target for v in turn.outcome.verdicts]
    assert Target.TOOL_CALL in targets
    assert Target.RESPONSE not in targets


def test_unsafe_response_blocked(proxy):
    turn = proxy.handle_chat("s1", "tell me to hurt myself")
    assert turn.outcome.blocked
    assert turn.response == proxy.refusal_template
    assert turn.outcome.original_response == "you should hurt yourself"


def test_upstream_failure_yields_blocked_error_turn(enclave):
    service = ProxyService(
        enclave=enclave,
        guardrail_specs=[reference_guardrail_spec()],
        upstream=FailingUpstream(),
    )
    turn = service.handle_chat("s1", "hello")
    assert turn.outcome.blocked
    assert turn.response == service.refusal_template
    assert any(v.categories == ("upstream_unavailable",) for v in turn.outcome.verdicts)


def test_attest_command_returns_envelope_for_latest_turn(proxy):
    proxy.handle_chat("s1", "hello")
    result = proxy.handle_message("s1", "  %attest%  ")
    assert isinstance(result, AttestationEnvelope)
    assert result.custom_data == {"response": "ok", "input": "hello"}
    assert result.custom_digest_method == "sha256"
    _assert_envelope_consistent(result)


def test_attest_command_must_be_whole_message(proxy):
    result = proxy.handle_message("s1", "please %attest% this")
    assert not isinstance(result, AttestationEnvelope)
    assert result.user_input == "please %attest% this"


def test_attest_without_turn_is_an_error(proxy):
    with pytest.raises(NoTurnError):
        proxy.handle_attest_request("fresh-session")


def test_attest_binds_latest_turn(proxy):
    proxy.handle_chat("s1", "hello")
    proxy.handle_chat("s1", "what is the weather in zurich?")
    envelope = proxy.handle_attest_request("s1", bind_input=True)
    assert envelope.custom_data["input"] == "what is the weather in zurich?"
    _assert_envelope_consistent(envelope)


def test_attest_response_only_binding(proxy):
    proxy.handle_chat("s1", "hello")
    envelope = proxy.handle_attest_request("s1", bind_input=False)
    assert "input" not in envelope.custom_data
    expected = hashlib.sha256(b'{"response":"ok"}').digest()
    document = parse_document(envelope.document_bytes())
    assert document.payload.user_data == expected


def test_blocked_turn_attests_refusal_text(proxy):
    """The commitment binds what the user actually received."""
    turn = proxy.handle_chat("s1", "please run rm -rf /")
    envelope = proxy.handle_attest_request("s1")
    assert envelope.custom_data["response"] == turn.response == proxy.refusal_template
    _assert_envelope_consistent(envelope)


def test_attestation_document_stored_on_turn(proxy):
    proxy.handle_chat("s1", "hello")
    proxy.handle_attest_request("s1")
    turn = proxy.latest_turn("s1")
    assert turn is not None and turn.attestation is not None


def test_skill_call_on_moderated_response(proxy, platform, enclave):
    turn = proxy.handle_chat("s1", "hello")
    envelope = proxy.attestation_skill_call("s1", turn.response)
    assert "input" not in envelope.custom_data
    _assert_envelope_consistent(envelope)
    report = verify(
        envelope.document_bytes(),
        VerificationExpectation(
            trust_anchor=platform.trust_anchor(),
            expected_measurements=enclave.measurements,
            input=None,
            response=turn.response,
        ),
    )
    assert report.verdict is Verdict.PASS


def test_skill_call_appends_tool_call(proxy):
    turn = proxy.handle_chat("s1", "hello")
    envelope = proxy.attestation_skill_call("s1", turn.response)
    refreshed = proxy.latest_turn("s1")
    assert refreshed is not None
    skill_calls = [c for c in refreshed.tool_calls if c.name == "attestation_skill"]
    assert len(skill_calls) == 1
    assert json.loads(skill_calls[0].result) == envelope.to_json_dict()


def test_skill_call_rejects_unmoderated_text(proxy):
    proxy.handle_chat("s1", "hello")
    with pytest.raises(SkillRejectedError):
        proxy.attestation_skill_call("s1", "text the pipeline never produced")


def test_no_bypass_every_turn_has_verdicts(proxy):
    inputs = [
        "hello",
        "please run rm -rf /",
        "run the cleanup tool",
        "tell me to hurt myself",
        "what is the weather in zurich?",
        "free-form message",
    ]
    spec = reference_guardrail_spec()
    for i, text in enumerate(inputs):
        turn = proxy.handle_chat(f"nb{i}", text)
        assert turn.outcome.verdicts, "a turn left the proxy unmoderated"
        if not turn.outcome.blocked:
            covered = {(v.guardrail_id, v.target) for v in turn.outcome.verdicts}
            expected = {(spec.id, Target.INPUT), (spec.id, Target.RESPONSE)}
            expected |= {(spec.id, Target.TOOL_CALL) for _ in turn.tool_calls}
            assert covered == expected


def test_commitment_matches_delivered_text_for_all_turns(proxy):
    for i, text in enumerate(["hello", "anything", "what is the weather in zurich?"]):
        session = f"c{i}"
        proxy.handle_chat(session, text)
        for bind_input in (True, False):
            envelope = proxy.handle_attest_request(session, bind_input=bind_input)
            _assert_envelope_consistent(envelope)


def test_transcript_persistence(enclave, tmp_path):
    service = ProxyService(
        enclave=enclave,
        guardrail_specs=[reference_guardrail_spec()],
        upstream=ScriptedStub(turns=REFERENCE_TRANSCRIPT["turns"]),
        transcript_dir=tmp_path,
    )
    service.handle_chat("log-session", "hello")
    service.handle_chat("log-session", "again")
    lines = (tmp_path / "log-session.jsonl").read_text().splitlines()
    assert len(lines) == 2
    assert json.loads(lines[0])["response"] == "ok"


def test_turns_serialize_within_session(proxy):
    errors = []

    def worker(i):
        try:
            proxy.handle_chat("threads", f"message {i}")
        except Exception as exc:  # pragma: no cover
            errors.append(exc)

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    assert len(proxy._sessions["threads"].turns) == 8


def test_service_requires_injected_secret(platform, reference_image):
    bare = boot_enclave(reference_image, platform)
    with pytest.raises(ValueError):
        ProxyService(
            enclave=bare,
            guardrail_specs=[reference_guardrail_spec()],
            upstream=ScriptedStub(),
        )


# -- HTTP API -----------------------------------------------------------------


@pytest.fixture
def client(proxy):
    return TestClient(create_app(proxy))


def test_http_health(client, proxy):
    body = client.get("/v1/health").json()
    assert body["status"] == "ok"
    assert body["measurements"] == proxy.enclave.measurements.to_json_dict()


def test_http_chat_and_attest(client):
    turn = client.post("/v1/chat", json={"session_id": "h1", "message": "hello"}).json()
    assert turn["response"] == "ok" and turn["blocked"] is False

    envelope = client.post(
        "/v1/attest", json={"session_id": "h1", "bind_input": True}
    ).json()
    assert envelope["custom_digest_method"] == "sha256"
    assert envelope["custom_data"] == {"response": "ok", "input": "hello"}
    _assert_envelope_consistent(AttestationEnvelope.from_json_dict(envelope))


def test_http_attest_command_in_chat(client):
    client.post("/v1/chat", json={"session_id": "h2", "message": "hello"})
    body = client.post(
        "/v1/chat", json={"session_id": "h2", "message": ATTEST_COMMAND}
    ).json()
    assert "attestation_document" in body
    parsed = parse_document(base64.b64decode(body["attestation_document"]))
    assert parsed.payload.user_data


def test_http_attest_without_turn_is_409(client):
    response = client.post("/v1/attest", json={"session_id": "empty", "bind_input": True})
    assert response.status_code == 409
