import json

import httpx
import pytest

from pog.guardrails import (
    DEFAULT_REFUSAL_TEMPLATE,
    ExternalModelClient,
    GatewayDescriptor,
    GuardrailConfigError,
    GuardrailKind,
    GuardrailSpec,
    GuardrailUnavailableError,
    Target,
    evaluate,
    load_guardrail_spec,
    moderate,
    normalize_text,
)

RULES = json.dumps(
    {
        "rules": [
            {
                "id": "danger",
                "pattern": "rm -rf",
                "category": "dangerous_command",
                "applies_to": ["input", "response", "tool_call"],
            },
            {
                "id": "caps-drop",
                "pattern": r"drop\s+table",
                "category": "sql_injection",
                "regex": True,
            },
        ]
    }
)

SPEC = GuardrailSpec(id="rules-test", kind=GuardrailKind.RULE_BASED, configuration=RULES)


def gateway_spec(**descriptor_overrides) -> GuardrailSpec:
    descriptor = {"base_url": "http://gateway.invalid", "model_name": "guard-1"}
    descriptor.update(descriptor_overrides)
    return GuardrailSpec(
        id="external-test",
        kind=GuardrailKind.EXTERNAL_MODEL,
        configuration=json.dumps(descriptor),
    )


def mock_client(handler) -> ExternalModelClient:
    return ExternalModelClient(
        GatewayDescriptor(base_url="http://gateway.invalid", model_name="guard-1"),
        transport=httpx.MockTransport(handler),
    )


def completion(content: str) -> httpx.Response:
    return httpx.Response(200, json={"choices": [{"message": {"content": content}}]})


def test_direct_rule_match():
    verdict = evaluate(SPEC, Target.INPUT, "please run rm -rf /")
    assert not verdict.safe
    assert verdict.categories == ("dangerous_command",)
    assert verdict.guardrail_id == "rules-test"


def test_no_match_is_safe():
    verdict = evaluate(SPEC, Target.INPUT, "hello")
    assert verdict.safe and verdict.categories == ()


def test_case_insensitive_match():
    assert not evaluate(SPEC, Target.INPUT, "RM -RF the directory").safe


def test_nfc_normalization_applies():
    # Decomposed "é" in the rule text vs composed in the input.
    spec = GuardrailSpec(
        id="nfc",
        kind=GuardrailKind.RULE_BASED,
        configuration=json.dumps(
            {"rules": [{"id": "r", "pattern": "café", "category": "c"}]}
        ),
    )
    assert not evaluate(spec, Target.INPUT, "meet at the café").safe
    assert normalize_text("CAFÉ") == "café"


def test_regex_rule():
    assert not evaluate(SPEC, Target.RESPONSE, "DROP   TABLE users;").safe


def test_determinism_modulo_elapsed():
    a = evaluate(SPEC, Target.INPUT, "run rm -rf now")
    b = evaluate(SPEC, Target.INPUT, "run rm -rf now")
    assert (a.target, a.safe, a.categories, a.rationale, a.guardrail_id) == (
        b.target,
        b.safe,
        b.categories,
        b.rationale,
        b.guardrail_id,
    )


def test_target_precondition():
    narrow = GuardrailSpec(
        id="narrow",
        kind=GuardrailKind.RULE_BASED,
        configuration=RULES,
        applies_to=frozenset({Target.INPUT}),
    )
    with pytest.raises(ValueError):
        evaluate(narrow, Target.RESPONSE, "x")


def test_rule_level_applies_to():
    spec = GuardrailSpec(
        id="scoped",
        kind=GuardrailKind.RULE_BASED,
        configuration=json.dumps(
            {"rules": [{"id": "r", "pattern": "block me", "category": "c", "applies_to": ["response"]}]}
        ),
    )
    assert evaluate(spec, Target.INPUT, "block me").safe
    assert not evaluate(spec, Target.RESPONSE, "block me").safe


def test_bad_rule_configuration():
    with pytest.raises(GuardrailConfigError):
        evaluate(
            GuardrailSpec(id="bad", kind=GuardrailKind.RULE_BASED, configuration="nope"),
            Target.INPUT,
            "x",
        )


def test_moderate_all_safe_passes_through():
    outcome = moderate([SPEC], "hello", "all good", [])
    assert not outcome.blocked
    assert outcome.final_response == "all good" == outcome.original_response
    assert all(v.safe for v in outcome.verdicts)


def test_moderate_unsafe_response_blocks():
    outcome = moderate([SPEC], "hello", "just rm -rf it", [])
    assert outcome.blocked
    assert outcome.final_response == DEFAULT_REFUSAL_TEMPLATE
    assert outcome.original_response == "just rm -rf it"


def test_moderate_verdict_ordering():
    other = GuardrailSpec(id="second", kind=GuardrailKind.RULE_BASED, configuration=RULES)
    outcome = moderate([SPEC, other], "in", "resp", ["call-a", "call-b"])
    keys = [(v.target, v.guardrail_id) for v in outcome.verdicts]
    assert keys == [
        (Target.INPUT, "rules-test"),
        (Target.INPUT, "second"),
        (Target.TOOL_CALL, "rules-test"),
        (Target.TOOL_CALL, "second"),
        (Target.TOOL_CALL, "rules-test"),
        (Target.TOOL_CALL, "second"),
        (Target.RESPONSE, "rules-test"),
        (Target.RESPONSE, "second"),
    ]


def test_moderate_requires_specs():
    with pytest.raises(ValueError):
        moderate([], "a", "b", [])


def test_gateway_safe_and_unsafe_parsing():
    client = mock_client(lambda request: completion("safe"))
    safe, categories, _ = client.classify(Target.INPUT, "hello")
    assert safe and categories == ()

    client = mock_client(lambda request: completion("unsafe\nS1, S9"))
    safe, categories, _ = client.classify(Target.RESPONSE, "bad")
    assert not safe and categories == ("S1", "S9")


def test_gateway_down_is_unavailable():
    def handler(request):
        raise httpx.ConnectError("connection refused")

    client = mock_client(handler)
    with pytest.raises(GuardrailUnavailableError):
        client.classify(Target.INPUT, "x")


def test_gateway_garbage_is_unavailable():
    client = mock_client(lambda request: completion("maybe?"))
    with pytest.raises(GuardrailUnavailableError):
        client.classify(Target.INPUT, "x")


def test_moderate_fail_closed_on_unavailable_gateway():
    def handler(request):
        raise httpx.ConnectError("connection refused")

    spec = gateway_spec()
    outcome = moderate(
        [spec], "hello", "fine", [], clients={"external-test": mock_client(handler)}
    )
    assert outcome.blocked
    assert outcome.final_response == DEFAULT_REFUSAL_TEMPLATE
    unavailable = [v for v in outcome.verdicts if not v.safe]
    assert unavailable and all(v.rationale == "guardrail unavailable" for v in unavailable)


def test_gateway_key_env_indirection(monkeypatch):
    captured = {}

    def handler(request):
        captured["auth"] = request.headers.get("authorization")
        return completion("safe")

    monkeypatch.setenv("TEST_GUARD_KEY", "sk-secret")
    descriptor = GatewayDescriptor(
        base_url="http://gateway.invalid", model_name="m", api_key_env_var="TEST_GUARD_KEY"
    )
    client = ExternalModelClient(descriptor, transport=httpx.MockTransport(handler))
    client.classify(Target.INPUT, "x")
    assert captured["auth"] == "Bearer sk-secret"


def test_load_guardrail_spec_files(tmp_path):
    rules_path = tmp_path / "rules.json"
    rules_path.write_text(RULES)
    spec = load_guardrail_spec(str(rules_path))
    assert spec.kind is GuardrailKind.RULE_BASED
    assert spec.id == "rules"

    gateway_path = tmp_path / "gateway.json"
    gateway_path.write_text(
        json.dumps({"id": "llama-guard", "base_url": "http://x", "model_name": "m",
                    "applies_to": ["input", "response"]})
    )
    spec = load_guardrail_spec(str(gateway_path))
    assert spec.kind is GuardrailKind.EXTERNAL_MODEL
    assert spec.id == "llama-guard"
    assert spec.applies_to == frozenset({Target.INPUT, Target.RESPONSE})

    bad_path = tmp_path / "neither.json"
    bad_path.write_text("{}")
    with pytest.raises(GuardrailConfigError):
        load_guardrail_spec(str(bad_path))


def test_safe_verdict_cannot_carry_categories():
    from pog.guardrails import GuardrailVerdict

    with pytest.raises(ValueError):
        GuardrailVerdict(
            target=Target.INPUT, safe=True, categories=("x",), rationale="", guardrail_id="g"
        )
