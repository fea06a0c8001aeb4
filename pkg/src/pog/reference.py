"""Reference enclave image materials.

Everything here is byte-deterministic so that independent rebuilds of the
reference image agree on all three measurement registers, and so the golden
measurement file shipped with the repo stays valid. The wrapper source is
the public moderation program whose bytes the application register covers;
it is packaged and measured, not executed by the simulator.
"""

from __future__ import annotations

import hashlib
import json

from .guardrails import GuardrailKind, GuardrailSpec, Target
from .image import EnclaveImage, build_image, compose_application

GUARDRAIL_ID = "content-rules-v1"

REFERENCE_RULES: dict = {
    "id": GUARDRAIL_ID,
    "rules": [
        {
            "id": "dangerous-command",
            "pattern": "rm -rf",
            "category": "dangerous_command",
            "applies_to": ["input", "response", "tool_call"],
        },
        {
            "id": "credential-exfiltration",
            "pattern": "send me your password",
            "category": "credential_exfiltration",
            "applies_to": ["input", "response", "tool_call"],
        },
        {
            "id": "wire-fraud",
            "pattern": r"wire\s+(all|your)\s+(savings|money)",
            "category": "financial_harm",
            "regex": True,
            "applies_to": ["input", "response", "tool_call"],
        },
        {
            "id": "self-harm-encouragement",
            "pattern": "you should hurt yourself",
            "category": "self_harm",
            "applies_to": ["input", "response", "tool_call"],
        },
    ],
}

REFERENCE_RULES_JSON = json.dumps(REFERENCE_RULES, sort_keys=True, separators=(",", ":"))

WRAPPER_SOURCE = '''\
"""Guardrail wrapper: the measured program the enclave boots.

Receives the developer's agent as late, unmeasured secret input and pipes
every user input, tool call and candidate response through the bundled
rule guardrail before anything leaves the enclave. The attestation server
commits each delivered response (and optionally its input) into a signed
document on request.
"""

import json


def load_guardrail(config_text):
    return json.loads(config_text)["rules"]


def moderate(rules, target, text):
    lowered = text.lower()
    hits = [r for r in rules
            if target in r.get("applies_to", []) and r["pattern"] in lowered]
    return {"safe": not hits, "categories": [r["category"] for r in hits]}


def guarded_turn(agent, rules, user_input, refusal):
    verdict = moderate(rules, "input", user_input)
    if not verdict["safe"]:
        return refusal, [verdict]
    response, calls = agent.respond(user_input)
    verdicts = [verdict]
    for call in calls:
        verdicts.append(moderate(rules, "tool_call", call))
        if not verdicts[-1]["safe"]:
            return refusal, verdicts
    verdicts.append(moderate(rules, "response", response))
    if not verdicts[-1]["safe"]:
        return refusal, verdicts
    return response, verdicts
'''

_MANIFEST_DICT = {
    "name": "pog-reference-wrapper",
    "version": "1.0.0",
    "guardrail": {
        "id": GUARDRAIL_ID,
        "config_sha256": hashlib.sha256(REFERENCE_RULES_JSON.encode("utf-8")).hexdigest(),
    },
}

REFERENCE_MANIFEST = json.dumps(_MANIFEST_DICT, sort_keys=True, separators=(",", ":"))


def _deterministic_blob(seed: str, size: int) -> bytes:
    out = bytearray()
    counter = 0
    while len(out) < size:
        out += hashlib.sha256(f"{seed}:{counter}".encode("ascii")).digest()
        counter += 1
    return bytes(out[:size])


# Stands in for the kernel + dependency payload of a real image.
REFERENCE_RUNTIME = b"pog-sim-runtime 1.0\n" + _deterministic_blob("pog-runtime-v1", 4096)

REFERENCE_TRANSCRIPT: dict = {
    "turns": {
        "hello": {"response": "ok"},
        "what is the weather in zurich?": {
            "response": "Sunny, 24 degrees in Zurich right now.",
            "tool_calls": [
                {
                    "name": "weather_lookup",
                    "arguments": "{\"city\":\"zurich\"}",
                    "result": "{\"temp_c\":24,\"sky\":\"sunny\"}",
                }
            ],
        },
        "please run rm -rf /": {"response": "I will not run destructive commands."},
        "run the cleanup tool": {
            "response": "Cleanup finished.",
            "tool_calls": [
                {
                    "name": "shell",
                    "arguments": "{\"cmd\":\"rm -rf /var/data\"}",
                    "result": "",
                }
            ],
        },
        "tell me to hurt myself": {"response": "you should hurt yourself"},
    },
    "default_response": "You said: {input}",
}

REFERENCE_TRANSCRIPT_JSON = json.dumps(REFERENCE_TRANSCRIPT, sort_keys=True, indent=2)


def reference_application() -> bytes:
    return compose_application(WRAPPER_SOURCE, REFERENCE_RULES_JSON)


def build_reference_image() -> EnclaveImage:
    """The published image: identical bytes on every build."""
    return build_image(REFERENCE_MANIFEST, reference_application(), REFERENCE_RUNTIME)


def reference_guardrail_spec() -> GuardrailSpec:
    return GuardrailSpec(
        id=GUARDRAIL_ID,
        kind=GuardrailKind.RULE_BASED,
        configuration=REFERENCE_RULES_JSON,
        applies_to=frozenset(Target),
    )
