"""Pluggable guardrails applied to inputs, responses and tool calls.

Two kinds are built in: a deterministic rule engine (literal or regex
patterns over NFC-normalized, lowercased text) and a client for external
model-backed guardrails speaking the chat-completions shape. Moderation is
fail-closed: a guardrail that cannot produce a verdict blocks the turn.
"""

from __future__ import annotations

import json
import os
import re
import time
import unicodedata
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import httpx

DEFAULT_REFUSAL_TEMPLATE = (
    "I can't help with that. The response was withheld by the configured guardrail."
)
DEFAULT_GATEWAY_TIMEOUT_S = 30.0
UNAVAILABLE_CATEGORY = "guardrail_unavailable"


class Target(Enum):
    INPUT = "input"
    RESPONSE = "response"
    TOOL_CALL = "tool_call"


ALL_TARGETS = frozenset(Target)


class GuardrailKind(Enum):
    RULE_BASED = "rule_based"
    EXTERNAL_MODEL = "external_model"


class GuardrailConfigError(ValueError):
    """Guardrail configuration text is malformed."""


class GuardrailUnavailableError(RuntimeError):
    """The guardrail could not produce a verdict (gateway down, timeout)."""


@dataclass(frozen=True)
class GuardrailSpec:
    """One configured guardrail and the targets it applies to.

    ``configuration`` is the JSON text of either a rule file or a gateway
    descriptor; its hash is embedded in the enclave image's application
    section so the configuration is covered by the measurement.
    """

    id: str
    kind: GuardrailKind
    configuration: str
    applies_to: frozenset[Target] = ALL_TARGETS


@dataclass(frozen=True)
class GuardrailVerdict:
    target: Target
    safe: bool
    categories: tuple[str, ...]
    rationale: str
    guardrail_id: str
    elapsed_ms: float = 0.0

    def __post_init__(self) -> None:
        if self.safe and self.categories:
            raise ValueError("a safe verdict cannot carry violation categories")
        if self.elapsed_ms < 0:
            raise ValueError("elapsed_ms must be non-negative")

    def to_json_dict(self) -> dict:
        return {
            "target": self.target.value,
            "safe": self.safe,
            "categories": list(self.categories),
            "rationale": self.rationale,
            "guardrail_id": self.guardrail_id,
            "elapsed_ms": self.elapsed_ms,
        }


@dataclass
class ModerationOutcome:
    original_response: str
    final_response: str
    blocked: bool
    verdicts: list[GuardrailVerdict]

    def to_json_dict(self) -> dict:
        return {
            "original_response": self.original_response,
            "final_response": self.final_response,
            "blocked": self.blocked,
            "verdicts": [v.to_json_dict() for v in self.verdicts],
        }


def normalize_text(text: str) -> str:
    """NFC-normalize then lowercase; applied to text before rule matching."""
    return unicodedata.normalize("NFC", text).lower()


@dataclass(frozen=True)
class _Rule:
    id: str
    pattern: str
    category: str
    applies_to: frozenset[Target]
    is_regex: bool
    compiled: re.Pattern | None

    def matches(self, normalized_text: str) -> bool:
        if self.compiled is not None:
            return self.compiled.search(normalized_text) is not None
        return normalize_text(self.pattern) in normalized_text


@lru_cache(maxsize=128)
def _compile_rules(configuration: str) -> tuple[_Rule, ...]:
    try:
        parsed = json.loads(configuration)
    except json.JSONDecodeError as exc:
        raise GuardrailConfigError(f"rule configuration is not JSON: {exc}") from exc
    rules_raw = parsed.get("rules") if isinstance(parsed, dict) else None
    if not isinstance(rules_raw, list):
        raise GuardrailConfigError("rule configuration must carry a 'rules' list")
    rules = []
    for i, raw in enumerate(rules_raw):
        if not isinstance(raw, dict):
            raise GuardrailConfigError(f"rules[{i}] must be an object")
        try:
            pattern = raw["pattern"]
            category = raw["category"]
        except KeyError as exc:
            raise GuardrailConfigError(f"rules[{i}] missing {exc}") from exc
        applies = frozenset(
            Target(t) for t in raw.get("applies_to", [t.value for t in Target])
        )
        is_regex = bool(raw.get("regex", False))
        compiled = None
        if is_regex:
            try:
                compiled = re.compile(pattern)
            except re.error as exc:
                raise GuardrailConfigError(f"rules[{i}] bad regex: {exc}") from exc
        rules.append(
            _Rule(
                id=str(raw.get("id", f"rule-{i}")),
                pattern=pattern,
                category=str(category),
                applies_to=applies,
                is_regex=is_regex,
                compiled=compiled,
            )
        )
    return tuple(rules)


@dataclass(frozen=True)
class GatewayDescriptor:
    """Where and how to reach an external guardrail model.

    Credentials are never stored: ``api_key_env_var`` names an environment
    variable read at request time.
    """

    base_url: str
    model_name: str
    api_key_env_var: str = ""
    prompt_template: str = (
        "Classify the following {target} for safety. Respond with 'safe' or "
        "'unsafe' followed by violated categories, one per line.\n\n{text}"
    )
    timeout_s: float = DEFAULT_GATEWAY_TIMEOUT_S

    @classmethod
    def from_json(cls, configuration: str) -> GatewayDescriptor:
        try:
            parsed = json.loads(configuration)
        except json.JSONDecodeError as exc:
            raise GuardrailConfigError(f"gateway descriptor is not JSON: {exc}") from exc
        if not isinstance(parsed, dict) or "base_url" not in parsed:
            raise GuardrailConfigError("gateway descriptor must carry 'base_url'")
        kwargs = {
            "base_url": parsed["base_url"],
            "model_name": parsed.get("model_name", ""),
        }
        for key in ("api_key_env_var", "prompt_template", "timeout_s"):
            if key in parsed:
                kwargs[key] = parsed[key]
        return cls(**kwargs)


class ExternalModelClient:
    """Chat-completions client for an external guardrail model.

    Supports concurrent in-flight requests; each request carries its own
    timeout. A custom ``transport`` can be injected for tests.
    """

    def __init__(self, descriptor: GatewayDescriptor, transport: httpx.BaseTransport | None = None):
        self.descriptor = descriptor
        self._client = httpx.Client(
            base_url=descriptor.base_url,
            timeout=descriptor.timeout_s,
            transport=transport,
        )

    def close(self) -> None:
        self._client.close()

    def classify(self, target: Target, text: str) -> tuple[bool, tuple[str, ...], str]:
        """Returns (safe, categories, raw model verdict).

        Raises GuardrailUnavailableError on any transport or protocol
        failure — callers treat that as unsafe (fail-closed).
        """
        prompt = self.descriptor.prompt_template.format(target=target.value, text=text)
        headers = {}
        if self.descriptor.api_key_env_var:
            api_key = os.environ.get(self.descriptor.api_key_env_var, "")
            if api_key:
                headers["Authorization"] = f"Bearer {api_key}"
        body = {
            "model": self.descriptor.model_name,
            "messages": [{"role": "user", "content": prompt}],
        }
        try:
            response = self._client.post("/chat/completions", json=body, headers=headers)
            response.raise_for_status()
            content = response.json()["choices"][0]["message"]["content"]
        except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
            raise GuardrailUnavailableError(f"guardrail gateway failure: {exc}") from exc
        return _parse_model_verdict(content)


def _parse_model_verdict(content: str) -> tuple[bool, tuple[str, ...], str]:
    lines = [line.strip() for line in content.strip().splitlines() if line.strip()]
    if not lines:
        raise GuardrailUnavailableError("guardrail gateway returned an empty verdict")
    head = lines[0].lower()
    if head.startswith("safe"):
        return True, (), content.strip()
    if head.startswith("unsafe"):
        categories = []
        for line in lines[1:]:
            categories.extend(c.strip() for c in line.split(",") if c.strip())
        return False, tuple(categories) or ("unspecified",), content.strip()
    raise GuardrailUnavailableError(f"unparseable guardrail verdict: {lines[0]!r}")


def evaluate(
    spec: GuardrailSpec,
    target: Target,
    text: str,
    client: ExternalModelClient | None = None,
) -> GuardrailVerdict:
    """Run one guardrail against one text.

    Rule-based specs are pure functions of (configuration, text). External
    specs delegate to the gateway client and may raise
    GuardrailUnavailableError.
    """
    if target not in spec.applies_to:
        raise ValueError(f"guardrail {spec.id!r} does not apply to {target.value}")
    started = time.perf_counter()
    if spec.kind is GuardrailKind.RULE_BASED:
        rules = _compile_rules(spec.configuration)
        normalized = normalize_text(text)
        hits = [
            rule
            for rule in rules
            if target in rule.applies_to and rule.matches(normalized)
        ]
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        if hits:
            return GuardrailVerdict(
                target=target,
                safe=False,
                categories=tuple(rule.category for rule in hits),
                rationale="; ".join(f"rule {rule.id} matched" for rule in hits),
                guardrail_id=spec.id,
                elapsed_ms=elapsed_ms,
            )
        return GuardrailVerdict(
            target=target,
            safe=True,
            categories=(),
            rationale="no rule matched",
            guardrail_id=spec.id,
            elapsed_ms=elapsed_ms,
        )

    own_client = client is None
    if own_client:
        client = ExternalModelClient(GatewayDescriptor.from_json(spec.configuration))
    try:
        safe, categories, rationale = client.classify(target, text)
    finally:
        if own_client:
            client.close()
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    return GuardrailVerdict(
        target=target,
        safe=safe,
        categories=categories,
        rationale=rationale,
        guardrail_id=spec.id,
        elapsed_ms=elapsed_ms,
    )


def evaluate_stage(
    specs: list[GuardrailSpec],
    target: Target,
    text: str,
    clients: dict[str, ExternalModelClient] | None = None,
) -> list[GuardrailVerdict]:
    """Run every applicable spec (in spec order) against one text.

    Guardrail unavailability becomes a synthetic unsafe verdict rather than
    an exception: no text passes because a guardrail failed to answer.
    """
    verdicts = []
    for spec in specs:
        if target not in spec.applies_to:
            continue
        client = (clients or {}).get(spec.id)
        try:
            verdicts.append(evaluate(spec, target, text, client=client))
        except GuardrailUnavailableError:
            verdicts.append(
                GuardrailVerdict(
                    target=target,
                    safe=False,
                    categories=(UNAVAILABLE_CATEGORY,),
                    rationale="guardrail unavailable",
                    guardrail_id=spec.id,
                )
            )
    return verdicts


def moderate(
    specs: list[GuardrailSpec],
    input_text: str,
    response: str,
    tool_calls: list[str] | None = None,
    refusal_template: str = DEFAULT_REFUSAL_TEMPLATE,
    clients: dict[str, ExternalModelClient] | None = None,
) -> ModerationOutcome:
    """Apply every applicable (spec, target) pair to a completed turn.

    Verdict order: input checks, then tool-call checks (per call), then
    response checks; within each, specs in list order. Any unsafe verdict
    blocks, replacing the response with the refusal template.
    """
    if not specs:
        raise ValueError("at least one guardrail spec is required")
    verdicts: list[GuardrailVerdict] = []
    verdicts.extend(evaluate_stage(specs, Target.INPUT, input_text, clients))
    for call_text in tool_calls or []:
        verdicts.extend(evaluate_stage(specs, Target.TOOL_CALL, call_text, clients))
    verdicts.extend(evaluate_stage(specs, Target.RESPONSE, response, clients))
    blocked = any(not v.safe for v in verdicts)
    return ModerationOutcome(
        original_response=response,
        final_response=refusal_template if blocked else response,
        blocked=blocked,
        verdicts=verdicts,
    )


def load_guardrail_spec(path: str, spec_id: str | None = None) -> GuardrailSpec:
    """Load a spec from a rule file or gateway descriptor file.

    Files carrying a ``rules`` list are rule-based; files carrying
    ``base_url`` are external-model descriptors. Optional top-level ``id``
    and ``applies_to`` override the defaults.
    """
    with open(path, "r", encoding="utf-8") as handle:
        configuration = handle.read()
    try:
        parsed = json.loads(configuration)
    except json.JSONDecodeError as exc:
        raise GuardrailConfigError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(parsed, dict):
        raise GuardrailConfigError(f"{path}: must be a JSON object")
    if "rules" in parsed:
        kind = GuardrailKind.RULE_BASED
        _compile_rules(configuration)  # validate eagerly
    elif "base_url" in parsed:
        kind = GuardrailKind.EXTERNAL_MODEL
        GatewayDescriptor.from_json(configuration)
    else:
        raise GuardrailConfigError(f"{path}: neither a rule file nor a gateway descriptor")
    applies_to = ALL_TARGETS
    if "applies_to" in parsed:
        applies_to = frozenset(Target(t) for t in parsed["applies_to"])
    resolved_id = spec_id or parsed.get("id") or os.path.splitext(os.path.basename(path))[0]
    return GuardrailSpec(
        id=str(resolved_id), kind=kind, configuration=configuration, applies_to=applies_to
    )
