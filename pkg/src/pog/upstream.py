"""Upstream model backends for the proxy.

The scripted stub is the deterministic backend the tests and benchmarks
run against: it maps exact user inputs to canned replies (optionally with
tool calls) and falls back to a templated echo. The gateway backend speaks
the chat-completions shape for live demos. Neither streams; the proxy only
ever sees complete responses.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import httpx


class UpstreamError(RuntimeError):
    """The upstream model failed to produce a response."""


@dataclass(frozen=True)
class ToolCall:
    name: str
    arguments: str  # JSON text
    result: str = ""

    def render(self) -> str:
        """Single text view of the call for guardrail evaluation."""
        parts = [self.name, self.arguments]
        if self.result:
            parts.append(self.result)
        return "\n".join(parts)

    def to_json_dict(self) -> dict:
        return {"name": self.name, "arguments": self.arguments, "result": self.result}


@dataclass(frozen=True)
class UpstreamReply:
    response: str
    tool_calls: tuple[ToolCall, ...] = ()


DEFAULT_RESPONSE_TEMPLATE = "You said: {input}"


class ScriptedStub:
    """Deterministic upstream keyed by exact user input.

    Transcript shape::

        {
          "turns": {
            "<input>": {
              "response": "...",
              "tool_calls": [{"name": ..., "arguments": ..., "result": ...}]
            }
          },
          "default_response": "You said: {input}"
        }
    """

    def __init__(
        self,
        turns: dict[str, dict] | None = None,
        default_response: str = DEFAULT_RESPONSE_TEMPLATE,
    ):
        self.turns = turns or {}
        self.default_response = default_response

    @classmethod
    def from_file(cls, path: str) -> ScriptedStub:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
        return cls(
            turns=data.get("turns", {}),
            default_response=data.get("default_response", DEFAULT_RESPONSE_TEMPLATE),
        )

    def complete(self, system_prompt: str, user_input: str) -> UpstreamReply:
        scripted = self.turns.get(user_input)
        if scripted is None:
            return UpstreamReply(response=self.default_response.format(input=user_input))
        calls = tuple(
            ToolCall(
                name=raw.get("name", "tool"),
                arguments=raw.get("arguments", "{}"),
                result=raw.get("result", ""),
            )
            for raw in scripted.get("tool_calls", [])
        )
        return UpstreamReply(response=scripted.get("response", ""), tool_calls=calls)


class GatewayUpstream:
    """Chat-completions upstream for live deployments."""

    def __init__(
        self,
        base_url: str,
        model_name: str,
        api_key_env_var: str = "",
        timeout_s: float = 60.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.model_name = model_name
        self.api_key_env_var = api_key_env_var
        self._client = httpx.Client(base_url=base_url, timeout=timeout_s, transport=transport)

    def close(self) -> None:
        self._client.close()

    def complete(self, system_prompt: str, user_input: str) -> UpstreamReply:
        headers = {}
        if self.api_key_env_var:
            api_key = os.environ.get(self.api_key_env_var, "")
            if api_key:
                headers["Authorization"] = f"Bearer {api_key}"
        body = {
            "model": self.model_name,
            "stream": False,
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": user_input},
            ],
        }
        try:
            response = self._client.post("/chat/completions", json=body, headers=headers)
            response.raise_for_status()
            content = response.json()["choices"][0]["message"]["content"]
        except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
            raise UpstreamError(f"upstream model failure: {exc}") from exc
        return UpstreamReply(response=content)
