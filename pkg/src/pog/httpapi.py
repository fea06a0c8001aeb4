"""HTTP surface of the proxy and its JSON config file.

Config file shape::

    {
      "listen": {"host": "127.0.0.1", "port": 8080},
      "guardrails": ["rules.json", ...],
      "upstream": {"kind": "stub", "transcript_path": "transcript.json"}
                  | {"kind": "gateway", "base_url": ..., "model_name": ...,
                     "api_key_env_var": ...},
      "refusal_template": "...",
      "image_path": "reference.pgeif",
      "agent_secret_path": "secret.json",        # optional
      "transcript_dir": "transcripts"            # optional
    }

POST /v1/chat returns a ChatTurn view for ordinary messages; the
``%attest%`` command returns the attestation envelope itself. POST
/v1/attest attests the session's latest turn. API keys reach the process
only through the environment variables the descriptors name.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .enclave import AgentSecret, PlatformAuthority, boot_enclave
from .guardrails import DEFAULT_REFUSAL_TEMPLATE, load_guardrail_spec
from .image import parse_image
from .proxy import AttestationEnvelope, NoTurnError, ProxyService
from .reference import build_reference_image
from .upstream import GatewayUpstream, ScriptedStub

DEFAULT_SECRET = AgentSecret(
    system_prompt="You are a careful, honest assistant.",
    persona_config={"tone": "plain"},
)


@dataclass
class ProxyConfig:
    listen_host: str = "127.0.0.1"
    listen_port: int = 8080
    guardrail_paths: list[str] = field(default_factory=list)
    upstream: dict = field(default_factory=lambda: {"kind": "stub"})
    refusal_template: str = DEFAULT_REFUSAL_TEMPLATE
    image_path: str | None = None
    agent_secret_path: str | None = None
    transcript_dir: str | None = None

    @classmethod
    def from_file(cls, path: str | Path) -> ProxyConfig:
        base = Path(path).parent
        with open(path, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
        listen = raw.get("listen", {})

        def resolve(candidate: str | None) -> str | None:
            if candidate is None:
                return None
            resolved = Path(candidate)
            return str(resolved if resolved.is_absolute() else base / resolved)

        upstream = dict(raw.get("upstream", {"kind": "stub"}))
        if "transcript_path" in upstream:
            upstream["transcript_path"] = resolve(upstream["transcript_path"])
        return cls(
            listen_host=listen.get("host", "127.0.0.1"),
            listen_port=int(listen.get("port", 8080)),
            guardrail_paths=[resolve(p) for p in raw.get("guardrails", [])],
            upstream=upstream,
            refusal_template=raw.get("refusal_template", DEFAULT_REFUSAL_TEMPLATE),
            image_path=resolve(raw.get("image_path")),
            agent_secret_path=resolve(raw.get("agent_secret_path")),
            transcript_dir=resolve(raw.get("transcript_dir")),
        )


def _load_secret(path: str | None) -> AgentSecret:
    if path is None:
        return DEFAULT_SECRET
    with open(path, "r", encoding="utf-8") as handle:
        raw = json.load(handle)
    return AgentSecret(
        system_prompt=raw.get("system_prompt", ""),
        persona_config=dict(raw.get("persona_config", {})),
        declared_tools=list(raw.get("declared_tools", [])),
    )


def _build_upstream(descriptor: dict):
    kind = descriptor.get("kind", "stub")
    if kind == "stub":
        path = descriptor.get("transcript_path")
        return ScriptedStub.from_file(path) if path else ScriptedStub()
    if kind == "gateway":
        return GatewayUpstream(
            base_url=descriptor["base_url"],
            model_name=descriptor.get("model_name", ""),
            api_key_env_var=descriptor.get("api_key_env_var", ""),
            timeout_s=float(descriptor.get("timeout_s", 60.0)),
        )
    raise ValueError(f"unknown upstream kind {kind!r}")


def build_service(
    config: ProxyConfig, platform: PlatformAuthority | None = None
) -> ProxyService:
    """Boot an enclave from the configured image and wire the proxy."""
    platform = platform or PlatformAuthority()
    if config.image_path:
        with open(config.image_path, "rb") as handle:
            image = parse_image(handle.read())
    else:
        image = build_reference_image()
    enclave = boot_enclave(image, platform)
    enclave.inject_secret(_load_secret(config.agent_secret_path))
    if config.guardrail_paths:
        specs = [load_guardrail_spec(path) for path in config.guardrail_paths]
    else:
        from .reference import reference_guardrail_spec

        specs = [reference_guardrail_spec()]
    return ProxyService(
        enclave=enclave,
        guardrail_specs=specs,
        upstream=_build_upstream(config.upstream),
        refusal_template=config.refusal_template,
        transcript_dir=config.transcript_dir,
    )


class ChatRequest(BaseModel):
    session_id: str
    message: str


class AttestRequest(BaseModel):
    session_id: str
    bind_input: bool = True


def create_app(service: ProxyService) -> FastAPI:
    app = FastAPI(title="pog-proxy", docs_url=None, redoc_url=None)

    @app.post("/v1/chat")
    def chat(request: ChatRequest) -> dict:
        try:
            result = service.handle_message(request.session_id, request.message)
        except NoTurnError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        if isinstance(result, AttestationEnvelope):
            return result.to_json_dict()
        return result.to_view()

    @app.post("/v1/attest")
    def attest(request: AttestRequest) -> dict:
        try:
            envelope = service.handle_attest_request(
                request.session_id, bind_input=request.bind_input
            )
        except NoTurnError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        return envelope.to_json_dict()

    @app.get("/v1/health")
    def health() -> dict:
        return {
            "status": "ok",
            "module_id": service.enclave.module_id,
            "measurements": service.enclave.measurements.to_json_dict(),
        }

    return app


def serve(config_path: str) -> None:
    import uvicorn

    config = ProxyConfig.from_file(config_path)
    service = build_service(config)
    app = create_app(service)
    uvicorn.run(app, host=config.listen_host, port=config.listen_port)
