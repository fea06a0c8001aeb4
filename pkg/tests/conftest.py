from __future__ import annotations

import socket

import pytest

from pog.enclave import AgentSecret, PlatformAuthority, boot_enclave
from pog.harness import build_baseline
from pog.proxy import ProxyService
from pog.reference import (
    REFERENCE_TRANSCRIPT,
    build_reference_image,
    reference_guardrail_spec,
)
from pog.upstream import ScriptedStub


@pytest.fixture(scope="session")
def platform() -> PlatformAuthority:
    return PlatformAuthority()


@pytest.fixture(scope="session")
def reference_image():
    return build_reference_image()


@pytest.fixture(scope="session")
def baseline():
    """One honest end-to-end run shared by read-only tests."""
    return build_baseline()


@pytest.fixture
def enclave(platform, reference_image):
    state = boot_enclave(reference_image, platform)
    state.inject_secret(AgentSecret(system_prompt="You are a careful assistant."))
    return state


@pytest.fixture
def proxy(enclave) -> ProxyService:
    return ProxyService(
        enclave=enclave,
        guardrail_specs=[reference_guardrail_spec()],
        upstream=ScriptedStub(turns=REFERENCE_TRANSCRIPT["turns"]),
    )


@pytest.fixture
def no_network(monkeypatch):
    """Any attempt to open a socket fails the test."""

    def guard(*args, **kwargs):
        raise AssertionError("network access attempted during an offline operation")

    monkeypatch.setattr(socket, "socket", guard)
    monkeypatch.setattr(socket, "create_connection", guard)
    monkeypatch.setattr(socket, "getaddrinfo", guard)
