"""Golden-file generation for cross-implementation conformance.

Emits, under one directory:

* the reference image and its measurement report,
* the platform root certificate (PEM),
* encode/sign triples (payload fields, encoded payload bytes, signed
  document) that pin the wire format,
* a 200-document corpus (100 honest, 100 tampered across the three attack
  kinds) with per-document expectations and the verdict this
  implementation produced, for other verifier implementations to match.

Certificates expire, so the corpus manifest records the generation-time
clock (``verify_at_ms``); verifiers must evaluate the corpus at that
instant.

Run: ``python -m pog.golden --out golden``
"""

from __future__ import annotations

import argparse
import base64
import json
import random
import time
from pathlib import Path

from .chain import generate_signing_key
from .commitment import make_commitment
from .digest import MeasurementSet
from .document import AttestationPayload, encode_payload, serialize_document, sign_document
from .enclave import AgentSecret, PlatformAuthority, boot_enclave
from .harness import (
    AttackKind,
    _flip_byte,
    _mutate_application_line,
    _mutate_response,
)
from .image import build_image, parse_image
from .proxy import ProxyService
from .reference import REFERENCE_TRANSCRIPT, build_reference_image, reference_guardrail_spec
from .upstream import ScriptedStub
from .verifier import VerificationExpectation, verify

_WORDS = (
    "summarize", "the", "report", "please", "weather", "plan", "trip", "zurich",
    "tokyo", "explain", "briefly", "compare", "options", "draft", "email",
    "translate", "históry", "变化", "überblick", "café", 'quote"inside', "line\nbreak",
)


def _random_text(rng: random.Random, max_words: int = 6) -> str:
    count = rng.randint(1, max_words)
    return " ".join(rng.choice(_WORDS) for _ in range(count))


def _expectation_dict(
    input_text: str | None,
    response: str,
    bind_input: bool,
    nonce: bytes | None,
) -> dict:
    return {
        "input": input_text if bind_input else None,
        "response": response,
        "bind_input": bind_input,
        "nonce_hex": nonce.hex() if nonce else None,
    }


def generate_golden(out_dir: str | Path, seed: int = 2024) -> dict:
    out = Path(out_dir)
    docs_dir = out / "corpus" / "docs"
    triples_dir = out / "triples"
    docs_dir.mkdir(parents=True, exist_ok=True)
    triples_dir.mkdir(parents=True, exist_ok=True)

    rng = random.Random(seed)
    verify_at_ms = int(time.time() * 1000)

    image = build_reference_image()
    (out / "reference.pgeif").write_bytes(image.to_bytes())

    platform = PlatformAuthority()
    enclave = boot_enclave(image, platform)
    enclave.inject_secret(AgentSecret(system_prompt="You are a careful assistant."))
    measurements = enclave.measurements
    (out / "measurements.json").write_text(
        json.dumps(measurements.to_json_dict(), indent=2) + "\n", encoding="utf-8"
    )
    (out / "root_certificate.pem").write_bytes(platform.root_certificate_pem())
    anchor = platform.trust_anchor()

    proxy = ProxyService(
        enclave=enclave,
        guardrail_specs=[reference_guardrail_spec()],
        upstream=ScriptedStub(turns=REFERENCE_TRANSCRIPT["turns"]),
    )

    def expectation_for(entry: dict) -> VerificationExpectation:
        return VerificationExpectation(
            trust_anchor=anchor,
            expected_measurements=measurements,
            input=entry["input"],
            response=entry["response"],
            nonce=bytes.fromhex(entry["nonce_hex"]) if entry["nonce_hex"] else None,
            clock_ms=verify_at_ms,
        )

    documents: list[dict] = []

    def emit(name: str, kind: str, doc_bytes: bytes, expectation_entry: dict) -> None:
        file_name = f"docs/{name}.cbor"
        (out / "corpus" / file_name).write_bytes(doc_bytes)
        report = verify(doc_bytes, expectation_for(expectation_entry))
        documents.append(
            {
                "name": name,
                "file": file_name,
                "kind": kind,
                "expectation": expectation_entry,
                "primary_verdict": report.verdict.value,
            }
        )

    # -- honest documents -----------------------------------------------------
    honest_payload_bytes: list[bytes] = []
    for i in range(100):
        session = f"golden-{i}"
        user_input = _random_text(rng)
        turn = proxy.handle_chat(session, user_input)
        bind_input = i % 3 != 2
        nonce = rng.randbytes(rng.choice((8, 16, 32, 64))) if i % 5 == 0 else None
        envelope = proxy.handle_attest_request(session, bind_input=bind_input, nonce=nonce)
        doc_bytes = envelope.document_bytes()
        honest_payload_bytes.append(doc_bytes)
        emit(
            f"honest-{i:03d}",
            "honest",
            doc_bytes,
            _expectation_dict(turn.user_input, turn.response, bind_input, nonce),
        )

    # -- tampered: guardrail code modified -------------------------------------
    base_turn_input = "what is the weather in zurich?"
    base_turn = proxy.handle_chat("golden-code", base_turn_input)
    for i in range(34):
        parsed = parse_image(image.to_bytes())
        tampered_app = _mutate_application_line(parsed.application, rng)
        tampered_image = build_image(parsed.manifest, tampered_app, parsed.runtime)
        rogue = boot_enclave(tampered_image, platform)
        commitment = make_commitment(base_turn.user_input, base_turn.response)
        doc_bytes = serialize_document(rogue.attest(commitment))
        emit(
            f"tampered-code-{i:03d}",
            AttackKind.GUARDRAIL_CODE_MODIFIED.value,
            doc_bytes,
            _expectation_dict(base_turn.user_input, base_turn.response, True, None),
        )

    # -- tampered: attestation byte flipped -------------------------------------
    for i in range(33):
        source = documents[rng.randrange(100)]
        original = (out / "corpus" / source["file"]).read_bytes()
        tampered = _flip_byte(original, rng)
        emit(
            f"tampered-byte-{i:03d}",
            AttackKind.ATTESTATION_BYTE_MODIFIED.value,
            tampered,
            dict(source["expectation"]),
        )

    # -- tampered: response modified --------------------------------------------
    for i in range(33):
        source = documents[rng.randrange(100)]
        original = (out / "corpus" / source["file"]).read_bytes()
        entry = dict(source["expectation"])
        entry["response"] = _mutate_response(entry["response"], rng)
        emit(
            f"tampered-response-{i:03d}",
            AttackKind.RESPONSE_MODIFIED.value,
            original,
            entry,
        )

    manifest = {
        "verify_at_ms": verify_at_ms,
        "root_certificate_pem": "../root_certificate.pem",
        "reference_image": "../reference.pgeif",
        "measurements": measurements.to_json_dict(),
        "documents": documents,
    }
    (out / "corpus" / "manifest.json").write_text(
        json.dumps(manifest, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )

    _write_triples(triples_dir, platform, measurements)

    counts = {"honest": 0, "tampered": 0, "pass": 0}
    for entry in documents:
        counts["honest" if entry["kind"] == "honest" else "tampered"] += 1
        if entry["primary_verdict"] == "PASS":
            counts["pass"] += 1
    return {"out": str(out), "documents": len(documents), **counts}


def _write_triples(
    triples_dir: Path, platform: PlatformAuthority, measurements: MeasurementSet
) -> None:
    """Pin (payload fields, encoded bytes, signed document) for a few
    representative payloads, including nonce and public_key variants."""
    signing_key = generate_signing_key()
    chain = platform.issue_enclave_chain(signing_key.public_key(), "golden-module")
    cases = [
        {"name": "plain", "nonce": None, "public_key": None},
        {"name": "nonce", "nonce": bytes(range(16)), "public_key": None},
        {"name": "public-key", "nonce": None, "public_key": b"\x04" + bytes(96)},
        {"name": "nonce-max", "nonce": bytes(64), "public_key": None},
    ]
    for i, case in enumerate(cases):
        commitment = make_commitment("hi", f"ok-{case['name']}")
        payload = AttestationPayload(
            module_id=f"golden-module-{i}",
            timestamp_ms=1_750_000_000_000 + i,
            measurements=measurements,
            user_data=commitment.digest.value,
            nonce=case["nonce"],
            public_key=case["public_key"],
        )
        encoded = encode_payload(payload)
        document = sign_document(payload, signing_key, chain)
        record = {
            "payload": {
                "module_id": payload.module_id,
                "timestamp_ms": payload.timestamp_ms,
                "digest_algorithm": payload.digest_algorithm,
                "pcr0": measurements.pcr0.hex,
                "pcr1": measurements.pcr1.hex,
                "pcr2": measurements.pcr2.hex,
                "user_data_hex": payload.user_data.hex(),
                "nonce_hex": payload.nonce.hex() if payload.nonce else None,
                "public_key_hex": payload.public_key.hex() if payload.public_key else None,
            },
            "encoded_payload_hex": encoded.hex(),
            "document_b64": base64.b64encode(serialize_document(document)).decode("ascii"),
        }
        (triples_dir / f"triple-{case['name']}.json").write_text(
            json.dumps(record, indent=2) + "\n", encoding="utf-8"
        )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="python -m pog.golden", description="generate golden conformance files"
    )
    parser.add_argument("--out", default="golden", help="output directory")
    parser.add_argument("--seed", type=int, default=2024)
    args = parser.parse_args(argv)
    summary = generate_golden(args.out, seed=args.seed)
    print(json.dumps(summary, indent=2))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
