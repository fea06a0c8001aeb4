"""Attack simulations and latency benchmarks.

Three seeded attacks exercise the verifier's detection surface from the
dishonest-prover side: modifying a line of the measured guardrail code
(and booting a fresh enclave from the tampered image), flipping a byte of
a signed document, and altering the response shown to the verifier. Every
mutation is checked to really differ from the original before verification
runs. Latency benchmarks time the pipeline stages against the scripted
stub so guardrail and attestation costs dominate, not external APIs.
"""

from __future__ import annotations

import random
import statistics
import time
from dataclasses import dataclass, field
from enum import Enum

from .chain import TrustAnchor
from .commitment import make_commitment
from .document import serialize_document
from .enclave import AgentSecret, EnclaveState, PlatformAuthority, boot_enclave
from .guardrails import Target, evaluate
from .image import EnclaveImage, build_image, parse_image
from .proxy import ProxyService
from .reference import (
    REFERENCE_TRANSCRIPT,
    build_reference_image,
    reference_guardrail_spec,
)
from .upstream import ScriptedStub
from .verifier import MeasurementSet, Verdict, VerificationExpectation, verify


class AttackKind(Enum):
    GUARDRAIL_CODE_MODIFIED = "guardrail_code_modified"
    ATTESTATION_BYTE_MODIFIED = "attestation_byte_modified"
    RESPONSE_MODIFIED = "response_modified"


DEFAULT_REPETITIONS = {
    AttackKind.GUARDRAIL_CODE_MODIFIED: 10,
    AttackKind.ATTESTATION_BYTE_MODIFIED: 100,
    AttackKind.RESPONSE_MODIFIED: 100,
}

EXPECTED_VERDICTS = {
    AttackKind.GUARDRAIL_CODE_MODIFIED: {Verdict.MEASUREMENT_MISMATCH},
    AttackKind.ATTESTATION_BYTE_MODIFIED: {Verdict.SIGNATURE_INVALID, Verdict.MALFORMED},
    AttackKind.RESPONSE_MODIFIED: {Verdict.COMMITMENT_MISMATCH},
}


@dataclass(frozen=True)
class AttackScenario:
    kind: AttackKind
    repetitions: int = 0  # 0 means the kind's default
    mutation_seed: int = 0

    def resolved_repetitions(self) -> int:
        if self.repetitions > 0:
            return self.repetitions
        return DEFAULT_REPETITIONS[self.kind]


@dataclass
class AttackSummary:
    kind: AttackKind
    detected: int
    total: int
    verdict_histogram: dict[str, int]

    @property
    def all_detected(self) -> bool:
        return self.detected == self.total

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "detected": self.detected,
            "total": self.total,
            "verdict_histogram": dict(self.verdict_histogram),
        }


@dataclass
class HonestBaseline:
    """One honest end-to-end run everything downstream mutates or verifies."""

    platform: PlatformAuthority
    image: EnclaveImage
    enclave: EnclaveState
    proxy: ProxyService
    anchor: TrustAnchor
    measurements: MeasurementSet
    user_input: str
    response: str
    document_bytes: bytes

    def expectation(self, response: str | None = None) -> VerificationExpectation:
        return VerificationExpectation(
            trust_anchor=self.anchor,
            expected_measurements=self.measurements,
            input=self.user_input,
            response=self.response if response is None else response,
        )


DEFAULT_BASELINE_INPUT = "what is the weather in zurich?"


def build_baseline(user_input: str = DEFAULT_BASELINE_INPUT) -> HonestBaseline:
    """Boot the reference image, run one moderated turn, attest it."""
    platform = PlatformAuthority()
    image = build_reference_image()
    enclave = boot_enclave(image, platform)
    enclave.inject_secret(
        AgentSecret(system_prompt="You are a careful assistant.", persona_config={})
    )
    proxy = ProxyService(
        enclave=enclave,
        guardrail_specs=[reference_guardrail_spec()],
        upstream=ScriptedStub(turns=REFERENCE_TRANSCRIPT["turns"]),
    )
    turn = proxy.handle_chat("baseline", user_input)
    if turn.outcome.blocked:
        raise ValueError(f"baseline input {user_input!r} must moderate cleanly")
    envelope = proxy.handle_attest_request("baseline", bind_input=True)
    return HonestBaseline(
        platform=platform,
        image=image,
        enclave=enclave,
        proxy=proxy,
        anchor=platform.trust_anchor(),
        measurements=enclave.measurements,
        user_input=turn.user_input,
        response=turn.response,
        document_bytes=envelope.document_bytes(),
    )


def _mutate_application_line(application: bytes, rng: random.Random) -> bytes:
    """Change exactly one line of the application section text."""
    text = application.decode("utf-8")
    lines = text.split("\n")
    candidates = [i for i, line in enumerate(lines) if line.strip()]
    index = rng.choice(candidates)
    lines[index] = lines[index] + "  # tampered"
    mutated = "\n".join(lines).encode("utf-8")
    if mutated == application:
        raise AssertionError("mutation produced identical application bytes")
    return mutated


def _flip_byte(data: bytes, rng: random.Random) -> bytes:
    position = rng.randrange(len(data))
    xor = rng.randrange(1, 256)
    mutated = bytearray(data)
    mutated[position] ^= xor
    if bytes(mutated) == data:
        raise AssertionError("byte flip produced identical bytes")
    return bytes(mutated)


def _mutate_response(response: str, rng: random.Random) -> str:
    position = rng.randrange(len(response))
    alphabet = "abcdefghijklmnopqrstuvwxyz0123456789"
    replacement = rng.choice([c for c in alphabet if c != response[position]])
    mutated = response[:position] + replacement + response[position + 1 :]
    if mutated == response:
        raise AssertionError("response mutation produced identical text")
    return mutated


def run_attack(
    scenario: AttackScenario, baseline: HonestBaseline | None = None
) -> AttackSummary:
    """Run the scenario's mutations and count detections.

    Detection means the verifier returned one of the verdicts the attack
    is expected to produce (and never PASS). The RNG is seeded from
    ``mutation_seed``, so identical scenarios replay identically.
    """
    baseline = baseline or build_baseline()
    rng = random.Random(scenario.mutation_seed)
    total = scenario.resolved_repetitions()
    expected = EXPECTED_VERDICTS[scenario.kind]
    histogram: dict[str, int] = {}
    detected = 0

    for _ in range(total):
        if scenario.kind is AttackKind.GUARDRAIL_CODE_MODIFIED:
            parsed = parse_image(baseline.image.to_bytes())
            tampered_app = _mutate_application_line(parsed.application, rng)
            tampered_image = build_image(parsed.manifest, tampered_app, parsed.runtime)
            rogue = boot_enclave(tampered_image, baseline.platform)
            commitment = make_commitment(baseline.user_input, baseline.response)
            document = rogue.attest(commitment)
            report = verify(serialize_document(document), baseline.expectation())
        elif scenario.kind is AttackKind.ATTESTATION_BYTE_MODIFIED:
            tampered = _flip_byte(baseline.document_bytes, rng)
            report = verify(tampered, baseline.expectation())
        else:
            tampered_response = _mutate_response(baseline.response, rng)
            report = verify(
                baseline.document_bytes, baseline.expectation(response=tampered_response)
            )
        histogram[report.verdict.value] = histogram.get(report.verdict.value, 0) + 1
        if report.verdict in expected:
            detected += 1

    return AttackSummary(
        kind=scenario.kind, detected=detected, total=total, verdict_histogram=histogram
    )


# -- latency -------------------------------------------------------------------


class LatencyTask(Enum):
    GUARDRAIL_EVAL = "guardrail_eval"
    RESPONSE_GEN = "response_gen"
    ATTESTATION_GEN = "attestation_gen"
    VERIFICATION = "verification"


WARMUP_SAMPLES = 3


@dataclass
class LatencyRecord:
    task: LatencyTask
    samples_ms: list[float] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return statistics.fmean(self.samples_ms)

    @property
    def stddev(self) -> float:
        if len(self.samples_ms) < 2:
            return 0.0
        return statistics.stdev(self.samples_ms)

    def to_json_dict(self) -> dict:
        return {
            "task": self.task.value,
            "n": len(self.samples_ms),
            "mean_ms": self.mean,
            "stddev_ms": self.stddev,
            "samples_ms": list(self.samples_ms),
        }


def run_latency(
    task: LatencyTask, n: int, baseline: HonestBaseline | None = None
) -> LatencyRecord:
    """Wall-clock samples of one pipeline stage; the first
    ``WARMUP_SAMPLES`` runs are discarded."""
    if n < 1:
        raise ValueError("need >=1 sample")
    baseline = baseline or build_baseline()

    spec = reference_guardrail_spec()
    stub = ScriptedStub(turns=REFERENCE_TRANSCRIPT["turns"])
    commitment = make_commitment(baseline.user_input, baseline.response)
    expectation = baseline.expectation()

    def step() -> None:
        if task is LatencyTask.GUARDRAIL_EVAL:
            evaluate(spec, Target.INPUT, baseline.user_input)
        elif task is LatencyTask.RESPONSE_GEN:
            stub.complete("You are a careful assistant.", baseline.user_input)
        elif task is LatencyTask.ATTESTATION_GEN:
            baseline.enclave.attest(commitment)
        else:
            verify(baseline.document_bytes, expectation)

    samples: list[float] = []
    for i in range(WARMUP_SAMPLES + n):
        started = time.perf_counter()
        step()
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        if i >= WARMUP_SAMPLES:
            samples.append(elapsed_ms)
    return LatencyRecord(task=task, samples_ms=samples)


def format_latency_table(records: list[LatencyRecord]) -> str:
    """Human-readable mean ± stddev table, one row per task."""
    header = f"{'Task':<18} {'Mean (ms)':>12} {'Stddev (ms)':>12} {'n':>6}"
    rows = [header, "-" * len(header)]
    for record in records:
        rows.append(
            f"{record.task.value:<18} {record.mean:>12.2f} "
            f"{record.stddev:>12.2f} {len(record.samples_ms):>6}"
        )
    return "\n".join(rows)
