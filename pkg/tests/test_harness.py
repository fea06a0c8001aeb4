import pytest

from pog.harness import (
    AttackKind,
    AttackScenario,
    LatencyTask,
    format_latency_table,
    run_attack,
    run_latency,
)
from pog.verifier import Verdict


def test_code_modification_detected(baseline):
    summary = run_attack(
        AttackScenario(AttackKind.GUARDRAIL_CODE_MODIFIED, repetitions=3, mutation_seed=1),
        baseline=baseline,
    )
    assert summary.detected == summary.total == 3
    assert summary.verdict_histogram == {Verdict.MEASUREMENT_MISMATCH.value: 3}


def test_byte_flip_detected(baseline):
    summary = run_attack(
        AttackScenario(AttackKind.ATTESTATION_BYTE_MODIFIED, repetitions=20, mutation_seed=2),
        baseline=baseline,
    )
    assert summary.detected == summary.total == 20
    assert set(summary.verdict_histogram) <= {
        Verdict.SIGNATURE_INVALID.value,
        Verdict.MALFORMED.value,
    }


def test_response_tamper_detected(baseline):
    summary = run_attack(
        AttackScenario(AttackKind.RESPONSE_MODIFIED, repetitions=20, mutation_seed=3),
        baseline=baseline,
    )
    assert summary.detected == summary.total == 20
    assert summary.verdict_histogram == {Verdict.COMMITMENT_MISMATCH.value: 20}


def test_default_repetitions_follow_kind():
    assert AttackScenario(AttackKind.GUARDRAIL_CODE_MODIFIED).resolved_repetitions() == 10
    assert AttackScenario(AttackKind.ATTESTATION_BYTE_MODIFIED).resolved_repetitions() == 100
    assert AttackScenario(AttackKind.RESPONSE_MODIFIED).resolved_repetitions() == 100


def test_seeded_runs_are_reproducible(baseline):
    scenario = AttackScenario(
        AttackKind.ATTESTATION_BYTE_MODIFIED, repetitions=15, mutation_seed=42
    )
    first = run_attack(scenario, baseline=baseline)
    second = run_attack(scenario, baseline=baseline)
    assert first.verdict_histogram == second.verdict_histogram
    assert first.detected == second.detected


def test_latency_record_shape(baseline):
    record = run_latency(LatencyTask.VERIFICATION, 5, baseline=baseline)
    assert len(record.samples_ms) == 5
    assert record.mean >= 0
    assert record.stddev >= 0
    table = format_latency_table([record])
    assert "verification" in table


def test_latency_requires_samples(baseline):
    with pytest.raises(ValueError):
        run_latency(LatencyTask.ATTESTATION_GEN, 0, baseline=baseline)


def test_latency_stats_recomputed_from_samples():
    from pog.harness import LatencyRecord

    record = LatencyRecord(task=LatencyTask.GUARDRAIL_EVAL, samples_ms=[1.0, 3.0])
    assert record.mean == 2.0
    assert record.stddev == pytest.approx(1.4142, rel=1e-3)
    record.samples_ms.append(2.0)
    assert record.mean == 2.0  # derived, not stored


def test_all_latency_tasks_run(baseline):
    for task in LatencyTask:
        record = run_latency(task, 2, baseline=baseline)
        assert len(record.samples_ms) == 2
