import random
import time

import pytest

from pog.chain import (
    TrustAnchor,
    certificate_to_der,
    generate_signing_key,
    validate_chain,
    verify_raw_signature,
)
from pog.digest import DigestAlgorithm, DigestValue, MeasurementSet
from pog.document import (
    AttestationPayload,
    ConfigurationError,
    DocumentParseError,
    decode_payload,
    encode_payload,
    parse_document,
    serialize_document,
    sign_document,
    signed_structure,
)


def _measurements(rng: random.Random) -> MeasurementSet:
    return MeasurementSet(
        DigestValue(DigestAlgorithm.SHA384, rng.randbytes(48)),
        DigestValue(DigestAlgorithm.SHA384, rng.randbytes(48)),
        DigestValue(DigestAlgorithm.SHA384, rng.randbytes(48)),
    )


def _payload(rng: random.Random, **overrides) -> AttestationPayload:
    fields = dict(
        module_id=f"sim-{rng.randrange(16**8):08x}",
        timestamp_ms=rng.randrange(2**45),
        measurements=_measurements(rng),
        user_data=rng.randbytes(32),
        nonce=rng.choice([None, rng.randbytes(rng.randrange(1, 65))]),
        public_key=rng.choice([None, rng.randbytes(97)]),
    )
    fields.update(overrides)
    return AttestationPayload(**fields)


def test_encode_is_deterministic():
    payload = _payload(random.Random(1))
    assert encode_payload(payload) == encode_payload(payload)


def test_encode_round_trip_random_payloads():
    rng = random.Random(2)
    for _ in range(100):
        payload = _payload(rng)
        assert decode_payload(encode_payload(payload)) == payload


def test_timestamp_changes_encoding():
    payload = _payload(random.Random(3), timestamp_ms=1000)
    other = _payload(random.Random(3), timestamp_ms=1001)
    assert encode_payload(payload) != encode_payload(other)


def test_payload_invariants():
    rng = random.Random(4)
    with pytest.raises(ValueError):
        _payload(rng, user_data=rng.randbytes(31))
    with pytest.raises(ValueError):
        _payload(rng, nonce=rng.randbytes(65))
    with pytest.raises(ValueError):
        _payload(rng, timestamp_ms=-1)
    with pytest.raises(ValueError):
        _payload(rng, module_id="")


@pytest.fixture(scope="module")
def signed(platform_chain):
    key, chain = platform_chain
    payload = _payload(random.Random(5))
    document = sign_document(payload, key, chain)
    return payload, document, key, chain


@pytest.fixture(scope="module")
def platform_chain():
    from pog.enclave import PlatformAuthority

    platform = PlatformAuthority()
    key = generate_signing_key()
    chain = platform.issue_enclave_chain(key.public_key(), "doc-test-module")
    return key, chain


def test_sign_then_verify(signed):
    payload, document, _, chain = signed
    data = signed_structure(encode_payload(payload))
    leaf_key = chain[0].public_key()
    assert verify_raw_signature(leaf_key, data, document.signature)


def test_any_single_byte_mutation_is_rejected(signed):
    """100 random byte positions of the serialized document; every flip
    breaks structural parsing or chain/signature validation."""
    _, document, _, chain = signed
    anchor = TrustAnchor(root_certificate=certificate_to_der(chain[-1]))
    now_ms = int(time.time() * 1000)
    raw = serialize_document(document)
    rng = random.Random(6)
    for _ in range(100):
        position = rng.randrange(len(raw))
        mutated = bytearray(raw)
        mutated[position] ^= rng.randrange(1, 256)
        try:
            reparsed = parse_document(bytes(mutated))
        except DocumentParseError:
            continue  # structural rejection counts
        result = validate_chain(
            reparsed.certificate,
            list(reparsed.ca_bundle),
            signed_structure(reparsed.payload_bytes()),
            reparsed.signature,
            anchor,
            now_ms,
        )
        assert not result.ok


def test_wrong_key_rejected(signed, platform_chain):
    payload, document, _, _ = signed
    other_key = generate_signing_key()
    data = signed_structure(encode_payload(payload))
    assert not verify_raw_signature(other_key.public_key(), data, document.signature)


def test_sign_verify_round_trip_100_random_payloads(platform_chain):
    key, chain = platform_chain
    rng = random.Random(7)
    leaf_key = chain[0].public_key()
    for _ in range(100):
        payload = _payload(rng)
        document = sign_document(payload, key, chain)
        data = signed_structure(encode_payload(payload))
        assert verify_raw_signature(leaf_key, data, document.signature)


def test_key_certificate_mismatch_is_configuration_error(platform_chain):
    _, chain = platform_chain
    stranger = generate_signing_key()
    with pytest.raises(ConfigurationError):
        sign_document(_payload(random.Random(8)), stranger, chain)


def test_parse_serialize_identity(signed):
    _, document, _, _ = signed
    assert parse_document(serialize_document(document)) == document


def test_parse_truncated_fails_with_offset(signed):
    _, document, _, _ = signed
    raw = serialize_document(document)
    with pytest.raises(DocumentParseError) as excinfo:
        parse_document(raw[: len(raw) // 2])
    assert excinfo.value.offset >= 0


def test_parse_rejects_short_pcr():
    """A 47-byte pcr2 is reported as a digest-length error."""
    rng = random.Random(9)
    payload = _payload(rng, nonce=None, public_key=None)
    good = encode_payload(payload)
    # Rebuild the payload map with a truncated pcr2 by hand.
    from pog import cborcodec

    wire = {
        "module_id": payload.module_id,
        "digest": "SHA384",
        "timestamp": payload.timestamp_ms,
        "pcrs": {
            0: payload.measurements.pcr0.value,
            1: payload.measurements.pcr1.value,
            2: payload.measurements.pcr2.value[:47],
        },
        "user_data": payload.user_data,
        "nonce": None,
        "public_key": None,
    }
    bad = cborcodec.encode(wire)
    assert bad != good
    with pytest.raises(DocumentParseError) as excinfo:
        decode_payload(bad)
    assert "bad digest length" in str(excinfo.value)


def test_parse_rejects_wrong_key_order():
    from pog import cborcodec

    rng = random.Random(10)
    payload = _payload(rng, nonce=None, public_key=None)
    wire = {
        "digest": "SHA384",  # module_id must come first
        "module_id": payload.module_id,
        "timestamp": payload.timestamp_ms,
        "pcrs": {
            0: payload.measurements.pcr0.value,
            1: payload.measurements.pcr1.value,
            2: payload.measurements.pcr2.value,
        },
        "user_data": payload.user_data,
        "nonce": None,
        "public_key": None,
    }
    with pytest.raises(DocumentParseError):
        decode_payload(cborcodec.encode(wire))


def test_chain_must_end_in_self_signed_root(platform_chain):
    key, chain = platform_chain
    with pytest.raises(ConfigurationError):
        sign_document(_payload(random.Random(11)), key, chain[:2])
