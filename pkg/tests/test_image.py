import hashlib

import pytest

from pog.image import (
    ImageFormatError,
    build_image,
    compose_application,
    measure_image,
    parse_image,
)

from reference_vectors import (
    TINY_APPLICATION,
    TINY_IMAGE_HEX,
    TINY_MANIFEST,
    TINY_PCR0,
    TINY_PCR1,
    TINY_PCR2,
    TINY_RUNTIME,
    TINY_VARIANT_PCR0,
    TINY_VARIANT_PCR1,
    TINY_VARIANT_RUNTIME,
)


def tiny_image():
    return build_image(TINY_MANIFEST, TINY_APPLICATION, TINY_RUNTIME)


def test_bundle_bytes_match_reference():
    assert tiny_image().to_bytes().hex() == TINY_IMAGE_HEX


def test_measurements_match_reference():
    report = measure_image(tiny_image()).to_json_dict()
    assert report == {"pcr0": TINY_PCR0, "pcr1": TINY_PCR1, "pcr2": TINY_PCR2}


def test_runtime_change_moves_pcr1_not_pcr2():
    variant = build_image(TINY_MANIFEST, TINY_APPLICATION, TINY_VARIANT_RUNTIME)
    report = measure_image(variant).to_json_dict()
    assert report["pcr0"] == TINY_VARIANT_PCR0
    assert report["pcr1"] == TINY_VARIANT_PCR1
    assert report["pcr2"] == TINY_PCR2


def test_application_change_moves_pcr2_and_pcr0_not_pcr1():
    base = measure_image(tiny_image()).to_json_dict()
    variant = build_image(TINY_MANIFEST, b"APQ", TINY_RUNTIME)
    report = measure_image(variant).to_json_dict()
    assert report["pcr0"] != base["pcr0"]
    assert report["pcr2"] != base["pcr2"]
    assert report["pcr1"] == base["pcr1"]


def test_manifest_change_moves_pcr0_and_pcr1():
    base = measure_image(tiny_image()).to_json_dict()
    variant = build_image(
        '{"name":"u","version":"1","guardrail":{"id":"g"}}', TINY_APPLICATION, TINY_RUNTIME
    )
    report = measure_image(variant).to_json_dict()
    assert report["pcr0"] != base["pcr0"]
    assert report["pcr1"] != base["pcr1"]
    assert report["pcr2"] == base["pcr2"]


def test_build_is_deterministic():
    assert tiny_image().to_bytes() == tiny_image().to_bytes()


def test_one_char_manifest_difference_changes_bytes():
    other = build_image(
        '{"name":"x","version":"1","guardrail":{"id":"g"}}', TINY_APPLICATION, TINY_RUNTIME
    )
    assert other.to_bytes() != tiny_image().to_bytes()


def test_empty_sections_are_valid():
    image = build_image(TINY_MANIFEST, b"", b"")
    parsed = parse_image(image.to_bytes())
    assert parsed.application == b"" and parsed.runtime == b""


def test_parse_round_trip():
    image = tiny_image()
    assert parse_image(image.to_bytes()) == image


def test_parse_rejects_bad_magic():
    with pytest.raises(ImageFormatError):
        parse_image(b"NOTPGE" + tiny_image().to_bytes()[6:])


def test_parse_rejects_truncation():
    raw = tiny_image().to_bytes()
    with pytest.raises(ImageFormatError):
        parse_image(raw[:-1])


def test_parse_rejects_trailing_bytes():
    with pytest.raises(ImageFormatError):
        parse_image(tiny_image().to_bytes() + b"\x00")


def test_invalid_manifest_rejected():
    with pytest.raises(ImageFormatError):
        build_image("not json", b"", b"")
    with pytest.raises(ImageFormatError):
        build_image('{"name":"t"}', b"", b"")  # no guardrail named
    with pytest.raises(ImageFormatError):
        build_image('{"guardrail":{"id":1}}', b"", b"")  # id not a string
    with pytest.raises(ImageFormatError):
        build_image('["guardrail"]', b"", b"")


def test_measure_accepts_raw_bytes():
    image = tiny_image()
    assert measure_image(image.to_bytes()) == measure_image(image)


def test_measure_rejects_malformed_bytes():
    with pytest.raises(ImageFormatError):
        measure_image(b"garbage")


def test_compose_application_embeds_config_hash():
    config = '{"rules":[]}'
    application = compose_application("wrapper code", config)
    expected_hash = hashlib.sha256(config.encode()).hexdigest()
    assert expected_hash.encode("ascii") in application
    assert config.encode("utf-8") in application
    assert b"wrapper code" in application


def test_compose_application_changes_with_config():
    a = compose_application("w", '{"rules":[]}')
    b = compose_application("w", '{"rules":[{"id":"x"}]}')
    assert a != b
