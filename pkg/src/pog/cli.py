"""Command-line tools: pog-image, pog-verify, pog-bench, pog-proxy.

pog-verify exit codes are the verdict enum (0 = PASS, 1 = SIGNATURE_INVALID,
2 = UNTRUSTED_ROOT, 3 = CERT_EXPIRED, 4 = MEASUREMENT_MISMATCH,
5 = COMMITMENT_MISMATCH, 6 = NONCE_MISMATCH, 7 = MALFORMED); usage errors
exit 64 so they can never be mistaken for a verdict.
"""

from __future__ import annotations

import argparse
import base64
import json
import sys

from .chain import TrustAnchor
from .digest import MeasurementSet
from .harness import (
    AttackKind,
    AttackScenario,
    LatencyTask,
    format_latency_table,
    run_attack,
    run_latency,
)
from .image import FILE_EXTENSION, build_image, measure_image, parse_image
from .proxy import AttestationEnvelope
from .reference import build_reference_image
from .verifier import VerificationExpectation, verify

EX_USAGE = 64


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors exiting 64 instead of 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


# -- pog-image -------------------------------------------------------------


def image_main(argv: list[str] | None = None) -> int:
    parser = _Parser(prog="pog-image", description="build and measure enclave images")
    sub = parser.add_subparsers(dest="command", required=True)

    build = sub.add_parser("build", help="bundle sections into a .pgeif image")
    build.add_argument("--manifest", help="manifest JSON file")
    build.add_argument("--application", help="application section file")
    build.add_argument("--runtime", help="runtime section file")
    build.add_argument("--reference", action="store_true",
                       help="build the built-in reference image")
    build.add_argument("--out", required=True, help="output image path")

    measure = sub.add_parser("measure", help="measurement report of an image")
    measure.add_argument("--image", required=True, help=f"{FILE_EXTENSION} file")

    args = parser.parse_args(argv)
    if args.command == "build":
        if args.reference:
            if args.manifest or args.application or args.runtime:
                parser.error("--reference excludes --manifest/--application/--runtime")
            image = build_reference_image()
        else:
            if not (args.manifest and args.application is not None and args.runtime is not None):
                parser.error("build needs --manifest, --application and --runtime (or --reference)")
            with open(args.manifest, "r", encoding="utf-8") as handle:
                manifest = handle.read()
            with open(args.application, "rb") as handle:
                application = handle.read()
            with open(args.runtime, "rb") as handle:
                runtime = handle.read()
            image = build_image(manifest, application, runtime)
        with open(args.out, "wb") as handle:
            handle.write(image.to_bytes())
        print(json.dumps(measure_image(image).to_json_dict(), indent=2))
        return 0

    with open(args.image, "rb") as handle:
        data = handle.read()
    print(json.dumps(measure_image(parse_image(data)).to_json_dict(), indent=2))
    return 0


# -- pog-verify -------------------------------------------------------------


def _read_document_bytes(doc_arg: str) -> bytes:
    if doc_arg == "base64:-":
        return base64.b64decode(sys.stdin.read().strip())
    with open(doc_arg, "rb") as handle:
        return handle.read()


def _read_text_file(path: str) -> str:
    with open(path, "r", encoding="utf-8") as handle:
        return handle.read()


def verify_main(argv: list[str] | None = None) -> int:
    parser = _Parser(prog="pog-verify", description="offline attestation verification")
    parser.add_argument("--doc", help="document file, or 'base64:-' for base64 on stdin")
    parser.add_argument("--envelope", help="attestation envelope JSON file")
    parser.add_argument("--root", required=True, help="trust anchor root certificate (PEM)")
    parser.add_argument("--image", help=f"expected enclave image ({FILE_EXTENSION})")
    parser.add_argument("--pcr0", help="expected pcr0 (96 hex chars)")
    parser.add_argument("--pcr1", help="expected pcr1 (96 hex chars)")
    parser.add_argument("--pcr2", help="expected pcr2 (96 hex chars)")
    parser.add_argument("--response", help="file with the exact delivered response")
    parser.add_argument("--input", dest="input_file", help="file with the exact user input")
    parser.add_argument("--no-input-binding", action="store_true",
                        help="check a response-only commitment")
    parser.add_argument("--nonce", help="expected nonce (hex)")
    parser.add_argument("--at", type=int, help="verification clock (epoch ms)")
    args = parser.parse_args(argv)

    if bool(args.doc) == bool(args.envelope):
        parser.error("exactly one of --doc / --envelope is required")
    pcr_args = (args.pcr0, args.pcr1, args.pcr2)
    if args.image and any(pcr_args):
        parser.error("--image and --pcr0/--pcr1/--pcr2 are mutually exclusive")
    if not args.image:
        if not all(pcr_args):
            parser.error("supply --image or all of --pcr0 --pcr1 --pcr2")

    input_text: str | None = None
    response: str | None = None
    if args.envelope:
        with open(args.envelope, "r", encoding="utf-8") as handle:
            envelope = AttestationEnvelope.from_json_dict(json.load(handle))
        document_bytes = envelope.document_bytes()
        response = envelope.custom_data.get("response")
        input_text = envelope.custom_data.get("input")
    else:
        document_bytes = _read_document_bytes(args.doc)
    if args.response:
        response = _read_text_file(args.response)
    if args.input_file:
        input_text = _read_text_file(args.input_file)
    if args.no_input_binding:
        input_text = None
    if response is None:
        parser.error("--response is required when --envelope is not given")

    with open(args.root, "rb") as handle:
        anchor = TrustAnchor.from_pem(handle.read())

    expected_measurements = None
    image_bytes = None
    if args.image:
        with open(args.image, "rb") as handle:
            image_bytes = handle.read()
    else:
        try:
            expected_measurements = MeasurementSet.from_hex(args.pcr0, args.pcr1, args.pcr2)
        except ValueError as exc:
            parser.error(str(exc))

    nonce = None
    if args.nonce:
        try:
            nonce = bytes.fromhex(args.nonce)
        except ValueError:
            parser.error(f"--nonce is not hex: {args.nonce!r}")

    expectation = VerificationExpectation(
        trust_anchor=anchor,
        response=response,
        input=input_text,
        expected_measurements=expected_measurements,
        image_bytes=image_bytes,
        nonce=nonce,
        clock_ms=args.at,
    )
    report = verify(document_bytes, expectation)
    print(json.dumps(report.to_json_dict(), indent=2))
    return report.verdict.exit_code


# -- pog-bench ---------------------------------------------------------------


def bench_main(argv: list[str] | None = None) -> int:
    parser = _Parser(prog="pog-bench", description="attack simulations and latency benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)

    attack = sub.add_parser("attack", help="run a seeded attack simulation")
    attack.add_argument("--kind", required=True,
                        choices=[k.value for k in AttackKind])
    attack.add_argument("--seed", type=int, default=0)
    attack.add_argument("--reps", type=int, default=0,
                        help="repetitions (default: the kind's standard count)")
    attack.add_argument("--json", action="store_true", dest="as_json")

    latency = sub.add_parser("latency", help="time one pipeline stage")
    latency.add_argument("--task", required=True,
                         choices=[t.value for t in LatencyTask])
    latency.add_argument("-n", type=int, default=100, help="sample count")
    latency.add_argument("--json", action="store_true", dest="as_json")

    args = parser.parse_args(argv)
    if args.command == "attack":
        scenario = AttackScenario(
            kind=AttackKind(args.kind),
            repetitions=args.reps,
            mutation_seed=args.seed,
        )
        summary = run_attack(scenario)
        if args.as_json:
            print(json.dumps(summary.to_json_dict(), indent=2))
        else:
            print(
                f"{summary.kind.value}: detected {summary.detected}/{summary.total}  "
                f"verdicts: {summary.verdict_histogram}"
            )
        return 0 if summary.all_detected else 1

    try:
        record = run_latency(LatencyTask(args.task), args.n)
    except ValueError as exc:
        parser.error(str(exc))
    if args.as_json:
        payload = record.to_json_dict()
        del payload["samples_ms"]
        print(json.dumps(payload, indent=2))
    else:
        print(format_latency_table([record]))
    return 0


# -- pog-proxy ----------------------------------------------------------------


def proxy_main(argv: list[str] | None = None) -> int:
    parser = _Parser(prog="pog-proxy", description="serve the moderation proxy")
    parser.add_argument("--config", required=True, help="proxy config JSON file")
    args = parser.parse_args(argv)
    from .httpapi import serve

    serve(args.config)
    return 0
