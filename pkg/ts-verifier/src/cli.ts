#!/usr/bin/env node
/**
 * pog-verify-compatible command line: same flags (subset), same JSON
 * report on stdout, same exit codes (0 = PASS, 1-7 = verdict enum,
 * 64 = usage error).
 */

import { readFileSync } from "node:fs";
import { pathToFileURL } from "node:url";

import { verify, Verdict, VERDICT_EXIT_CODES, type VerificationExpectation } from "./verifier.js";

const EX_USAGE = 64;

const FLAGS_WITH_VALUE = new Set([
  "--doc",
  "--envelope",
  "--root",
  "--image",
  "--pcr0",
  "--pcr1",
  "--pcr2",
  "--response",
  "--input",
  "--nonce",
  "--at",
]);
const BOOLEAN_FLAGS = new Set(["--no-input-binding"]);

function usageError(message: string): never {
  process.stderr.write(
    `pog-verify-ts: error: ${message}\n` +
      "usage: pog-verify-ts (--doc FILE | --envelope FILE) --root PEM " +
      "(--image PGEIF | --pcr0 HEX --pcr1 HEX --pcr2 HEX) " +
      "[--response FILE] [--input FILE] [--no-input-binding] [--nonce HEX] [--at EPOCH_MS]\n",
  );
  process.exit(EX_USAGE);
}

function parseArgs(argv: string[]): Map<string, string | true> {
  const args = new Map<string, string | true>();
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i];
    if (BOOLEAN_FLAGS.has(flag)) {
      args.set(flag, true);
    } else if (FLAGS_WITH_VALUE.has(flag)) {
      const value = argv[i + 1];
      if (value === undefined) usageError(`${flag} needs a value`);
      args.set(flag, value);
      i++;
    } else {
      usageError(`unknown flag ${flag}`);
    }
  }
  return args;
}

export function main(argv: string[]): number {
  const args = parseArgs(argv);
  const docPath = args.get("--doc");
  const envelopePath = args.get("--envelope");
  if (!docPath === !envelopePath) {
    usageError("exactly one of --doc / --envelope is required");
  }
  const rootPath = args.get("--root");
  if (typeof rootPath !== "string") usageError("--root is required");

  const imagePath = args.get("--image");
  const pcrFlags = [args.get("--pcr0"), args.get("--pcr1"), args.get("--pcr2")];
  if (imagePath && pcrFlags.some(Boolean)) {
    usageError("--image and --pcr0/--pcr1/--pcr2 are mutually exclusive");
  }
  if (!imagePath && !pcrFlags.every((v) => typeof v === "string")) {
    usageError("supply --image or all of --pcr0 --pcr1 --pcr2");
  }

  let documentBytes: Buffer;
  let input: string | null = null;
  let response: string | null = null;
  if (typeof envelopePath === "string") {
    const envelope = JSON.parse(readFileSync(envelopePath, "utf8"));
    if (typeof envelope.attestation_document !== "string" || !envelope.custom_data) {
      usageError(`${envelopePath} is not an attestation envelope`);
    }
    documentBytes = Buffer.from(envelope.attestation_document, "base64");
    response = envelope.custom_data.response ?? null;
    input = envelope.custom_data.input ?? null;
  } else {
    documentBytes = readFileSync(docPath as string);
  }
  const responsePath = args.get("--response");
  if (typeof responsePath === "string") response = readFileSync(responsePath, "utf8");
  const inputPath = args.get("--input");
  if (typeof inputPath === "string") input = readFileSync(inputPath, "utf8");
  if (args.get("--no-input-binding")) input = null;
  if (response === null) usageError("--response is required when --envelope is not given");

  const expectation: VerificationExpectation = {
    trustAnchor: readFileSync(rootPath),
    response,
    input,
  };
  if (typeof imagePath === "string") {
    expectation.imageBytes = readFileSync(imagePath);
  } else {
    const [pcr0, pcr1, pcr2] = pcrFlags as [string, string, string];
    expectation.expectedMeasurements = { pcr0, pcr1, pcr2 };
  }
  const nonceHex = args.get("--nonce");
  if (typeof nonceHex === "string") {
    if (!/^([0-9a-fA-F]{2})+$/.test(nonceHex)) usageError(`--nonce is not hex: ${nonceHex}`);
    expectation.nonce = Buffer.from(nonceHex, "hex");
  }
  const at = args.get("--at");
  if (typeof at === "string") {
    const clockMs = Number(at);
    if (!Number.isFinite(clockMs)) usageError(`--at is not a number: ${at}`);
    expectation.clockMs = clockMs;
  }

  const report = verify(documentBytes, expectation);
  process.stdout.write(JSON.stringify(report, null, 2) + "\n");
  return VERDICT_EXIT_CODES[report.verdict as Verdict];
}

const entry = process.argv[1];
if (entry !== undefined && import.meta.url === pathToFileURL(entry).href) {
  try {
    process.exit(main(process.argv.slice(2)));
  } catch (error) {
    // Unreadable files and similar environment problems are usage errors,
    // never verdicts.
    usageError(String(error));
  }
}
