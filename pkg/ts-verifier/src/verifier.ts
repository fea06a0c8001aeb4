/**
 * Offline verification with the same fixed check order and verdict set as
 * the document producer's own verifier:
 *
 *   parse -> chain + signature -> measurements -> commitment -> nonce
 *
 * Verification is total: any input yields a report, never a throw, and
 * nothing here touches the network.
 */

import { X509Certificate } from "node:crypto";

import { validateChain, type ChainFailure } from "./chain.js";
import { commitmentDigest } from "./commitment.js";
import { DocumentParseError, parseDocument, type AttestationDocument } from "./document.js";
import { ImageFormatError, measureImage, type MeasurementHex } from "./image.js";

export enum Verdict {
  PASS = "PASS",
  SIGNATURE_INVALID = "SIGNATURE_INVALID",
  UNTRUSTED_ROOT = "UNTRUSTED_ROOT",
  CERT_EXPIRED = "CERT_EXPIRED",
  MEASUREMENT_MISMATCH = "MEASUREMENT_MISMATCH",
  COMMITMENT_MISMATCH = "COMMITMENT_MISMATCH",
  NONCE_MISMATCH = "NONCE_MISMATCH",
  MALFORMED = "MALFORMED",
}

export const VERDICT_EXIT_CODES: Record<Verdict, number> = {
  [Verdict.PASS]: 0,
  [Verdict.SIGNATURE_INVALID]: 1,
  [Verdict.UNTRUSTED_ROOT]: 2,
  [Verdict.CERT_EXPIRED]: 3,
  [Verdict.MEASUREMENT_MISMATCH]: 4,
  [Verdict.COMMITMENT_MISMATCH]: 5,
  [Verdict.NONCE_MISMATCH]: 6,
  [Verdict.MALFORMED]: 7,
};

const CHAIN_VERDICTS: Record<ChainFailure, Verdict> = {
  broken_link: Verdict.SIGNATURE_INVALID,
  bad_document_signature: Verdict.SIGNATURE_INVALID,
  untrusted_root: Verdict.UNTRUSTED_ROOT,
  cert_expired: Verdict.CERT_EXPIRED,
};

export interface VerificationExpectation {
  /** PEM or DER of the platform root certificate. */
  trustAnchor: Buffer;
  response: string;
  input?: string | null;
  /** Exactly one of expectedMeasurements / imageBytes must be supplied. */
  expectedMeasurements?: MeasurementHex;
  imageBytes?: Buffer;
  nonce?: Buffer | null;
  /** Verification clock (epoch ms); defaults to now. */
  clockMs?: number;
}

export interface DocumentSummary {
  module_id: string;
  timestamp_ms: number;
  pcr0: string;
  pcr1: string;
  pcr2: string;
  user_data: string;
  nonce: string | null;
}

export interface VerificationReport {
  verdict: Verdict;
  failing_detail: string;
  checked_at_ms: number;
  document_summary: DocumentSummary | null;
}

function anchorDer(trustAnchor: Buffer): Buffer {
  return new X509Certificate(trustAnchor).raw;
}

function summarize(document: AttestationDocument): DocumentSummary {
  return {
    module_id: document.payload.moduleId,
    timestamp_ms: document.payload.timestampMs,
    pcr0: document.payload.pcrs[0].toString("hex"),
    pcr1: document.payload.pcrs[1].toString("hex"),
    pcr2: document.payload.pcrs[2].toString("hex"),
    user_data: document.payload.userData.toString("hex"),
    nonce: document.payload.nonce ? document.payload.nonce.toString("hex") : null,
  };
}

export function verify(
  documentBytes: Buffer,
  expectation: VerificationExpectation,
): VerificationReport {
  const checkedAt = Date.now();
  const clockMs = expectation.clockMs ?? checkedAt;
  const report = (
    verdict: Verdict,
    detail: string,
    summary: DocumentSummary | null = null,
  ): VerificationReport => ({
    verdict,
    failing_detail: verdict === Verdict.PASS ? "" : detail,
    checked_at_ms: checkedAt,
    document_summary: summary,
  });

  if ((expectation.expectedMeasurements === undefined) === (expectation.imageBytes === undefined)) {
    throw new Error("exactly one of expectedMeasurements / imageBytes must be supplied");
  }

  let document: AttestationDocument;
  try {
    document = parseDocument(documentBytes);
  } catch (error) {
    if (error instanceof DocumentParseError) {
      return report(Verdict.MALFORMED, error.message);
    }
    return report(Verdict.MALFORMED, `unexpected parse failure: ${error}`);
  }
  const summary = summarize(document);

  try {
    const chainResult = validateChain(
      document.certificate,
      document.caBundle,
      document.payloadBytes,
      document.signature,
      anchorDer(expectation.trustAnchor),
      clockMs,
    );
    if (!chainResult.ok) {
      return report(CHAIN_VERDICTS[chainResult.failure!], chainResult.detail, summary);
    }
  } catch (error) {
    return report(Verdict.MALFORMED, `unexpected chain failure: ${error}`, summary);
  }

  let expected: MeasurementHex;
  if (expectation.expectedMeasurements !== undefined) {
    expected = expectation.expectedMeasurements;
  } else {
    try {
      expected = measureImage(expectation.imageBytes!);
    } catch (error) {
      if (error instanceof ImageFormatError) {
        return report(Verdict.MALFORMED, `expected image: ${error.message}`, summary);
      }
      return report(Verdict.MALFORMED, `expected image: ${error}`, summary);
    }
  }
  for (const index of [0, 1, 2] as const) {
    const got = document.payload.pcrs[index].toString("hex");
    const want = expected[`pcr${index}`];
    if (got !== want.toLowerCase()) {
      return report(
        Verdict.MEASUREMENT_MISMATCH,
        `pcr${index} mismatch: document reports ${got}, expected ${want}`,
        summary,
      );
    }
  }

  let digest: Buffer;
  try {
    digest = commitmentDigest(expectation.input ?? null, expectation.response);
  } catch (error) {
    return report(Verdict.COMMITMENT_MISMATCH, `cannot recompute commitment: ${error}`, summary);
  }
  if (!digest.equals(document.payload.userData)) {
    return report(
      Verdict.COMMITMENT_MISMATCH,
      `commitment over (input, response) does not match user_data: computed ` +
        `${digest.toString("hex")}, document carries ${document.payload.userData.toString("hex")}`,
      summary,
    );
  }

  if (expectation.nonce !== undefined && expectation.nonce !== null) {
    if (document.payload.nonce === null || !expectation.nonce.equals(document.payload.nonce)) {
      const got = document.payload.nonce ? document.payload.nonce.toString("hex") : "<absent>";
      return report(
        Verdict.NONCE_MISMATCH,
        `expected nonce ${expectation.nonce.toString("hex")}, document carries ${got}`,
        summary,
      );
    }
  }

  return report(Verdict.PASS, "", summary);
}
