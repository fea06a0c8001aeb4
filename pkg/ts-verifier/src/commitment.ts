/**
 * Data commitments: SHA-256 over canonical JSON of the exchanged text.
 * Canonical means sorted keys ("input" before "response"), no
 * insignificant whitespace, minimal JSON escaping, UTF-8 bytes —
 * byte-identical to what the document producer hashed.
 */

import { createHash } from "node:crypto";

export function canonicalCustomData(input: string | null, response: string): Buffer {
  if (response.length === 0) {
    throw new Error("response must be non-empty");
  }
  const parts: string[] = [];
  if (input !== null) {
    parts.push(`"input":${JSON.stringify(input)}`);
  }
  parts.push(`"response":${JSON.stringify(response)}`);
  return Buffer.from(`{${parts.join(",")}}`, "utf8");
}

export function commitmentDigest(input: string | null, response: string): Buffer {
  return createHash("sha256").update(canonicalCustomData(input, response)).digest();
}
