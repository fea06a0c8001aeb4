/**
 * Enclave image (.pgeif) parsing and measurement, matching the producer's
 * register definitions:
 *
 *   pcr0  SHA-384(full image bytes)
 *   pcr1  SHA-384(manifest section || runtime section, each length-prefixed)
 *   pcr2  SHA-384(application section, length-prefixed)
 */

import { createHash } from "node:crypto";

const MAGIC = Buffer.from("PGEIF1", "ascii");

export class ImageFormatError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ImageFormatError";
  }
}

export interface MeasurementHex {
  pcr0: string;
  pcr1: string;
  pcr2: string;
}

interface Sections {
  manifest: Buffer;
  application: Buffer;
  runtime: Buffer;
}

function lengthPrefix(section: Buffer): Buffer {
  const prefix = Buffer.alloc(4);
  prefix.writeUInt32BE(section.length, 0);
  return prefix;
}

export function parseImage(data: Buffer): Sections {
  if (!data.subarray(0, MAGIC.length).equals(MAGIC)) {
    throw new ImageFormatError("bad magic; not a PGEIF1 image");
  }
  let offset = MAGIC.length;
  const sections: Buffer[] = [];
  for (const name of ["manifest", "application", "runtime"]) {
    if (offset + 4 > data.length) {
      throw new ImageFormatError(`truncated ${name} length at byte ${offset}`);
    }
    const length = data.readUInt32BE(offset);
    offset += 4;
    if (offset + length > data.length) {
      throw new ImageFormatError(`truncated ${name} section at byte ${offset}`);
    }
    sections.push(data.subarray(offset, offset + length));
    offset += length;
  }
  if (offset !== data.length) {
    throw new ImageFormatError(`trailing bytes after sections at byte ${offset}`);
  }
  let manifest: unknown;
  try {
    manifest = JSON.parse(sections[0].toString("utf8"));
  } catch (error) {
    throw new ImageFormatError(`manifest is not valid JSON: ${error}`);
  }
  const guardrail = (manifest as Record<string, unknown> | null)?.["guardrail"];
  if (
    typeof manifest !== "object" ||
    manifest === null ||
    typeof guardrail !== "object" ||
    guardrail === null ||
    typeof (guardrail as Record<string, unknown>)["id"] !== "string"
  ) {
    throw new ImageFormatError("manifest must name exactly one guardrail configuration");
  }
  return { manifest: sections[0], application: sections[1], runtime: sections[2] };
}

export function measureImage(data: Buffer): MeasurementHex {
  const sections = parseImage(data);
  const pcr0 = createHash("sha384").update(data).digest("hex");
  const pcr1 = createHash("sha384")
    .update(lengthPrefix(sections.manifest))
    .update(sections.manifest)
    .update(lengthPrefix(sections.runtime))
    .update(sections.runtime)
    .digest("hex");
  const pcr2 = createHash("sha384")
    .update(lengthPrefix(sections.application))
    .update(sections.application)
    .digest("hex");
  return { pcr0, pcr1, pcr2 };
}
