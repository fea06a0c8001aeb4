/**
 * Structural parsing of attestation documents: a CBOR map with the fixed
 * key order (payload, certificate, ca_bundle, signature), whose payload
 * is itself a CBOR map (module_id, digest, timestamp, pcrs, user_data,
 * nonce, public_key). Lengths are enforced exactly; no signature checking
 * happens here.
 */

import { CborDecodeError, Decoder } from "./cbor.js";

export const SIGNING_DOMAIN_TAG = Buffer.from("PoG-ATTEST-v1", "ascii");
export const SIGNATURE_LENGTH = 96;
export const USER_DATA_LENGTH = 32;
export const PCR_LENGTH = 48;
export const MAX_NONCE_LENGTH = 64;

export class DocumentParseError extends Error {
  readonly offset: number;

  constructor(message: string, offset = 0) {
    super(`${message} (at byte ${offset})`);
    this.name = "DocumentParseError";
    this.offset = offset;
  }
}

export interface AttestationPayload {
  moduleId: string;
  digestAlgorithm: string;
  timestampMs: number;
  pcrs: { 0: Buffer; 1: Buffer; 2: Buffer };
  userData: Buffer;
  nonce: Buffer | null;
  publicKey: Buffer | null;
}

export interface AttestationDocument {
  payload: AttestationPayload;
  payloadBytes: Buffer;
  certificate: Buffer;
  caBundle: Buffer[];
  signature: Buffer;
}

function wrap<T>(fn: () => T): T {
  try {
    return fn();
  } catch (error) {
    if (error instanceof CborDecodeError) {
      throw new DocumentParseError(error.message.replace(/ \(at byte \d+\)$/, ""), error.offset);
    }
    throw error;
  }
}

function expectKey(decoder: Decoder, name: string): void {
  const at = decoder.offset;
  const key = decoder.readText("map key");
  if (key !== name) {
    throw new DocumentParseError(`expected key '${name}', got '${key}'`, at);
  }
}

export function parsePayload(data: Buffer): AttestationPayload {
  const decoder = new Decoder(data);
  const payload = readPayload(decoder);
  if (!decoder.exhausted()) {
    throw new DocumentParseError("trailing bytes after payload", decoder.offset);
  }
  return payload;
}

function readPayload(decoder: Decoder): AttestationPayload {
  return wrap(() => {
    const count = decoder.readMapHeader("payload map");
    if (count !== 7) {
      throw new DocumentParseError(`payload map must have 7 entries, got ${count}`, decoder.offset);
    }
    expectKey(decoder, "module_id");
    const moduleId = decoder.readText("module_id");
    if (moduleId.length === 0) throw new DocumentParseError("module_id must be non-empty");
    expectKey(decoder, "digest");
    const digestAlgorithm = decoder.readText("digest");
    if (digestAlgorithm !== "SHA384") {
      throw new DocumentParseError(`digest must be 'SHA384', got '${digestAlgorithm}'`);
    }
    expectKey(decoder, "timestamp");
    const timestampMs = decoder.readUint("timestamp");
    expectKey(decoder, "pcrs");
    let at = decoder.offset;
    const pcrCount = decoder.readMapHeader("pcrs map");
    if (pcrCount !== 3) throw new DocumentParseError(`pcrs map must have 3 entries, got ${pcrCount}`, at);
    const registers: Buffer[] = [];
    for (let index = 0; index < 3; index++) {
      at = decoder.offset;
      if (decoder.readUint("pcr index") !== index) {
        throw new DocumentParseError(`expected pcr index ${index}`, at);
      }
      at = decoder.offset;
      const value = decoder.readBytes(`pcr${index}`);
      if (value.length !== PCR_LENGTH) {
        throw new DocumentParseError(
          `bad digest length: pcr${index} must be ${PCR_LENGTH} bytes, got ${value.length}`,
          at,
        );
      }
      registers.push(value);
    }
    expectKey(decoder, "user_data");
    at = decoder.offset;
    const userData = decoder.readBytes("user_data");
    if (userData.length !== USER_DATA_LENGTH) {
      throw new DocumentParseError(
        `user_data must be ${USER_DATA_LENGTH} bytes, got ${userData.length}`,
        at,
      );
    }
    expectKey(decoder, "nonce");
    at = decoder.offset;
    const nonce = decoder.readBytesOrNull("nonce");
    if (nonce !== null && nonce.length > MAX_NONCE_LENGTH) {
      throw new DocumentParseError(`nonce longer than ${MAX_NONCE_LENGTH} bytes`, at);
    }
    expectKey(decoder, "public_key");
    const publicKey = decoder.readBytesOrNull("public_key");
    return {
      moduleId,
      digestAlgorithm,
      timestampMs,
      pcrs: { 0: registers[0], 1: registers[1], 2: registers[2] },
      userData,
      nonce,
      publicKey,
    };
  });
}

export function parseDocument(data: Buffer): AttestationDocument {
  const decoder = new Decoder(data);
  const outer = wrap(() => {
    const count = decoder.readMapHeader("document map");
    if (count !== 4) {
      throw new DocumentParseError(`document map must have 4 entries, got ${count}`, decoder.offset);
    }
    expectKey(decoder, "payload");
    const payloadAt = decoder.offset;
    const payloadBytes = decoder.readBytes("payload");
    expectKey(decoder, "certificate");
    let at = decoder.offset;
    const certificate = decoder.readBytes("certificate");
    if (certificate.length === 0) throw new DocumentParseError("certificate must be non-empty", at);
    expectKey(decoder, "ca_bundle");
    at = decoder.offset;
    const bundleCount = decoder.readArrayHeader("ca_bundle");
    if (bundleCount === 0) throw new DocumentParseError("ca_bundle must be non-empty", at);
    const caBundle: Buffer[] = [];
    for (let i = 0; i < bundleCount; i++) {
      at = decoder.offset;
      const der = decoder.readBytes(`ca_bundle[${i}]`);
      if (der.length === 0) throw new DocumentParseError(`ca_bundle[${i}] must be non-empty`, at);
      caBundle.push(der);
    }
    expectKey(decoder, "signature");
    at = decoder.offset;
    const signature = decoder.readBytes("signature");
    if (signature.length !== SIGNATURE_LENGTH) {
      throw new DocumentParseError(
        `signature must be ${SIGNATURE_LENGTH} bytes, got ${signature.length}`,
        at,
      );
    }
    return { payloadBytes, payloadAt, certificate, caBundle, signature };
  });
  if (!decoder.exhausted()) {
    throw new DocumentParseError("trailing bytes after document", decoder.offset);
  }
  const payload = parsePayload(outer.payloadBytes);
  return {
    payload,
    payloadBytes: outer.payloadBytes,
    certificate: outer.certificate,
    caBundle: outer.caBundle,
    signature: outer.signature,
  };
}

export function signedStructure(payloadBytes: Buffer): Buffer {
  return Buffer.concat([SIGNING_DOMAIN_TAG, payloadBytes]);
}
