/**
 * Certificate chain validation for attestation documents. The check order
 * matches the document producer exactly, because the order decides which
 * failure a verifier reports: link signatures, then the document
 * signature, then root-equals-anchor, then validity windows.
 */

import { X509Certificate, verify as cryptoVerify } from "node:crypto";

import { signedStructure } from "./document.js";

export type ChainFailure =
  | "broken_link"
  | "bad_document_signature"
  | "untrusted_root"
  | "cert_expired";

export interface ChainValidationResult {
  ok: boolean;
  failure?: ChainFailure;
  detail: string;
}

// DER bytes of OID 1.2.840.10045.4.3.3 (ecdsa-with-SHA384), content only.
const ECDSA_SHA384_OID = Buffer.from([0x2a, 0x86, 0x48, 0xce, 0x3d, 0x04, 0x03, 0x03]);

interface Tlv {
  tag: number;
  contentStart: number;
  contentEnd: number;
}

function readTlv(data: Buffer, offset: number): Tlv {
  if (offset + 2 > data.length) throw new Error("truncated DER");
  const tag = data[offset];
  let length = data[offset + 1];
  let cursor = offset + 2;
  if (length & 0x80) {
    const lengthBytes = length & 0x7f;
    if (lengthBytes === 0 || lengthBytes > 4 || cursor + lengthBytes > data.length) {
      throw new Error("bad DER length");
    }
    length = 0;
    for (let i = 0; i < lengthBytes; i++) length = length * 256 + data[cursor + i];
    cursor += lengthBytes;
  }
  if (cursor + length > data.length) throw new Error("truncated DER value");
  return { tag, contentStart: cursor, contentEnd: cursor + length };
}

/** Signature algorithm OID content bytes of a DER certificate. */
function signatureAlgorithmOid(der: Buffer): Buffer {
  const outer = readTlv(der, 0); // Certificate ::= SEQUENCE
  const tbs = readTlv(der, outer.contentStart); // tbsCertificate
  const sigAlg = readTlv(der, tbs.contentEnd); // signatureAlgorithm ::= SEQUENCE
  const oid = readTlv(der, sigAlg.contentStart); // first element: OID
  if (oid.tag !== 0x06) throw new Error("expected OID in signatureAlgorithm");
  return der.subarray(oid.contentStart, oid.contentEnd);
}

function loadCertificate(der: Buffer, which: string): X509Certificate {
  try {
    return new X509Certificate(der);
  } catch (error) {
    throw new UnusableCertificate(`${which}: ${error}`);
  }
}

class UnusableCertificate extends Error {}

function linkOk(child: X509Certificate, issuer: X509Certificate): boolean {
  try {
    return child.verify(issuer.publicKey);
  } catch {
    return false;
  }
}

function validityContains(cert: X509Certificate, nowMs: number): boolean {
  const notBefore = Date.parse(cert.validFrom);
  const notAfter = Date.parse(cert.validTo);
  if (Number.isNaN(notBefore) || Number.isNaN(notAfter)) return false;
  return nowMs >= notBefore && nowMs <= notAfter;
}

export function validateChain(
  certificateDer: Buffer,
  caBundleDer: Buffer[],
  payloadBytes: Buffer,
  signature: Buffer,
  anchorDer: Buffer,
  nowMs: number,
): ChainValidationResult {
  if (caBundleDer.length === 0) {
    return { ok: false, failure: "broken_link", detail: "empty ca_bundle" };
  }
  // An unparseable certificate cannot anchor any link, so it is reported
  // as a broken link: parser strictness differs between stacks, and only
  // this classification keeps independent verifiers verdict-identical.
  let leaf: X509Certificate;
  let bundle: X509Certificate[];
  try {
    leaf = loadCertificate(certificateDer, "leaf certificate");
    bundle = caBundleDer.map((der, i) => loadCertificate(der, `ca_bundle[${i}]`));
  } catch (error) {
    if (error instanceof UnusableCertificate) {
      return { ok: false, failure: "broken_link", detail: error.message };
    }
    throw error;
  }

  const ordered = [leaf, ...bundle];
  const orderedDer = [certificateDer, ...caBundleDer];
  for (let i = 0; i < ordered.length; i++) {
    let oid: Buffer;
    try {
      oid = signatureAlgorithmOid(orderedDer[i]);
    } catch (error) {
      return { ok: false, failure: "broken_link", detail: `certificate ${i}: ${error}` };
    }
    if (!oid.equals(ECDSA_SHA384_OID)) {
      return {
        ok: false,
        failure: "broken_link",
        detail: `certificate ${i} uses a disallowed signature algorithm`,
      };
    }
  }

  for (let i = 0; i < ordered.length - 1; i++) {
    if (!linkOk(ordered[i], ordered[i + 1])) {
      return {
        ok: false,
        failure: "broken_link",
        detail: `certificate ${i} is not signed by certificate ${i + 1}`,
      };
    }
  }
  const root = ordered[ordered.length - 1];
  if (!linkOk(root, root)) {
    return { ok: false, failure: "broken_link", detail: "root certificate is not self-signed" };
  }

  let leafIsP384 = false;
  try {
    leafIsP384 = leaf.publicKey.asymmetricKeyDetails?.namedCurve === "secp384r1";
  } catch {
    leafIsP384 = false;
  }
  if (!leafIsP384) {
    return { ok: false, failure: "bad_document_signature", detail: "leaf key is not ECDSA P-384" };
  }
  let signatureOk = false;
  try {
    signatureOk = cryptoVerify(
      "sha384",
      signedStructure(payloadBytes),
      { key: leaf.publicKey, dsaEncoding: "ieee-p1363" },
      signature,
    );
  } catch {
    signatureOk = false;
  }
  if (!signatureOk) {
    return {
      ok: false,
      failure: "bad_document_signature",
      detail: "document signature does not verify under the leaf key",
    };
  }

  if (!root.raw.equals(anchorDer)) {
    return {
      ok: false,
      failure: "untrusted_root",
      detail: "chain does not root in the trust anchor",
    };
  }

  for (let i = 0; i < ordered.length; i++) {
    if (!validityContains(ordered[i], nowMs)) {
      const which = i === 0 ? "leaf" : i === ordered.length - 1 ? "root" : `intermediate ${i}`;
      return {
        ok: false,
        failure: "cert_expired",
        detail: `${which} certificate not valid at ${new Date(nowMs).toISOString()}`,
      };
    }
  }

  return { ok: true, detail: "" };
}
