export { CborDecodeError, Decoder } from "./cbor.js";
export { canonicalCustomData, commitmentDigest } from "./commitment.js";
export {
  DocumentParseError,
  parseDocument,
  parsePayload,
  signedStructure,
  type AttestationDocument,
  type AttestationPayload,
} from "./document.js";
export { ImageFormatError, measureImage, parseImage, type MeasurementHex } from "./image.js";
export { validateChain, type ChainFailure, type ChainValidationResult } from "./chain.js";
export {
  verify,
  Verdict,
  VERDICT_EXIT_CODES,
  type DocumentSummary,
  type VerificationExpectation,
  type VerificationReport,
} from "./verifier.js";
