/**
 * Strict decoder for the CBOR subset the attestation wire format uses:
 * unsigned integers, byte strings, text strings, arrays, maps, booleans
 * and null. Indefinite lengths, non-minimal length encodings and trailing
 * bytes are rejected; every error carries the byte offset where decoding
 * failed. Decode-only on purpose: this package never generates documents.
 */

export class CborDecodeError extends Error {
  readonly offset: number;

  constructor(message: string, offset: number) {
    super(`${message} (at byte ${offset})`);
    this.name = "CborDecodeError";
    this.offset = offset;
  }
}

const MAJOR_UINT = 0;
const MAJOR_BYTES = 2;
const MAJOR_TEXT = 3;
const MAJOR_ARRAY = 4;
const MAJOR_MAP = 5;

const STRICT_UTF8 = new TextDecoder("utf-8", { fatal: true });

export class Decoder {
  private readonly data: Buffer;
  offset: number;

  constructor(data: Buffer) {
    this.data = data;
    this.offset = 0;
  }

  exhausted(): boolean {
    return this.offset >= this.data.length;
  }

  private readHead(): [major: number, value: number, headOffset: number] {
    const start = this.offset;
    if (start >= this.data.length) {
      throw new CborDecodeError("unexpected end of input", start);
    }
    const initial = this.data[start];
    const major = initial >> 5;
    const info = initial & 0x1f;
    this.offset += 1;
    if (info < 24) return [major, info, start];
    if (info === 31) throw new CborDecodeError("indefinite lengths are not allowed", start);
    if (info > 27) throw new CborDecodeError(`reserved additional info ${info}`, start);
    const width = 1 << (info - 24);
    if (this.offset + width > this.data.length) {
      throw new CborDecodeError("truncated length field", start);
    }
    let value: number;
    if (width === 1) value = this.data.readUInt8(this.offset);
    else if (width === 2) value = this.data.readUInt16BE(this.offset);
    else if (width === 4) value = this.data.readUInt32BE(this.offset);
    else {
      const big = this.data.readBigUInt64BE(this.offset);
      if (big > BigInt(Number.MAX_SAFE_INTEGER)) {
        throw new CborDecodeError("integer exceeds the interoperable range", start);
      }
      value = Number(big);
    }
    this.offset += width;
    const minimal = width === 1 ? 24 : width === 2 ? 0x100 : width === 4 ? 0x10000 : 0x100000000;
    if (value < minimal) {
      throw new CborDecodeError("non-minimal length encoding", start);
    }
    return [major, value, start];
  }

  private take(length: number, start: number): Buffer {
    if (this.offset + length > this.data.length) {
      throw new CborDecodeError("truncated payload", start);
    }
    const chunk = this.data.subarray(this.offset, this.offset + length);
    this.offset += length;
    return chunk;
  }

  readUint(what = "unsigned integer"): number {
    const [major, value, start] = this.readHead();
    if (major !== MAJOR_UINT) throw new CborDecodeError(`expected ${what}`, start);
    return value;
  }

  readBytes(what = "byte string"): Buffer {
    const [major, value, start] = this.readHead();
    if (major !== MAJOR_BYTES) throw new CborDecodeError(`expected ${what}`, start);
    return Buffer.from(this.take(value, start));
  }

  readBytesOrNull(what = "byte string"): Buffer | null {
    if (!this.exhausted() && this.data[this.offset] === 0xf6) {
      this.offset += 1;
      return null;
    }
    return this.readBytes(what);
  }

  readText(what = "text string"): string {
    const [major, value, start] = this.readHead();
    if (major !== MAJOR_TEXT) throw new CborDecodeError(`expected ${what}`, start);
    const raw = this.take(value, start);
    try {
      return STRICT_UTF8.decode(raw);
    } catch {
      throw new CborDecodeError("invalid UTF-8 in text string", start);
    }
  }

  readArrayHeader(what = "array"): number {
    const [major, value, start] = this.readHead();
    if (major !== MAJOR_ARRAY) throw new CborDecodeError(`expected ${what}`, start);
    return value;
  }

  readMapHeader(what = "map"): number {
    const [major, value, start] = this.readHead();
    if (major !== MAJOR_MAP) throw new CborDecodeError(`expected ${what}`, start);
    return value;
  }
}
