// WebCrypto wrappers speaking the gateway's formats: P-256 ECDSA with
// raw 64-byte r||s signatures, and sealing as ephemeral ECDH -> HKDF-SHA256
// -> AES-256-GCM with the 12-byte GCM nonce prepended to the ciphertext.

const subtle = crypto.subtle;

const ECDSA_PARAMS = { name: "ECDSA", namedCurve: "P-256" };
const ECDH_PARAMS = { name: "ECDH", namedCurve: "P-256" };
const SEAL_INFO = new TextEncoder().encode("bonik-seal-v1");
const GCM_NONCE_LEN = 12;

// WebCrypto's BufferSource wants views over a real ArrayBuffer
export type Bytes = Uint8Array<ArrayBuffer>;

export interface SealedEnvelopeWire {
  wrapped_key: string;
  ciphertext: string;
}

export function b64e(data: Uint8Array): string {
  let bin = "";
  for (const byte of data) bin += String.fromCharCode(byte);
  return btoa(bin);
}

export function b64d(text: string): Bytes {
  const bin = atob(text);
  const out = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
  return out;
}

export function utf8(text: string): Bytes {
  return new TextEncoder().encode(text);
}

// Canonical JSON: lexicographically sorted keys, no insignificant
// whitespace, unicode kept raw. Must produce the exact bytes the gateway
// hashes and verifies, so reject anything JSON cannot represent faithfully.
export function canonicalJson(value: unknown): string {
  if (value === null) return "null";
  if (typeof value === "string") return JSON.stringify(value);
  if (typeof value === "boolean") return value ? "true" : "false";
  if (typeof value === "number") {
    if (!Number.isFinite(value)) throw new Error("cannot canonicalize non-finite number");
    if (!Number.isInteger(value)) throw new Error("cannot canonicalize non-integer number");
    return String(value);
  }
  if (Array.isArray(value)) {
    return "[" + value.map(canonicalJson).join(",") + "]";
  }
  if (typeof value === "object") {
    const entries = Object.entries(value as Record<string, unknown>)
      .filter(([, v]) => v !== undefined)
      .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0));
    return "{" + entries.map(([k, v]) => JSON.stringify(k) + ":" + canonicalJson(v)).join(",") + "}";
  }
  throw new Error(`cannot canonicalize value of type ${typeof value}`);
}

export function canonicalBytes(value: unknown): Bytes {
  return utf8(canonicalJson(value));
}

export async function sha256Hex(data: Bytes): Promise<string> {
  const digest = await subtle.digest("SHA-256", data);
  return Array.from(new Uint8Array(digest))
    .map((b) => b.toString(16).padStart(2, "0"))
    .join("");
}

export function freshNonce(): string {
  const raw = new Uint8Array(16);
  crypto.getRandomValues(raw);
  return Array.from(raw)
    .map((b) => b.toString(16).padStart(2, "0"))
    .join("");
}

export async function importSigningKey(pkcs8: Bytes): Promise<CryptoKey> {
  return subtle.importKey("pkcs8", pkcs8, ECDSA_PARAMS, false, ["sign"]);
}

export async function importVerifyKey(rawPoint: Bytes): Promise<CryptoKey> {
  return subtle.importKey("raw", rawPoint, ECDSA_PARAMS, false, ["verify"]);
}

export async function sign(key: CryptoKey, message: Bytes): Promise<Bytes> {
  const sig = await subtle.sign({ name: "ECDSA", hash: "SHA-256" }, key, message);
  return new Uint8Array(sig);
}

export async function verify(
  key: CryptoKey,
  message: Bytes,
  signature: Bytes,
): Promise<boolean> {
  if (signature.length !== 64) return false;
  return subtle.verify({ name: "ECDSA", hash: "SHA-256" }, key, signature, message);
}

async function deriveContentKey(
  privateKey: CryptoKey,
  publicKey: CryptoKey,
): Promise<CryptoKey> {
  const shared = await subtle.deriveBits({ name: "ECDH", public: publicKey }, privateKey, 256);
  // HKDF with an absent salt hashes with a zero key, which HMAC padding
  // makes identical to the empty salt used here
  const material = await subtle.importKey("raw", shared, "HKDF", false, ["deriveBits"]);
  const keyBits = await subtle.deriveBits(
    { name: "HKDF", hash: "SHA-256", salt: new Uint8Array(0), info: SEAL_INFO },
    material,
    256,
  );
  return subtle.importKey("raw", keyBits, "AES-GCM", false, ["encrypt", "decrypt"]);
}

export async function seal(
  recipientRawPoint: Bytes,
  payload: Bytes,
): Promise<SealedEnvelopeWire> {
  const recipient = await subtle.importKey("raw", recipientRawPoint, ECDH_PARAMS, false, []);
  const ephemeral = await subtle.generateKey(ECDH_PARAMS, true, ["deriveBits"]);
  const contentKey = await deriveContentKey(ephemeral.privateKey, recipient);
  const gcmNonce = new Uint8Array(GCM_NONCE_LEN);
  crypto.getRandomValues(gcmNonce);
  const ciphertext = new Uint8Array(
    await subtle.encrypt({ name: "AES-GCM", iv: gcmNonce }, contentKey, payload),
  );
  const wrapped = new Uint8Array(await subtle.exportKey("raw", ephemeral.publicKey));
  const framed = new Uint8Array(GCM_NONCE_LEN + ciphertext.length);
  framed.set(gcmNonce);
  framed.set(ciphertext, GCM_NONCE_LEN);
  return { wrapped_key: b64e(wrapped), ciphertext: b64e(framed) };
}

export async function openEnvelope(
  privatePkcs8: Bytes,
  envelope: SealedEnvelopeWire,
): Promise<Bytes> {
  const privateKey = await subtle.importKey("pkcs8", privatePkcs8, ECDH_PARAMS, false, [
    "deriveBits",
  ]);
  const senderPoint = await subtle.importKey("raw", b64d(envelope.wrapped_key), ECDH_PARAMS, false, []);
  const contentKey = await deriveContentKey(privateKey, senderPoint);
  const framed = b64d(envelope.ciphertext);
  const plaintext = await subtle.decrypt(
    { name: "AES-GCM", iv: framed.slice(0, GCM_NONCE_LEN) },
    contentKey,
    framed.slice(GCM_NONCE_LEN),
  );
  return new Uint8Array(plaintext);
}
