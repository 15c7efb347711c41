import { describe, expect, it } from "vitest";

import {
  b64d,
  b64e,
  canonicalJson,
  freshNonce,
  importVerifyKey,
  openEnvelope,
  seal,
  sha256Hex,
  sign,
  utf8,
  verify,
} from "../src/crypto.js";

const subtle = crypto.subtle;

async function ecdsaPair() {
  return subtle.generateKey({ name: "ECDSA", namedCurve: "P-256" }, true, ["sign", "verify"]);
}

describe("canonicalJson", () => {
  it("sorts keys at every depth and strips whitespace", () => {
    expect(canonicalJson({ b: 1, a: { y: 2, x: 3 } })).toBe('{"a":{"x":3,"y":2},"b":1}');
  });

  it("keeps unicode raw", () => {
    expect(canonicalJson({ t: "送金 🙂" })).toBe('{"t":"送金 🙂"}');
  });

  it("renders null, booleans, arrays, integers", () => {
    expect(canonicalJson({ n: null, f: false, l: [1, 2], i: 0 })).toBe(
      '{"f":false,"i":0,"l":[1,2],"n":null}',
    );
  });

  it("drops undefined object fields, as JSON has no such value", () => {
    expect(canonicalJson({ a: 1, gone: undefined })).toBe('{"a":1}');
  });

  it("refuses floats and NaN rather than guessing a format", () => {
    expect(() => canonicalJson({ x: 1.5 })).toThrow();
    expect(() => canonicalJson({ x: NaN })).toThrow();
  });
});

describe("encoding helpers", () => {
  it("base64 round-trips arbitrary bytes", () => {
    const data = new Uint8Array(256).map((_, i) => i);
    expect(b64d(b64e(data))).toEqual(data);
  });

  it("hashes to the known SHA-256 vector", async () => {
    expect(await sha256Hex(utf8("abc"))).toBe(
      "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad",
    );
  });

  it("mints 32-hex nonces that do not repeat", () => {
    const seen = new Set<string>();
    for (let i = 0; i < 200; i++) {
      const nonce = freshNonce();
      expect(nonce).toMatch(/^[0-9a-f]{32}$/);
      seen.add(nonce);
    }
    expect(seen.size).toBe(200);
  });
});

describe("sign / verify", () => {
  it("produces 64-byte signatures that verify and bind the message", async () => {
    const pair = await ecdsaPair();
    const message = utf8("what is my balance");
    const signature = await sign(pair.privateKey, message);
    expect(signature.length).toBe(64);
    expect(await verify(pair.publicKey, message, signature)).toBe(true);
    expect(await verify(pair.publicKey, utf8("what is my balance!"), signature)).toBe(false);
  });

  it("rejects signatures from a different key", async () => {
    const pair = await ecdsaPair();
    const other = await ecdsaPair();
    const message = utf8("hello");
    const signature = await sign(other.privateKey, message);
    expect(await verify(pair.publicKey, message, signature)).toBe(false);
  });

  it("imports raw 65-byte public points", async () => {
    const pair = await ecdsaPair();
    const raw = new Uint8Array(await subtle.exportKey("raw", pair.publicKey));
    expect(raw.length).toBe(65);
    expect(raw[0]).toBe(4);
    const message = utf8("roundtrip");
    const signature = await sign(pair.privateKey, message);
    expect(await verify(await importVerifyKey(raw), message, signature)).toBe(true);
  });
});

describe("seal / open", () => {
  async function ecdhPair() {
    return subtle.generateKey({ name: "ECDH", namedCurve: "P-256" }, true, ["deriveBits"]);
  }

  it("round-trips through the wire form", async () => {
    const pair = await ecdhPair();
    const pub = new Uint8Array(await subtle.exportKey("raw", pair.publicKey));
    const priv = new Uint8Array(await subtle.exportKey("pkcs8", pair.privateKey));
    const payload = utf8("sealed payload 送金");
    const envelope = await seal(pub, payload);
    expect(Object.keys(envelope).sort()).toEqual(["ciphertext", "wrapped_key"]);
    expect(await openEnvelope(priv, envelope)).toEqual(payload);
  });

  it("fails closed on a tampered ciphertext", async () => {
    const pair = await ecdhPair();
    const pub = new Uint8Array(await subtle.exportKey("raw", pair.publicKey));
    const priv = new Uint8Array(await subtle.exportKey("pkcs8", pair.privateKey));
    const envelope = await seal(pub, utf8("secret"));
    const raw = b64d(envelope.ciphertext);
    raw[raw.length - 1] ^= 0x01;
    await expect(
      openEnvelope(priv, { ...envelope, ciphertext: b64e(raw) }),
    ).rejects.toThrow();
  });
});
