// Protocol driver behind the UI: registration with digest check, login
// challenge signing, signed chat turns, explorer reads. Keeps the
// transcript model the DOM renders, so the whole flow is testable
// without a browser.

import { ApiError, GatewayApi } from "./api.js";
import type { ChatReply } from "./api.js";
import {
  b64d,
  b64e,
  canonicalBytes,
  freshNonce,
  importSigningKey,
  seal,
  sha256Hex,
  sign,
  utf8,
} from "./crypto.js";
import type { Bytes } from "./crypto.js";
import { KeyStore } from "./keystore.js";
import type { StringStore } from "./keystore.js";

export class DigestMismatchError extends Error {}

export interface TranscriptEntry {
  speaker: "user" | "bot";
  text: string;
  timestamp: number;
  statusBadge?: string;
}

export interface Session {
  sessionId: string;
  userName: string;
  account: string;
}

function badgeFor(reply: ChatReply): string | undefined {
  if (reply.status === "TRANSACTION SUCCESSFUL") return "SUCCESSFUL";
  if (reply.status === "TRANSACTION ABORTED") return "ABORTED";
  if (reply.status !== undefined && /^BALANCE\(\d+\)$/.test(reply.status)) return "BALANCE";
  return undefined;
}

export class ChatClient {
  transcript: TranscriptEntry[] = [];
  awaitingConfirmation = false;
  session: Session | null = null;

  private api: GatewayApi;
  private keys: KeyStore;
  private now: () => number;
  private gatewayKey: Bytes | null = null;
  private signingKey: CryptoKey | null = null;
  private inFlight = false;

  constructor(opts: {
    baseUrl?: string;
    fetchFn?: typeof fetch;
    store?: StringStore;
    now?: () => number;
  } = {}) {
    this.api = new GatewayApi(opts.baseUrl ?? "", opts.fetchFn);
    this.keys = new KeyStore(opts.store);
    this.now = opts.now ?? Date.now;
  }

  private async fetchGatewayKey(): Promise<Bytes> {
    if (this.gatewayKey === null) {
      const reply = await this.api.gatewayKey();
      this.gatewayKey = b64d(reply.public_key);
    }
    return this.gatewayKey;
  }

  private async passwordDigest(password: string): Promise<string> {
    return sha256Hex(utf8(password));
  }

  // Registration: seal the request to the gateway key, then check the
  // reply digest before trusting (or storing) the issued keys.
  async register(userName: string, password: string): Promise<{ account: string | null }> {
    const gatewayKey = await this.fetchGatewayKey();
    const h = await this.passwordDigest(password);
    const nonce = freshNonce();
    const sealed = await seal(
      gatewayKey,
      canonicalBytes({ type: "registration", data: { userName, h } }),
    );
    const reply = await this.api.register(nonce, sealed);
    const expected = await sha256Hex(canonicalBytes(reply.resp_prime));
    if (reply.nonce !== nonce || reply.digest !== expected) {
      throw new DigestMismatchError("registration reply failed its integrity check");
    }
    this.keys.save(userName, {
      publicKey: reply.resp_prime.public_key,
      privateKey: reply.resp_prime.private_key,
    });
    return { account: reply.resp_prime.resp.detail };
  }

  async login(userName: string, password: string): Promise<Session> {
    const stored = this.keys.load(userName);
    if (stored === null) {
      throw new ApiError(0, "no stored keys for this user, register first");
    }
    const gatewayKey = await this.fetchGatewayKey();
    const h = await this.passwordDigest(password);
    const nonce = freshNonce();
    const key = await importSigningKey(b64d(stored.privateKey));
    const signature = await sign(key, canonicalBytes({ userName, h, nonce }));
    const sealed = await seal(
      gatewayKey,
      canonicalBytes({ userName, h, signature: b64e(signature) }),
    );
    const reply = await this.api.login(nonce, sealed);
    this.signingKey = key;
    this.session = {
      sessionId: reply.session_id,
      userName: reply.userName,
      account: reply.account,
    };
    this.transcript = [];
    this.awaitingConfirmation = false;
    return this.session;
  }

  get busy(): boolean {
    return this.inFlight;
  }

  async send(text: string): Promise<TranscriptEntry> {
    if (this.session === null || this.signingKey === null) {
      throw new ApiError(401, "not logged in");
    }
    if (this.inFlight) {
      throw new Error("a chat request is already in flight");
    }
    this.inFlight = true;
    try {
      const nonce = freshNonce();
      const signature = await sign(
        this.signingKey,
        canonicalBytes({ nonce, session_id: this.session.sessionId, utterance: text }),
      );
      this.transcript.push({ speaker: "user", text, timestamp: this.now() });
      let reply: ChatReply;
      try {
        reply = await this.api.chat(this.session.sessionId, nonce, text, b64e(signature));
      } catch (err) {
        if (err instanceof ApiError && err.status === 401) {
          this.session = null; // expired: the UI falls back to the login view
          this.signingKey = null;
        }
        throw err;
      }
      this.awaitingConfirmation = reply.awaiting_confirmation;
      const entry: TranscriptEntry = {
        speaker: "bot",
        text: reply.bot_text,
        timestamp: this.now(),
        statusBadge: badgeFor(reply),
      };
      this.transcript.push(entry);
      return entry;
    } finally {
      this.inFlight = false;
    }
  }

  async history(): Promise<{ height: number; value: string }[]> {
    if (this.session === null) {
      throw new ApiError(401, "not logged in");
    }
    const reply = await this.api.history(this.session.sessionId, this.session.account);
    return reply.history;
  }

  logout(): void {
    if (this.session !== null) {
      this.keys.clear(this.session.userName);
    }
    this.session = null;
    this.signingKey = null;
    this.transcript = [];
    this.awaitingConfirmation = false;
  }
}
