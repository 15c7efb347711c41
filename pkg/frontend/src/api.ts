// Thin fetch layer over the gateway's JSON endpoints. Errors carry the
// HTTP status so callers can distinguish auth problems (fresh login
// needed) from everything else.

import type { SealedEnvelopeWire } from "./crypto.js";

export class ApiError extends Error {
  status: number;

  constructor(status: number, message: string) {
    super(message);
    this.status = status;
  }
}

export interface RegisterReply {
  nonce: string;
  resp_prime: {
    resp: { status: string; detail: string | null };
    public_key: string;
    private_key: string;
  };
  digest: string;
  block_height: number;
}

export interface LoginReply {
  session_id: string;
  userName: string;
  account: string;
  expires_in_ms: number;
}

export interface ChatReply {
  bot_text: string;
  intent: string;
  entities: { kind: string; value: string }[];
  complete: boolean;
  awaiting_confirmation: boolean;
  status?: string;
  block_height?: number;
}

export interface HistoryReply {
  userName: string;
  account: string;
  history: { height: number; value: string }[];
}

export class GatewayApi {
  private baseUrl: string;
  private fetchFn: typeof fetch;

  constructor(baseUrl = "", fetchFn?: typeof fetch) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchFn = fetchFn ?? fetch.bind(globalThis);
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const reply = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: body === undefined ? undefined : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await reply.json().catch(() => ({}));
    if (!reply.ok) {
      const detail = (payload as { detail?: unknown }).detail;
      throw new ApiError(reply.status, typeof detail === "string" ? detail : reply.statusText);
    }
    return payload as T;
  }

  gatewayKey(): Promise<{ public_key: string }> {
    return this.request("GET", "/api/gateway-key");
  }

  register(nonce: string, sealed: SealedEnvelopeWire): Promise<RegisterReply> {
    return this.request("POST", "/api/register", { nonce, sealed_request: sealed });
  }

  login(nonce: string, sealed: SealedEnvelopeWire): Promise<LoginReply> {
    return this.request("POST", "/api/login", { nonce, sealed_credentials: sealed });
  }

  chat(sessionId: string, nonce: string, utterance: string, signature: string): Promise<ChatReply> {
    return this.request("POST", "/api/chat", {
      session_id: sessionId,
      nonce,
      utterance,
      signature,
    });
  }

  history(sessionId: string, account: string): Promise<HistoryReply> {
    const params = new URLSearchParams({ session_id: sessionId, account });
    return this.request("GET", `/api/explorer/history?${params}`);
  }
}
