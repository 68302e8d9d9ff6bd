/** Thin typed client for the chat service. All generation decisions stay
 * server-side; this module only shapes requests and classifies errors. */

import { ChatAllResponse, ChatResponse } from "./types.js";

export interface ChatOptions {
  beam?: number;
  maxLen?: number;
  trace?: boolean;
}

export class ServiceError extends Error {
  readonly status: number | null;
  readonly allowed: string[] | null;
  /** true for network failures and 503: worth offering a retry */
  readonly retryable: boolean;

  constructor(message: string, status: number | null, allowed: string[] | null = null) {
    super(message);
    this.status = status;
    this.allowed = allowed;
    this.retryable = status === null || status === 503;
  }
}

async function parseError(response: Response): Promise<ServiceError> {
  let message = `service error ${response.status}`;
  let allowed: string[] | null = null;
  try {
    const body = await response.json();
    const detail = body?.detail;
    if (typeof detail === "string") {
      message = detail;
    } else if (detail && typeof detail === "object") {
      message = detail.error ?? message;
      if (Array.isArray(detail.allowed)) allowed = detail.allowed;
    }
  } catch {
    /* non-JSON error body: keep the generic message */
  }
  return new ServiceError(message, response.status, allowed);
}

export class ChatClient {
  constructor(readonly baseUrl: string, private fetchFn: typeof fetch = fetch) {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      });
    } catch (err) {
      throw new ServiceError(`cannot reach ${this.baseUrl}: ${String(err)}`, null);
    }
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as T;
  }

  chat(post: string, emotion: string, opts: ChatOptions = {}): Promise<ChatResponse> {
    return this.post<ChatResponse>("/chat", {
      post,
      emotion,
      beam: opts.beam,
      max_len: opts.maxLen,
      trace: opts.trace ?? true,
    });
  }

  chatAll(post: string, opts: ChatOptions = {}): Promise<ChatAllResponse> {
    return this.post<ChatAllResponse>("/chat/all", {
      post,
      beam: opts.beam,
      max_len: opts.maxLen,
      trace: opts.trace ?? true,
    });
  }

  async health(): Promise<{ status: string; model_loaded: boolean }> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}/health`);
    } catch (err) {
      throw new ServiceError(`cannot reach ${this.baseUrl}: ${String(err)}`, null);
    }
    if (!response.ok) throw await parseError(response);
    return response.json();
  }
}
