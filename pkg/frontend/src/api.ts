import type {
  ApiErrorBody,
  ChatResponse,
  HealthResponse,
  SessionTranscript,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;
  readonly retryable: boolean;

  constructor(status: number, body: Partial<ApiErrorBody>) {
    super(body.error ?? `request failed with HTTP ${status}`);
    this.name = "ApiError";
    this.status = status;
    this.code = body.code ?? "unknown";
    this.retryable = body.retryable ?? false;
  }
}

type FetchLike = typeof fetch;

/** Thin typed client over the agent service JSON API. */
export class AivaClient {
  readonly baseUrl: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn ?? globalThis.fetch.bind(globalThis);
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, {
        method,
        headers: body === undefined ? undefined : { "Content-Type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(0, {
        error: err instanceof Error ? err.message : "network failure",
        code: "network",
        retryable: true,
      });
    }
    if (!response.ok) {
      let parsed: Partial<ApiErrorBody> = {};
      try {
        parsed = (await response.json()) as Partial<ApiErrorBody>;
      } catch {
        // non-JSON error body; keep defaults
      }
      throw new ApiError(response.status, parsed);
    }
    return (await response.json()) as T;
  }

  health(): Promise<HealthResponse> {
    return this.request<HealthResponse>("GET", "/healthz");
  }

  async createSession(): Promise<string> {
    const body = await this.request<{ session_id: string }>("POST", "/sessions");
    return body.session_id;
  }

  chat(sessionId: string, text: string, imagePngBase64?: string): Promise<ChatResponse> {
    return this.request<ChatResponse>("POST", `/sessions/${sessionId}/chat`, {
      text,
      image_png_base64: imagePngBase64 ?? null,
    });
  }

  getSession(sessionId: string): Promise<SessionTranscript> {
    return this.request<SessionTranscript>("GET", `/sessions/${sessionId}`);
  }

  deleteSession(sessionId: string): Promise<unknown> {
    return this.request("DELETE", `/sessions/${sessionId}`);
  }
}
