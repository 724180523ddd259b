/**
 * Typed client for the editing service. All edits happen server-side;
 * this file is the only place the studio touches the network.
 *
 * One request is allowed in flight per client, mirroring the server's
 * per-session exclusivity; callers disable their controls via `busy`.
 */
import type {
  Direction,
  HealthInfo,
  SessionState,
  StepResponse,
  Strategy,
  UndoResponse,
} from "./types.js";

export class ServiceError extends Error {
  readonly code: string;
  readonly status: number;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.name = "ServiceError";
    this.status = status;
    this.code = code;
  }

  /** Conflicts and transient faults are worth a retry button; invalid
   *  input is not, the user has to change something first. */
  get retryable(): boolean {
    return this.status === 409 || this.status >= 500;
  }
}

export class ClientBusyError extends Error {
  constructor() {
    super("a request is already in flight");
    this.name = "ClientBusyError";
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class StudioClient {
  readonly baseUrl: string;
  private inFlight = false;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl: string, fetchImpl?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchImpl = fetchImpl ?? ((url, init) => fetch(url, init));
  }

  get busy(): boolean {
    return this.inFlight;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    if (this.inFlight) throw new ClientBusyError();
    this.inFlight = true;
    try {
      const response = await this.fetchImpl(this.baseUrl + path, {
        method,
        headers: body === undefined ? undefined : { "content-type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
      const text = await response.text();
      let payload: unknown = null;
      try {
        payload = text ? JSON.parse(text) : null;
      } catch {
        payload = null;
      }
      if (!response.ok) {
        const err = (payload as { error?: { code?: string; message?: string } } | null)?.error;
        // surface the server's message verbatim
        throw new ServiceError(
          response.status,
          err?.code ?? "http_error",
          err?.message ?? `${method} ${path} failed with ${response.status}`,
        );
      }
      return payload as T;
    } finally {
      this.inFlight = false;
    }
  }

  health(): Promise<HealthInfo> {
    return this.request("GET", "/healthz");
  }

  createSession(imagePngBase64: string): Promise<SessionState> {
    return this.request("POST", "/sessions", { image: imagePngBase64 });
  }

  getSession(id: string): Promise<SessionState> {
    return this.request("GET", `/sessions/${id}`);
  }

  step(
    id: string,
    maskPngBase64: string,
    direction: Direction,
    strategy: Strategy,
    seed = 0,
  ): Promise<StepResponse> {
    return this.request("POST", `/sessions/${id}/step`, {
      mask: maskPngBase64,
      direction,
      strategy,
      seed,
    });
  }

  undo(id: string): Promise<UndoResponse> {
    return this.request("POST", `/sessions/${id}/undo`);
  }
}
