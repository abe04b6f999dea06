import type { DecisionRequest, QueuePage, RetrainResult, SessionInfo, Stats } from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** What the store needs from the backend; ApiClient is the real one. */
export interface ReviewApi {
  session(): Promise<SessionInfo>;
  queue(limit: number): Promise<QueuePage>;
  decide(decision: DecisionRequest): Promise<Stats>;
  metrics(): Promise<Stats>;
  retrain(): Promise<RetrainResult>;
}

/** Thin typed client over the server's five endpoints. */
export class ApiClient implements ReviewApi {
  constructor(
    private baseUrl = "",
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, init);
    const body = await response.json().catch(() => ({}));
    if (!response.ok) {
      const message = typeof body?.error === "string" ? body.error : `HTTP ${response.status}`;
      throw new ApiError(response.status, message);
    }
    return body as T;
  }

  session(): Promise<SessionInfo> {
    return this.request("/api/session");
  }

  queue(limit: number): Promise<QueuePage> {
    return this.request(`/api/queue?limit=${limit}`);
  }

  decide(decision: DecisionRequest): Promise<Stats> {
    return this.request("/api/decision", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(decision),
    });
  }

  metrics(): Promise<Stats> {
    return this.request("/api/metrics");
  }

  retrain(): Promise<RetrainResult> {
    return this.request("/api/retrain", { method: "POST", body: "{}" });
  }
}
