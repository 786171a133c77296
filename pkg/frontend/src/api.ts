// Typed client for the session service REST API.

export type Item = {
  index: number;
  label: string;
  features: number[];
  image_uri: string | null;
};

export type QueryView = {
  indices: number[];
  items: Item[];
  k: number;
  tie_allowed: boolean;
};

export type PosteriorSummary = {
  mean: number[];
  variance: number[];
};

export type OutcomeRecord = {
  query: number[];
  kind: "ranking" | "winner" | "tie";
  winners: number[];
};

export type SessionState = {
  id: string;
  status: string;
  pool_size: number;
  query_size: number;
  k: number;
  tie_allowed: boolean;
  pending: number[] | null;
  best_guess: Item | null;
  posterior: PosteriorSummary | null;
  history: OutcomeRecord[];
};

export type SessionConfig = {
  query_size?: number;
  k?: number;
  use_ties?: boolean;
  mc_samples?: number;
  candidate_queries?: number;
  seed?: number;
  fit?: { steps?: number; mc_samples_per_step?: number; learning_rate?: number };
};

export type CreateSessionRequest = {
  tabular_csv?: string;
  pool?: {
    points: number[][];
    bounds?: number[][];
    labels?: string[];
  };
  config?: SessionConfig;
};

export type OutcomePayload = {
  kind: "ranking" | "winner" | "tie";
  winners: number[];
};

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function parseError(response: Response): Promise<never> {
  let code = "unknown_error";
  let message = `request failed with status ${response.status}`;
  try {
    const body = await response.json();
    if (body && typeof body === "object") {
      code = body.code ?? code;
      message = body.message ?? body.detail ?? message;
    }
  } catch {
    // non-JSON error body; keep defaults
  }
  throw new ApiError(response.status, code, message);
}

export class SessionClient {
  constructor(private baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async createSession(request: CreateSessionRequest): Promise<{ id: string; pool_size: number }> {
    const response = await fetch(this.url("/sessions"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
    });
    if (!response.ok) await parseError(response);
    return response.json();
  }

  async nextQuery(sessionId: string): Promise<QueryView> {
    const response = await fetch(this.url(`/sessions/${sessionId}/query`));
    if (!response.ok) await parseError(response);
    return response.json();
  }

  async submitObservation(
    sessionId: string,
    payload: OutcomePayload,
  ): Promise<{ ok: boolean; observations: number; best_guess: Item }> {
    const response = await fetch(this.url(`/sessions/${sessionId}/observation`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (!response.ok) await parseError(response);
    return response.json();
  }

  async getState(sessionId: string): Promise<SessionState> {
    const response = await fetch(this.url(`/sessions/${sessionId}/state`));
    if (!response.ok) await parseError(response);
    return response.json();
  }
}
