// Typed client for the recommendation service.
//
// The service speaks JSON over three endpoints:
//   POST /sessions                  -> { session_id }
//   POST /sessions/{id}/turns       -> turn result with explanation and recommendations
//   GET  /sessions/{id}/transcript  -> stored turns plus a rendered text form
// Error responses always carry { error: string }; those surface here as
// ApiError with the HTTP status attached so callers can branch on it.

// ---------------------------------------------------------------------------
// Payload shapes
// ---------------------------------------------------------------------------

export interface ExplanationPayload {
  text: string;
  source: "llm" | "fallback";
}

export interface RecommendationPayload {
  entity_id: number;
  name: string;
  score: number;
  path: string[];
}

export interface TurnResult {
  response_text: string;
  explanation: ExplanationPayload;
  recommendations: RecommendationPayload[];
  turn_index: number;
}

export interface TranscriptTurn {
  turn_index: number;
  speaker: "seeker" | "recommender";
  text: string;
}

export interface Transcript {
  turns: TranscriptTurn[];
  rendered: string;
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/** An HTTP response the service answered with a non-2xx status. */
export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, message: string) {
    super(message);
    this.name = "ApiError";
    this.status = status;
  }
}

// ---------------------------------------------------------------------------
// Client
// ---------------------------------------------------------------------------

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ServiceClient {
  private readonly baseUrl: string;
  private readonly fetchImpl: FetchLike;

  /**
   * @param baseUrl service origin, e.g. "http://localhost:8000"; empty means
   *   same-origin relative requests
   * @param fetchImpl injectable fetch, so tests can stub the network
   */
  constructor(baseUrl = "", fetchImpl?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchImpl = fetchImpl ?? ((url, init) => fetch(url, init));
  }

  async createSession(): Promise<string> {
    const body = await this.request<{ session_id: string }>("/sessions", {
      method: "POST",
    });
    return body.session_id;
  }

  async postTurn(sessionId: string, text: string): Promise<TurnResult> {
    return this.request<TurnResult>(`/sessions/${sessionId}/turns`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text }),
    });
  }

  async fetchTranscript(sessionId: string): Promise<Transcript> {
    return this.request<Transcript>(`/sessions/${sessionId}/transcript`);
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, init);
    if (!response.ok) {
      throw new ApiError(response.status, await errorDetail(response));
    }
    return (await response.json()) as T;
  }
}

async function errorDetail(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { error?: unknown };
    if (body && typeof body.error === "string") {
      return body.error;
    }
  } catch {
    // non-JSON body; fall through to the generic message
  }
  return `HTTP ${response.status}`;
}
