/**
 * Typed client for the review service. Every method is one HTTP exchange;
 * non-2xx responses become ApiError carrying the server's reason so the
 * app can show it verbatim.
 */

import type {
  CandidateQuery,
  CandidatesPage,
  Decision,
  DecisionInput,
  FinalPayload,
  Health,
  RegistryView,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly reason: string,
  ) {
    super(`${status}: ${reason}`);
    this.name = "ApiError";
  }
}

export class ReviewApi {
  private readonly fetchFn: FetchLike;

  constructor(
    private readonly baseUrl: string,
    fetchFn?: FetchLike,
  ) {
    // wrap the global so the call is not bound to this instance
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, init);
    const body = await response.text();
    let parsed: unknown = null;
    try {
      parsed = body ? JSON.parse(body) : null;
    } catch {
      parsed = null;
    }
    if (!response.ok) {
      const reason =
        parsed !== null && typeof parsed === "object" && "error" in parsed
          ? String((parsed as { error: unknown }).error)
          : body || response.statusText;
      throw new ApiError(response.status, reason);
    }
    return parsed as T;
  }

  health(): Promise<Health> {
    return this.request<Health>("/health");
  }

  registry(): Promise<RegistryView> {
    return this.request<RegistryView>("/registry");
  }

  candidates(query: CandidateQuery): Promise<CandidatesPage> {
    const params = new URLSearchParams({
      status: query.status,
      sort: query.sort,
      page: String(query.page),
      page_size: String(query.pageSize),
      examples: String(query.examples),
    });
    return this.request<CandidatesPage>(`/candidates?${params}`);
  }

  submit(decision: DecisionInput): Promise<{ decision: Decision }> {
    return this.request<{ decision: Decision }>("/decisions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(decision),
    });
  }

  finalize(): Promise<{ decision: Decision; final: FinalPayload }> {
    return this.request<{ decision: Decision; final: FinalPayload }>("/finalize", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({}),
    });
  }

  /** The final class set, or null while the review is not finalized. */
  async final(): Promise<FinalPayload | null> {
    try {
      return await this.request<FinalPayload>("/final");
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) return null;
      throw err;
    }
  }
}
