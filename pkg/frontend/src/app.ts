/**
 * Application state machine. The state holds only what the server has
 * acknowledged: every mutation is one decision POST, and the table is
 * re-fetched after the server accepts it. Nothing is updated optimistically,
 * so a hard refresh always reproduces the same view.
 */

import { ApiError, ReviewApi } from "./api.js";
import type {
  CandidateQuery,
  CandidatesPage,
  DecisionInput,
  FinalPayload,
  Health,
} from "./types.js";
import { DEFAULT_QUERY } from "./types.js";

export interface AppState {
  health: Health | null;
  page: CandidatesPage | null;
  final: FinalPayload | null;
  query: CandidateQuery;
  /** last server rejection or transport failure, shown inline until the next action */
  error: string | null;
  /** class_id (or "finalize") whose decision POST is in flight */
  pending: string | null;
  loading: boolean;
}

export class ReviewApp {
  state: AppState = {
    health: null,
    page: null,
    final: null,
    query: { ...DEFAULT_QUERY },
    error: null,
    pending: null,
    loading: false,
  };

  constructor(
    private readonly api: ReviewApi,
    private readonly onChange: (state: AppState) => void = () => {},
  ) {}

  get finalized(): boolean {
    return this.state.health?.finalized ?? false;
  }

  private emit(): void {
    this.onChange(this.state);
  }

  /** Re-fetch everything the view renders from the server. */
  async refresh(): Promise<void> {
    this.state.loading = true;
    this.emit();
    try {
      const health = await this.api.health();
      const page = await this.api.candidates(this.state.query);
      const final = health.finalized ? await this.api.final() : null;
      this.state.health = health;
      this.state.page = page;
      this.state.final = final;
    } catch (err) {
      this.state.error = describe(err);
    } finally {
      this.state.loading = false;
      this.emit();
    }
  }

  async setQuery(patch: Partial<CandidateQuery>): Promise<void> {
    const resetPage = !("page" in patch);
    this.state.query = {
      ...this.state.query,
      ...patch,
      ...(resetPage ? { page: 1 } : {}),
    };
    await this.refresh();
  }

  async nextPage(): Promise<void> {
    const { page, query } = this.state;
    if (page && query.page * page.page_size < page.total) {
      await this.setQuery({ page: query.page + 1 });
    }
  }

  async prevPage(): Promise<void> {
    if (this.state.query.page > 1) {
      await this.setQuery({ page: this.state.query.page - 1 });
    }
  }

  /**
   * Issue one decision. Returns true when the server accepted it; on
   * rejection the reason lands in state.error and the view keeps showing
   * the last acknowledged data so the user can retry.
   */
  private async act(decision: DecisionInput, pendingKey: string): Promise<boolean> {
    if (this.state.pending !== null) return false;
    this.state.pending = pendingKey;
    this.state.error = null;
    this.emit();
    try {
      if (decision.action === "finalize") {
        const result = await this.api.finalize();
        this.state.final = result.final;
      } else {
        await this.api.submit(decision);
      }
    } catch (err) {
      this.state.error = describe(err);
      this.state.pending = null;
      this.emit();
      return false;
    }
    this.state.pending = null;
    await this.refresh();
    return true;
  }

  keep(classId: string): Promise<boolean> {
    return this.act({ action: "keep", subject: classId }, classId);
  }

  discard(classId: string): Promise<boolean> {
    return this.act({ action: "discard", subject: classId }, classId);
  }

  merge(classId: string, targetId: string): Promise<boolean> {
    return this.act({ action: "merge", subject: classId, target: targetId }, classId);
  }

  rename(classId: string, name: string): Promise<boolean> {
    return this.act({ action: "rename", subject: classId, value: name }, classId);
  }

  editPrompt(classId: string, prompt: string): Promise<boolean> {
    return this.act({ action: "edit_prompt", subject: classId, value: prompt }, classId);
  }

  finalize(): Promise<boolean> {
    return this.act({ action: "finalize" }, "finalize");
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return err.reason;
  return err instanceof Error ? err.message : String(err);
}
