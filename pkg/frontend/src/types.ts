/**
 * Payload shapes of the review service API. These mirror the server's JSON
 * exactly; the UI never derives its own numbers from them.
 */

export type CandidateStatus = "proposed" | "kept" | "discarded" | "merged" | "reserved";

export interface ExampleText {
  unit_id: string;
  /** null when the server has no unit text loaded for this id */
  text: string | null;
}

export interface Candidate {
  class_id: string;
  name: string;
  prompt: string;
  count: number;
  example_unit_ids: string[];
  source_batches: number[];
  status: CandidateStatus;
  merged_into: string | null;
  model_count: number | null;
  merged_from: string[];
  final_rank: number | null;
  /** present only when the page was requested with examples=N */
  examples?: ExampleText[];
}

export interface CandidatesPage {
  total: number;
  page: number;
  page_size: number;
  finalized: boolean;
  classes: Candidate[];
  warnings: string[];
}

export interface Health {
  status: string;
  pipeline_kind: string;
  finalized: boolean;
  decisions: number;
}

export interface RegistryView {
  registry: {
    schema: string;
    config_hash: string;
    pipeline_kind: string;
    warnings: string[];
    classes: Candidate[];
  };
  decision_count: number;
  finalized: boolean;
}

export interface Decision {
  decision_id: string;
  actor: string;
  timestamp: string;
  action: string;
  subject?: string;
  target?: string;
  value?: string;
}

export interface FinalClass {
  name: string;
  prompt: string;
  final_rank: number;
  source_class_id: string;
  count: number;
}

export interface FinalPayload {
  schema: string;
  config_hash: string;
  pipeline_kind: string;
  classes: FinalClass[];
  none_class: string;
  includes_none_class: boolean;
  finalized_at: string;
  registry_hash: string;
  warnings: string[];
}

/** A decision as the user issues it; the server assigns id and timestamp. */
export interface DecisionInput {
  action: "keep" | "discard" | "merge" | "rename" | "edit_prompt" | "finalize";
  subject?: string;
  target?: string;
  value?: string;
}

export interface CandidateQuery {
  status: "all" | "live" | CandidateStatus;
  sort: "count_desc" | "name" | "batch";
  page: number;
  pageSize: number;
  /** how many example unit texts to resolve per class (0 = none) */
  examples: number;
}

export const DEFAULT_QUERY: CandidateQuery = {
  status: "all",
  sort: "count_desc",
  page: 1,
  pageSize: 20,
  examples: 3,
};
