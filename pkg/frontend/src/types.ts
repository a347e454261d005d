// Wire types for the /api/v1 annotation endpoints.

export type Decision = "support" | "attack" | "none";

export interface WindowProp {
  id: number;
  text: string;
  type: string;
}

export interface CandidateState {
  id: number;
  type: string;
  has_outgoing: boolean;
}

export interface TaskPayload {
  task_id: string;
  iteration: number;
  doc_id: string;
  head: number;
  head_type: string;
  candidates: number[];
  candidate_states: CandidateState[];
  window: WindowProp[];
}

export interface LabelDecision {
  tail: number;
  label: Decision;
}

export interface LabelSubmission {
  task_id: string;
  annotator: string;
  decisions: LabelDecision[];
}

export interface SubmitResult {
  accepted: boolean;
  task_id: string;
  iteration_advanced: boolean;
}

export interface Progress {
  iteration: number;
  iterations_total: number;
  labeled_size: number;
  pending: number;
  done: boolean;
  per_annotator: Record<string, number>;
  kappa: number | null;
  records: { iteration: number; macro_f1: number; labeled_size: number }[];
}

export interface RunInfo {
  strategy: string;
  iterations: number;
  budget: number;
  oracle: string;
  overlap: boolean;
  window: number;
  done: boolean;
}

export interface ErrorPayload {
  code: string;
  rule: string | null;
  message: string;
}
