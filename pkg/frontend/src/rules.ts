// Client-side mirror of the server's submission validation.
//
// The server stays authoritative; this exists so the UI can flag a violation
// before a round-trip. Rule names and check order match the server exactly
// (shape first: duplicate within the decision list, then coverage; then per
// decision: single-outgoing against the known store state, then the
// factual-head type constraint). Parity is pinned by the shared fixture in
// tests/fixtures/rule_cases.json.

import type { Decision, LabelDecision } from "./types.js";

export const FACTUAL_TYPES = new Set(["fact", "reference", "quote"]);
export const SUBJECTIVE_TYPES = new Set(["evaluation", "request"]);

const LABELS: ReadonlySet<string> = new Set(["support", "attack", "none"]);

export interface RuleCandidate {
  id: number;
  type: string;
  existing_outgoing: boolean;
}

export interface RuleInput {
  head: { id: number; type: string };
  candidates: RuleCandidate[];
  decisions: LabelDecision[];
}

export interface RuleVerdict {
  ok: boolean;
  rule: string | null;
}

export function validateSubmission(input: RuleInput): RuleVerdict {
  const seen = new Set<number>();
  for (const d of input.decisions) {
    if (!LABELS.has(d.label)) {
      return { ok: false, rule: "bad-label" };
    }
    if (seen.has(d.tail)) {
      return { ok: false, rule: "duplicate" };
    }
    seen.add(d.tail);
  }
  const candidateIds = new Set(input.candidates.map((c) => c.id));
  const covered =
    seen.size === candidateIds.size &&
    [...seen].every((t) => candidateIds.has(t));
  if (!covered) {
    return { ok: false, rule: "coverage" };
  }
  const byId = new Map(input.candidates.map((c) => [c.id, c]));
  for (const d of input.decisions) {
    if (d.label === "none") continue;
    const candidate = byId.get(d.tail)!;
    if (candidate.existing_outgoing) {
      return { ok: false, rule: "single-outgoing" };
    }
    if (FACTUAL_TYPES.has(input.head.type) && SUBJECTIVE_TYPES.has(candidate.type)) {
      return { ok: false, rule: "factual-head" };
    }
  }
  return { ok: true, rule: null };
}

export function decisionAllowed(
  headType: string,
  candidate: RuleCandidate,
  label: Decision,
): RuleVerdict {
  // per-candidate preview used to grey out illegal choices in the UI
  if (label === "none") return { ok: true, rule: null };
  if (candidate.existing_outgoing) return { ok: false, rule: "single-outgoing" };
  if (FACTUAL_TYPES.has(headType) && SUBJECTIVE_TYPES.has(candidate.type)) {
    return { ok: false, rule: "factual-head" };
  }
  return { ok: true, rule: null };
}
