// Decision state for one task: tracks per-candidate choices, keyboard focus,
// draft persistence, and produces the submission payload.

import type { Decision, LabelDecision, LabelSubmission, TaskPayload } from "./types.js";
import { validateSubmission, type RuleVerdict } from "./rules.js";

export interface DraftStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

export function taskSchemaError(payload: unknown): string | null {
  // Quick structural check before rendering; a bad payload is reported and
  // the task skipped rather than crashing the view.
  const task = payload as Partial<TaskPayload> | null;
  if (!task || typeof task.task_id !== "string") return "missing task_id";
  if (typeof task.head !== "number") return "missing head";
  if (!Array.isArray(task.candidates) || task.candidates.length === 0) {
    return "missing candidates";
  }
  if (!Array.isArray(task.window) || task.window.length === 0) {
    return "missing window";
  }
  for (const prop of task.window) {
    if (typeof prop?.id !== "number" || typeof prop?.text !== "string") {
      return `window entry without id/text`;
    }
  }
  if (!Array.isArray(task.candidate_states)) return "missing candidate_states";
  const windowIds = new Set(task.window.map((w) => w.id));
  if (!windowIds.has(task.head)) return "head outside window";
  for (const c of task.candidates) {
    if (!windowIds.has(c)) return `candidate ${c} outside window`;
  }
  return null;
}

export class TaskState {
  readonly task: TaskPayload;
  private readonly decisions = new Map<number, Decision | null>();
  focusIndex = 0;
  private readonly drafts: DraftStore | null;

  constructor(task: TaskPayload, drafts: DraftStore | null = null) {
    this.task = task;
    this.drafts = drafts;
    for (const id of task.candidates) {
      this.decisions.set(id, null);
    }
    this.restoreDraft();
  }

  private draftKey(): string {
    return `draft:${this.task.task_id}`;
  }

  private restoreDraft(): void {
    const raw = this.drafts?.getItem(this.draftKey());
    if (!raw) return;
    try {
      const saved = JSON.parse(raw) as Record<string, Decision>;
      for (const [tail, label] of Object.entries(saved)) {
        const id = Number(tail);
        if (this.decisions.has(id)) {
          this.decisions.set(id, label);
        }
      }
    } catch {
      this.drafts?.removeItem(this.draftKey());
    }
  }

  private persistDraft(): void {
    if (!this.drafts) return;
    const out: Record<string, Decision> = {};
    for (const [tail, label] of this.decisions) {
      if (label !== null) out[String(tail)] = label;
    }
    this.drafts.setItem(this.draftKey(), JSON.stringify(out));
  }

  clearDraft(): void {
    this.drafts?.removeItem(this.draftKey());
  }

  decisionFor(tail: number): Decision | null {
    return this.decisions.get(tail) ?? null;
  }

  decide(tail: number, label: Decision): void {
    if (!this.decisions.has(tail)) {
      throw new Error(`proposition ${tail} is not a candidate of this task`);
    }
    this.decisions.set(tail, label);
    this.persistDraft();
  }

  get focusedCandidate(): number | undefined {
    return this.task.candidates[this.focusIndex];
  }

  decideFocused(label: Decision): void {
    const tail = this.focusedCandidate;
    if (tail === undefined) return;
    this.decide(tail, label);
    this.moveFocus(1);
  }

  moveFocus(delta: number): void {
    const n = this.task.candidates.length;
    if (n === 0) return;
    this.focusIndex = (this.focusIndex + delta + n) % n;
  }

  get complete(): boolean {
    return [...this.decisions.values()].every((d) => d !== null);
  }

  get undecided(): number[] {
    return [...this.decisions.entries()]
      .filter(([, d]) => d === null)
      .map(([tail]) => tail);
  }

  toDecisions(): LabelDecision[] {
    return this.task.candidates.map((tail) => ({
      tail,
      label: this.decisions.get(tail) ?? "none",
    }));
  }

  toSubmission(annotator: string): LabelSubmission {
    if (!this.complete) {
      throw new Error(`undecided candidates: ${this.undecided.join(", ")}`);
    }
    return {
      task_id: this.task.task_id,
      annotator,
      decisions: this.toDecisions(),
    };
  }

  validate(): RuleVerdict {
    return validateSubmission({
      head: { id: this.task.head, type: this.task.head_type },
      candidates: this.task.candidate_states.map((c) => ({
        id: c.id,
        type: c.type,
        existing_outgoing: c.has_outgoing,
      })),
      decisions: this.toDecisions(),
    });
  }
}
