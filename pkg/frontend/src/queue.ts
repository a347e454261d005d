// Submission delivery with retry. task_id makes retries idempotent: a 409
// conflict after a network failure means the earlier attempt actually landed,
// so it is treated as delivered rather than duplicated.

import { AnnotationClient, ApiError } from "./api.js";
import type { LabelSubmission, SubmitResult } from "./types.js";

export type Delivery =
  | { status: "accepted"; result: SubmitResult }
  | { status: "already-labeled" }
  | { status: "rejected"; rule: string | null; message: string }
  | { status: "queued" };

export class SubmitQueue {
  private readonly pending: LabelSubmission[] = [];

  constructor(private readonly client: AnnotationClient) {}

  get pendingCount(): number {
    return this.pending.length;
  }

  async submit(submission: LabelSubmission): Promise<Delivery> {
    try {
      const result = await this.client.submitLabels(submission);
      return { status: "accepted", result };
    } catch (error) {
      if (error instanceof ApiError) {
        if (error.status === 409) {
          return { status: "already-labeled" };
        }
        return {
          status: "rejected",
          rule: error.payload.rule,
          message: error.payload.message,
        };
      }
      // network failure: hold for retry; never enqueue the same task twice
      if (!this.pending.some((p) => p.task_id === submission.task_id)) {
        this.pending.push(submission);
      }
      return { status: "queued" };
    }
  }

  async flush(): Promise<Delivery[]> {
    const results: Delivery[] = [];
    while (this.pending.length > 0) {
      const outcome = await this.submit(this.pending.shift()!);
      results.push(outcome);
      if (outcome.status === "queued") {
        break; // still offline; submit() re-queued it
      }
    }
    return results;
  }
}
