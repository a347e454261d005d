// Idempotent submission retry against a scripted fetch: an offline submit is
// queued, the retry lands exactly once, and a 409 after a lost response is
// treated as already delivered (no duplicate).

import { describe, expect, it } from "vitest";

import { AnnotationClient } from "../src/api.js";
import { SubmitQueue } from "../src/queue.js";
import type { LabelSubmission } from "../src/types.js";

type Script = Array<
  | { kind: "network-error" }
  | { kind: "response"; status: number; body: unknown }
>;

function scriptedFetch(script: Script, log: string[]): typeof fetch {
  return async (input: RequestInfo | URL, init?: RequestInit) => {
    log.push(`${init?.method ?? "GET"} ${String(input)}`);
    const step = script.shift();
    if (!step) throw new Error("fetch called beyond the script");
    if (step.kind === "network-error") {
      throw new TypeError("fetch failed");
    }
    return new Response(JSON.stringify(step.body), {
      status: step.status,
      headers: { "Content-Type": "application/json" },
    });
  };
}

const submission: LabelSubmission = {
  task_id: "task-000042",
  annotator: "a1",
  decisions: [{ tail: 1, label: "none" }],
};

describe("SubmitQueue", () => {
  it("queues on network failure and delivers exactly once on flush", async () => {
    const log: string[] = [];
    const script: Script = [
      { kind: "network-error" },
      { kind: "response", status: 200,
        body: { accepted: true, task_id: submission.task_id,
                iteration_advanced: false } },
    ];
    const client = new AnnotationClient({
      annotator: "a1", fetchImpl: scriptedFetch(script, log),
    });
    const queue = new SubmitQueue(client);
    const first = await queue.submit(submission);
    expect(first.status).toBe("queued");
    expect(queue.pendingCount).toBe(1);
    const flushed = await queue.flush();
    expect(flushed).toEqual([
      { status: "accepted",
        result: { accepted: true, task_id: submission.task_id,
                  iteration_advanced: false } },
    ]);
    expect(queue.pendingCount).toBe(0);
    expect(log).toHaveLength(2);
  });

  it("treats a conflict after reconnect as already delivered", async () => {
    // the first POST reached the server but the response was lost
    const log: string[] = [];
    const script: Script = [
      { kind: "network-error" },
      { kind: "response", status: 409,
        body: { code: "conflict", rule: null,
                message: "task is already labeled" } },
    ];
    const client = new AnnotationClient({
      annotator: "a1", fetchImpl: scriptedFetch(script, log),
    });
    const queue = new SubmitQueue(client);
    await queue.submit(submission);
    const flushed = await queue.flush();
    expect(flushed).toEqual([{ status: "already-labeled" }]);
    expect(queue.pendingCount).toBe(0);
  });

  it("does not enqueue the same task twice while offline", async () => {
    const log: string[] = [];
    const script: Script = [
      { kind: "network-error" },
      { kind: "network-error" },
    ];
    const client = new AnnotationClient({
      annotator: "a1", fetchImpl: scriptedFetch(script, log),
    });
    const queue = new SubmitQueue(client);
    await queue.submit(submission);
    await queue.submit(submission);
    expect(queue.pendingCount).toBe(1);
  });

  it("propagates constraint rejections without retrying", async () => {
    const log: string[] = [];
    const script: Script = [
      { kind: "response", status: 400,
        body: { code: "constraint_violation", rule: "single-outgoing",
                message: "proposition 1 already supports proposition 0" } },
    ];
    const client = new AnnotationClient({
      annotator: "a1", fetchImpl: scriptedFetch(script, log),
    });
    const queue = new SubmitQueue(client);
    const outcome = await queue.submit(submission);
    expect(outcome).toEqual({
      status: "rejected", rule: "single-outgoing",
      message: "proposition 1 already supports proposition 0",
    });
    expect(queue.pendingCount).toBe(0);
  });
});
