// Live round-trip against the real annotation service: labels submitted
// through the client land in the labeled store, unblock the AL iteration,
// and survive a service restart.

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { AnnotationClient } from "../src/api.js";
import { TaskState } from "../src/state.js";
import type { TaskPayload } from "../src/types.js";

const repoRoot = fileURLToPath(new URL("../..", import.meta.url));
const workDir = mkdtempSync(join(tmpdir(), "argrel-ui-"));
const stateDir = join(workDir, "state");
const FAST = [
  "--iterations", "2", "--budget", "5", "--strategy", "random_prop",
  "--seed", "0", "--dim", "16", "--layers", "1", "--heads", "2",
  "--ffn-mult", "2", "--max-positions", "128", "--epochs", "1",
  "--learning-rate", "0.003", "--warmup-steps", "5",
  "--window", "4", "--max-tokens", "96",
];

let server: ChildProcess | null = null;
let baseUrl = "";

function synth(out: string, seed: string, docs: string) {
  const result = spawnSync(
    "python3",
    ["-m", "argrel.cli", "synth", "--out", out, "--seed", seed,
     "--n-docs", docs, "--props-per-doc", "5", "--relation-rate", "0.6",
     "--marker-plant-prob", "0.9", "--vocab-size", "40"],
    { cwd: repoRoot, encoding: "utf-8" },
  );
  expect(result.status).toBe(0);
}

async function startServer(): Promise<string> {
  const child = spawn(
    "python3",
    ["-m", "argrel.cli", "serve",
     "--pool", join(workDir, "pool.jsonl"),
     "--test", join(workDir, "test.jsonl"),
     "--port", "0", "--state-dir", stateDir,
     "--run-dir", join(workDir, `run-${Date.now()}`),
     ...FAST],
    { cwd: repoRoot },
  );
  server = child;
  return await new Promise<string>((resolve, reject) => {
    let buffer = "";
    const timer = setTimeout(
      () => reject(new Error(`server did not announce a port: ${buffer}`)),
      60_000,
    );
    child.stdout!.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
      const match = buffer.match(/http:\/\/127\.0\.0\.1:(\d+)\//);
      if (match) {
        clearTimeout(timer);
        resolve(`http://127.0.0.1:${match[1]}`);
      }
    });
    child.stderr!.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
    });
    child.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`server exited early (${code}): ${buffer}`));
    });
  });
}

async function stopServer(): Promise<void> {
  if (!server) return;
  const child = server;
  server = null;
  await new Promise<void>((resolve) => {
    child.on("exit", () => resolve());
    child.kill("SIGKILL");
  });
}

beforeAll(async () => {
  synth(join(workDir, "pool.jsonl"), "51", "6");
  synth(join(workDir, "test.jsonl"), "52", "4");
  baseUrl = await startServer();
}, 120_000);

afterAll(async () => {
  await stopServer();
});

function client() {
  return new AnnotationClient({ baseUrl, annotator: "ui-annotator" });
}

async function labelEverythingOnce(api: AnnotationClient): Promise<number> {
  let advanced = 0;
  for (;;) {
    let queue: TaskPayload[];
    try {
      queue = await api.fetchQueue(50);
    } catch {
      break; // 409: run complete
    }
    if (queue.length === 0) break;
    for (const task of queue) {
      const state = new TaskState(task);
      for (const candidate of task.candidates) {
        state.decide(candidate, "none");
      }
      const verdict = state.validate();
      expect(verdict.ok).toBe(true);
      const result = await api.submitLabels(state.toSubmission("ui-annotator"));
      expect(result.accepted).toBe(true);
      if (result.iteration_advanced) advanced += 1;
    }
  }
  return advanced;
}

describe("label round-trip against a live service", () => {
  it("serves schema-valid tasks", async () => {
    const api = client();
    const queue = await api.fetchQueue(3);
    expect(queue.length).toBeGreaterThan(0);
    for (const task of queue) {
      expect(task.task_id).toMatch(/^task-\d+$/);
      expect(task.window.length).toBeGreaterThan(0);
      const windowIds = new Set(task.window.map((w) => w.id));
      expect(windowIds.has(task.head)).toBe(true);
      for (const candidate of task.candidates) {
        expect(windowIds.has(candidate)).toBe(true);
      }
      expect(task.candidate_states.map((c) => c.id)).toEqual(task.candidates);
    }
  }, 60_000);

  it("submitted labels unblock the AL iteration", async () => {
    const api = client();
    const before = await api.fetchProgress();
    expect(before.iteration).toBe(1);
    const advanced = await labelEverythingOnce(api);
    expect(advanced).toBeGreaterThan(0);
    const after = await api.fetchProgress();
    expect(after.labeled_size).toBeGreaterThanOrEqual(5);
    expect(after.iteration).toBeGreaterThan(1);
  }, 120_000);

  it("labels survive a service restart and the run can finish", async () => {
    const api = client();
    const before = await api.fetchProgress();
    await stopServer();
    baseUrl = await startServer();
    const revived = client();
    const after = await revived.fetchProgress();
    expect(after.labeled_size).toBe(before.labeled_size);
    expect(after.iteration).toBe(before.iteration);
    await labelEverythingOnce(revived);
    const final = await revived.fetchProgress();
    expect(final.done).toBe(true);
    expect(final.records).toHaveLength(2);
    // the durable event log is the source of truth on disk
    const events = readFileSync(join(stateDir, "events.jsonl"), "utf-8")
      .trim().split("\n").map((line) => JSON.parse(line));
    expect(events.some((e) => e.type === "submission")).toBe(true);
    expect(events.filter((e) => e.type === "iteration_complete")).toHaveLength(2);
  }, 180_000);
});
