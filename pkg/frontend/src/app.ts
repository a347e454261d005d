// Single-page annotator: renders the current task's window with the head
// distinguished, one decision control per candidate tail, keyboard-first
// labeling, inline rule violations, and run progress.

import { AnnotationClient, ApiError } from "./api.js";
import { highlightMarkers } from "./markers.js";
import { decisionAllowed } from "./rules.js";
import { SubmitQueue } from "./queue.js";
import { TaskState, taskSchemaError, type DraftStore } from "./state.js";
import type { Decision, Progress, TaskPayload } from "./types.js";

const DECISION_KEYS: Record<string, Decision> = {
  s: "support",
  a: "attack",
  n: "none",
};

export class AnnotatorApp {
  private state: TaskState | null = null;
  private queueBuffer: TaskPayload[] = [];
  private readonly client: AnnotationClient;
  private readonly submitQueue: SubmitQueue;
  private banner = "";

  constructor(
    private readonly root: HTMLElement,
    private readonly annotator: string,
    private readonly drafts: DraftStore | null = null,
    client?: AnnotationClient,
  ) {
    this.client = client ?? new AnnotationClient({ annotator });
    this.submitQueue = new SubmitQueue(this.client);
  }

  async start(): Promise<void> {
    document.addEventListener("keydown", (e) => this.onKey(e));
    window.addEventListener("online", () => void this.flushPending());
    await this.nextTask();
  }

  private async nextTask(): Promise<void> {
    if (this.queueBuffer.length === 0) {
      try {
        this.queueBuffer = await this.client.fetchQueue(5);
      } catch (error) {
        if (error instanceof ApiError && error.status === 409) {
          this.state = null;
          this.banner = "";
          await this.render(true);
          return;
        }
        this.banner = `queue fetch failed: ${String(error)}`;
        await this.render();
        return;
      }
    }
    let task = this.queueBuffer.shift();
    while (task) {
      const schemaError = taskSchemaError(task);
      if (!schemaError) break;
      this.banner = `skipped malformed task: ${schemaError}`;
      task = this.queueBuffer.shift();
    }
    this.state = task ? new TaskState(task, this.drafts) : null;
    if (!this.banner && this.state === null) this.banner = "";
    await this.render(this.state === null && this.banner === "");
  }

  private onKey(event: KeyboardEvent): void {
    if (!this.state) return;
    const decision = DECISION_KEYS[event.key.toLowerCase()];
    if (decision) {
      const tail = this.state.focusedCandidate;
      if (tail !== undefined) {
        const candidate = this.state.task.candidate_states.find(
          (c) => c.id === tail,
        )!;
        const verdict = decisionAllowed(
          this.state.task.head_type, {
            id: candidate.id,
            type: candidate.type,
            existing_outgoing: candidate.has_outgoing,
          }, decision);
        if (!verdict.ok) {
          this.banner = `not allowed here: rule ${verdict.rule}`;
          void this.render();
          return;
        }
      }
      this.state.decideFocused(decision);
      this.banner = "";
      void this.render();
    } else if (event.key === "j" || event.key === "ArrowDown") {
      this.state.moveFocus(1);
      void this.render();
    } else if (event.key === "k" || event.key === "ArrowUp") {
      this.state.moveFocus(-1);
      void this.render();
    } else if (event.key === "Enter") {
      void this.submit();
    }
  }

  async submit(): Promise<void> {
    if (!this.state) return;
    if (!this.state.complete) {
      this.banner = `decide every candidate first (missing: ${this.state.undecided.join(", ")})`;
      await this.render();
      return;
    }
    const verdict = this.state.validate();
    if (!verdict.ok) {
      this.banner = `blocked by rule ${verdict.rule}`;
      await this.render();
      return;
    }
    const delivery = await this.submitQueue.submit(
      this.state.toSubmission(this.annotator),
    );
    if (delivery.status === "rejected") {
      this.banner = `server rejected (${delivery.rule}): ${delivery.message}`;
      await this.render();
      return;
    }
    if (delivery.status === "queued") {
      this.banner = "offline: submission queued, will retry";
      await this.render();
      return;
    }
    this.state.clearDraft();
    await this.nextTask();
  }

  async flushPending(): Promise<void> {
    await this.submitQueue.flush();
  }

  private async render(done = false): Promise<void> {
    let progress: Progress | null = null;
    try {
      progress = await this.client.fetchProgress();
    } catch {
      // progress is decoration; keep annotating without it
    }
    this.root.innerHTML = this.html(progress, done);
    this.wireClicks();
  }

  private wireClicks(): void {
    this.root.querySelectorAll<HTMLButtonElement>("button[data-tail]").forEach(
      (button) => {
        button.addEventListener("click", () => {
          const tail = Number(button.dataset.tail);
          const label = button.dataset.label as Decision;
          this.state?.decide(tail, label);
          this.banner = "";
          void this.render();
        });
      },
    );
    this.root.querySelector<HTMLButtonElement>("#submit")?.addEventListener(
      "click", () => void this.submit());
  }

  private html(progress: Progress | null, done: boolean): string {
    const head = this.progressHtml(progress);
    if (done) {
      return `${head}<section class="panel done-panel">
        <h2>All annotation rounds are complete.</h2></section>`;
    }
    if (!this.state) {
      return `${head}<section class="panel">
        <p>No pending tasks; waiting for the next selection round.</p>
        ${this.bannerHtml()}</section>`;
    }
    const task = this.state.task;
    const candidates = new Set(task.candidates);
    const rows = task.window.map((prop) => {
      const isHead = prop.id === task.head;
      const isCandidate = candidates.has(prop.id);
      const focused = this.state!.focusedCandidate === prop.id;
      const decision = this.state!.decisionFor(prop.id);
      const classes = [
        "prop",
        isHead ? "head" : "",
        isCandidate ? "candidate" : "",
        focused ? "focused" : "",
      ].filter(Boolean).join(" ");
      const controls = isCandidate
        ? `<span class="controls">${(["support", "attack", "none"] as Decision[])
            .map((label) =>
              `<button data-tail="${prop.id}" data-label="${label}"
                class="${decision === label ? "chosen" : ""}">${label}</button>`)
            .join("")}</span>`
        : isHead ? `<span class="head-tag">head</span>` : "";
      return `<li class="${classes}" data-prop="${prop.id}">
        <span class="pid">#${prop.id}</span>
        <span class="ptype">${prop.type}</span>
        <span class="text">${highlightMarkers(prop.text)}</span>
        ${controls}</li>`;
    }).join("");
    return `${head}
      <section class="panel">
        <h2>${task.doc_id} - which propositions support or attack #${task.head}?</h2>
        <ol class="window">${rows}</ol>
        <button id="submit" ${this.state.complete ? "" : "disabled"}>submit (Enter)</button>
        ${this.bannerHtml()}
        <p class="keys">keys: [s]upport [a]ttack [n]one - j/k move - Enter submit</p>
      </section>`;
  }

  private bannerHtml(): string {
    return this.banner ? `<p class="banner" role="alert">${this.banner}</p>` : "";
  }

  private progressHtml(progress: Progress | null): string {
    if (!progress) return `<header class="progress">progress unavailable</header>`;
    const kappa = progress.kappa === null ? "n/a" : progress.kappa.toFixed(3);
    return `<header class="progress">
      iteration ${progress.iteration}/${progress.iterations_total}
      - labeled ${progress.labeled_size}
      - pending ${progress.pending}
      - agreement ${kappa}
    </header>`;
  }
}
