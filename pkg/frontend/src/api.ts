// Typed client for the versioned annotation API.

import type {
  ErrorPayload,
  LabelSubmission,
  Progress,
  RunInfo,
  SubmitResult,
  TaskPayload,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly payload: ErrorPayload,
  ) {
    super(payload.message);
  }
}

export interface ClientOptions {
  baseUrl?: string;
  annotator: string;
  fetchImpl?: typeof fetch;
}

export class AnnotationClient {
  private readonly base: string;
  private readonly annotator: string;
  private readonly fetchImpl: typeof fetch;

  constructor(options: ClientOptions) {
    this.base = (options.baseUrl ?? "").replace(/\/$/, "") + "/api/v1";
    this.annotator = options.annotator;
    this.fetchImpl = options.fetchImpl ?? fetch;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.base}${path}`, {
      ...init,
      headers: {
        "Content-Type": "application/json",
        "X-Annotator": this.annotator,
        ...(init?.headers ?? {}),
      },
    });
    const body = await response.json();
    if (!response.ok) {
      throw new ApiError(response.status, body as ErrorPayload);
    }
    return body as T;
  }

  fetchQueue(limit = 10): Promise<TaskPayload[]> {
    return this.request(`/queue?limit=${limit}`);
  }

  submitLabels(submission: LabelSubmission): Promise<SubmitResult> {
    return this.request("/labels", {
      method: "POST",
      body: JSON.stringify(submission),
    });
  }

  fetchProgress(): Promise<Progress> {
    return this.request("/progress");
  }

  fetchRun(): Promise<RunInfo> {
    return this.request("/run");
  }

  fetchDoc(docId: string): Promise<{ doc_id: string }> {
    return this.request(`/doc/${encodeURIComponent(docId)}`);
  }
}
