/**
 * Typed client for the portal HTTP API.
 *
 * Every mutating call carries a client-generated X-Request-Id so retries are
 * idempotent to trace; server errors surface verbatim as ApiError with the
 * structured {code, message, details} body.
 */

import type { NormalizedBox } from "./geometry.js";

export interface Detection {
  box: { x_min: number; y_min: number; x_max: number; y_max: number };
  confidence: number;
}

export interface Task {
  task_id: string;
  image_id: string;
  detections: Detection[];
  state: "open" | "closed";
  created_at: number;
}

export interface Verdict {
  verifier: string;
  decision: "approve" | "reject";
  at: number;
}

export interface Submission {
  submission_id: string;
  task_id: string;
  annotator: string;
  payload: {
    missed_boxes: { box: unknown; normalized_box?: NormalizedBox }[];
    false_positive_flags: number[];
  };
  state: "submitted" | "verified" | "rejected";
  verdicts: Verdict[];
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public details: Record<string, unknown> = {},
  ) {
    super(message);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

let requestCounter = 0;

export function nextRequestId(): string {
  requestCounter += 1;
  return `req-${Date.now().toString(36)}-${requestCounter}`;
}

/** What the store needs from the network layer; mocked in tests. */
export interface PortalApi {
  openTasks(): Promise<Task[]>;
  imageUrl(imageId: string): string;
  submitAnnotation(
    taskId: string,
    missedBoxes: NormalizedBox[],
    falsePositiveFlags: number[],
  ): Promise<Submission>;
  listSubmissions(state?: Submission["state"]): Promise<Submission[]>;
  castVerdict(
    submissionId: string,
    decision: "approve" | "reject",
  ): Promise<Submission>;
  balance(userId: string): Promise<{ user_id: string; balance: number }>;
}

export class PortalClient implements PortalApi {
  constructor(
    private baseUrl: string,
    private token: string,
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const headers: Record<string, string> = {
      Authorization: `Bearer ${this.token}`,
    };
    if (method !== "GET") {
      headers["X-Request-Id"] = nextRequestId();
    }
    let payload: string | undefined;
    if (body !== undefined) {
      headers["Content-Type"] = "application/json";
      payload = JSON.stringify(body);
    }
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers,
      body: payload,
    });
    if (!response.ok) {
      let code = "HttpError";
      let message = `${response.status}`;
      let details: Record<string, unknown> = {};
      try {
        const err = await response.json();
        code = err.code ?? code;
        message = err.message ?? message;
        details = err.details ?? {};
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, code, message, details);
    }
    return (await response.json()) as T;
  }

  openTasks(): Promise<Task[]> {
    return this.request<Task[]>("GET", "/tasks?state=open");
  }

  imageUrl(imageId: string): string {
    return `${this.baseUrl}/images/${imageId}`;
  }

  submitAnnotation(
    taskId: string,
    missedBoxes: NormalizedBox[],
    falsePositiveFlags: number[],
  ): Promise<Submission> {
    return this.request<Submission>("POST", `/tasks/${taskId}/annotations`, {
      missed_boxes: missedBoxes.map((box) => ({ box })),
      false_positive_flags: falsePositiveFlags,
    });
  }

  listSubmissions(state?: Submission["state"]): Promise<Submission[]> {
    const suffix = state ? `?state=${state}` : "";
    return this.request<Submission[]>("GET", `/annotations${suffix}`);
  }

  castVerdict(
    submissionId: string,
    decision: "approve" | "reject",
  ): Promise<Submission> {
    return this.request<Submission>(
      "POST",
      `/annotations/${submissionId}/verdicts`,
      { decision },
    );
  }

  balance(userId: string): Promise<{ user_id: string; balance: number }> {
    return this.request("GET", `/accounts/${userId}/balance`);
  }
}
