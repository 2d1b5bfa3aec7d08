/**
 * Single client-side store. All state changes flow through here; the DOM
 * layer only renders snapshots and dispatches actions.
 *
 * Role and self-verification rules are enforced locally before any network
 * call, so the client never issues a request the server would reject for
 * authorization reasons; optimistic updates reconcile against the server
 * response and roll back on error.
 */

import type { NormalizedBox } from "./geometry.js";
import type { PortalApi, Submission, Task } from "./api.js";

export interface Session {
  userId: string;
  roles: string[];
}

export interface Draft {
  boxes: NormalizedBox[];
  flags: number[];
}

export interface StoreState {
  tasks: Task[];
  drafts: Record<string, Draft>;
  submissions: Submission[];
  /** submission ids with an in-flight optimistic operation */
  pending: Set<string>;
  balance: number | null;
  lastError: string | null;
}

export class ForbiddenActionError extends Error {}

type Listener = (state: StoreState) => void;

export class AppStore {
  private state: StoreState = {
    tasks: [],
    drafts: {},
    submissions: [],
    pending: new Set(),
    balance: null,
    lastError: null,
  };
  private listeners: Listener[] = [];

  constructor(
    private client: PortalApi,
    readonly session: Session,
  ) {}

  snapshot(): StoreState {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit() {
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }

  private patch(partial: Partial<StoreState>) {
    this.state = { ...this.state, ...partial };
    this.emit();
  }

  // -- roles ------------------------------------------------------------

  get canAnnotate(): boolean {
    return this.session.roles.includes("annotator");
  }

  get canVerify(): boolean {
    return this.session.roles.includes("verifier");
  }

  /** Submissions this user may pass verdicts on: never their own, never twice. */
  verificationQueue(): Submission[] {
    if (!this.canVerify) {
      return [];
    }
    return this.state.submissions.filter(
      (sub) =>
        sub.state === "submitted" &&
        sub.annotator !== this.session.userId &&
        !sub.verdicts.some((v) => v.verifier === this.session.userId) &&
        !this.state.pending.has(sub.submission_id),
    );
  }

  mySubmissions(): Submission[] {
    return this.state.submissions.filter(
      (sub) => sub.annotator === this.session.userId,
    );
  }

  // -- drafts -----------------------------------------------------------

  draftFor(taskId: string): Draft {
    return this.state.drafts[taskId] ?? { boxes: [], flags: [] };
  }

  addDraftBox(taskId: string, box: NormalizedBox | null) {
    if (box === null) {
      return; // degenerate drag, discarded silently
    }
    const draft = this.draftFor(taskId);
    this.patch({
      drafts: {
        ...this.state.drafts,
        [taskId]: { ...draft, boxes: [...draft.boxes, box] },
      },
    });
  }

  removeDraftBox(taskId: string, index: number) {
    const draft = this.draftFor(taskId);
    this.patch({
      drafts: {
        ...this.state.drafts,
        [taskId]: { ...draft, boxes: draft.boxes.filter((_, i) => i !== index) },
      },
    });
  }

  toggleFlag(taskId: string, detectionIndex: number) {
    const draft = this.draftFor(taskId);
    const flags = draft.flags.includes(detectionIndex)
      ? draft.flags.filter((f) => f !== detectionIndex)
      : [...draft.flags, detectionIndex].sort((a, b) => a - b);
    this.patch({
      drafts: { ...this.state.drafts, [taskId]: { ...draft, flags } },
    });
  }

  // -- network actions ----------------------------------------------------

  async refreshTasks(): Promise<void> {
    const tasks = await this.client.openTasks();
    this.patch({ tasks });
  }

  async refreshBalance(): Promise<void> {
    const { balance } = await this.client.balance(this.session.userId);
    this.patch({ balance });
  }

  async submitDraft(taskId: string): Promise<Submission> {
    if (!this.canAnnotate) {
      throw new ForbiddenActionError("annotator role required");
    }
    const draft = this.draftFor(taskId);
    if (draft.boxes.length === 0 && draft.flags.length === 0) {
      throw new ForbiddenActionError("draft is empty");
    }
    // optimistic card: appears as pending until the server answers
    const localId = `local-${taskId}-${Date.now().toString(36)}`;
    const optimistic: Submission = {
      submission_id: localId,
      task_id: taskId,
      annotator: this.session.userId,
      payload: {
        missed_boxes: draft.boxes.map((box) => ({ box, normalized_box: box })),
        false_positive_flags: draft.flags,
      },
      state: "submitted",
      verdicts: [],
    };
    this.patch({
      submissions: [...this.state.submissions, optimistic],
      pending: new Set([...this.state.pending, localId]),
      lastError: null,
    });
    try {
      const confirmed = await this.client.submitAnnotation(
        taskId,
        draft.boxes,
        draft.flags,
      );
      const pending = new Set(this.state.pending);
      pending.delete(localId);
      this.patch({
        submissions: this.state.submissions.map((s) =>
          s.submission_id === localId ? confirmed : s,
        ),
        pending,
        drafts: { ...this.state.drafts, [taskId]: { boxes: [], flags: [] } },
      });
      return confirmed;
    } catch (error) {
      const pending = new Set(this.state.pending);
      pending.delete(localId);
      this.patch({
        submissions: this.state.submissions.filter(
          (s) => s.submission_id !== localId,
        ),
        pending,
        lastError: error instanceof Error ? error.message : String(error),
      });
      throw error;
    }
  }

  async castVerdict(
    submissionId: string,
    decision: "approve" | "reject",
  ): Promise<Submission> {
    if (!this.canVerify) {
      throw new ForbiddenActionError("verifier role required");
    }
    const sub = this.state.submissions.find(
      (s) => s.submission_id === submissionId,
    );
    if (!sub) {
      throw new ForbiddenActionError(`unknown submission ${submissionId}`);
    }
    if (sub.annotator === this.session.userId) {
      throw new ForbiddenActionError("cannot verify your own submission");
    }
    if (sub.verdicts.some((v) => v.verifier === this.session.userId)) {
      throw new ForbiddenActionError("already voted on this submission");
    }
    if (sub.state !== "submitted") {
      throw new ForbiddenActionError(`submission is already ${sub.state}`);
    }
    const previous = this.state.submissions;
    const optimistic: Submission = {
      ...sub,
      verdicts: [
        ...sub.verdicts,
        { verifier: this.session.userId, decision, at: Date.now() / 1000 },
      ],
    };
    this.patch({
      submissions: previous.map((s) =>
        s.submission_id === submissionId ? optimistic : s,
      ),
      pending: new Set([...this.state.pending, submissionId]),
      lastError: null,
    });
    try {
      const confirmed = await this.client.castVerdict(submissionId, decision);
      const pending = new Set(this.state.pending);
      pending.delete(submissionId);
      this.patch({
        submissions: this.state.submissions.map((s) =>
          s.submission_id === submissionId ? confirmed : s,
        ),
        pending,
      });
      return confirmed;
    } catch (error) {
      const pending = new Set(this.state.pending);
      pending.delete(submissionId);
      this.patch({
        submissions: previous,
        pending,
        lastError: error instanceof Error ? error.message : String(error),
      });
      throw error;
    }
  }

  async refreshSubmissions(): Promise<void> {
    const submissions = await this.client.listSubmissions();
    // keep optimistic local cards that the server does not know yet
    const locals = this.state.submissions.filter((s) =>
      s.submission_id.startsWith("local-"),
    );
    this.patch({ submissions: [...submissions, ...locals] });
  }
}
