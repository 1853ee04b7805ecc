import {
  ApiClient,
  DuplicateChoiceError,
  NetworkError,
  UnknownVolunteerError,
} from "./api.js";
import type { AssignmentItem, AssignmentView, Dimension, RubricCriterion, Verdict } from "./types.js";

export type Phase =
  | "idle"
  | "loading"
  | "ready"
  | "complete"
  | "blocked" // unknown volunteer: no way forward
  | "load-failed"; // network trouble: offer retry

export interface SessionSnapshot {
  phase: Phase;
  view: AssignmentView | null;
  rubric: RubricCriterion[];
  currentItemId: string | null;
  inFlightItemId: string | null;
  notice: string | null;
}

/** Client-side session: optimistic verdict recording reconciled against the
 * server, at most one submission in flight, server state is always truth. */
export class AnnotationSession {
  private phase: Phase = "idle";
  private view: AssignmentView | null = null;
  private rubric: RubricCriterion[] = [];
  private currentItemId: string | null = null;
  private inFlightItemId: string | null = null;
  private notice: string | null = null;
  private dimension: Dimension | null = null;
  private readonly listeners = new Set<() => void>();

  constructor(private readonly api: ApiClient) {}

  subscribe(listener: () => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener();
  }

  snapshot(): SessionSnapshot {
    return {
      phase: this.phase,
      view: this.view,
      rubric: this.rubric,
      currentItemId: this.currentItemId,
      inFlightItemId: this.inFlightItemId,
      notice: this.notice,
    };
  }

  item(itemId: string): AssignmentItem | undefined {
    return this.view?.items.find((item) => item.item_id === itemId);
  }

  private firstPendingId(): string | null {
    const pending = this.view?.items.find((item) => item.status === "pending");
    return pending ? pending.item_id : null;
  }

  private settlePhase(): void {
    if (!this.view) return;
    const { done, total } = this.view.progress;
    this.phase = done >= total ? "complete" : "ready";
    if (this.currentItemId === null || this.phase === "complete") {
      this.currentItemId = this.firstPendingId();
    }
  }

  async load(dimension: Dimension): Promise<void> {
    this.dimension = dimension;
    this.phase = "loading";
    this.notice = null;
    this.emit();
    try {
      const [view, rubric] = await Promise.all([
        this.api.loadAssignment(dimension),
        this.api.loadRubric(dimension),
      ]);
      this.view = view;
      this.rubric = rubric;
      this.currentItemId = null;
      this.settlePhase();
    } catch (error) {
      if (error instanceof UnknownVolunteerError) {
        this.phase = "blocked";
        this.notice = "This volunteer id is not on the roster.";
      } else {
        this.phase = "load-failed";
        this.notice = "Could not reach the server. Retry when you are back online.";
      }
    }
    this.emit();
  }

  async retry(): Promise<void> {
    if (this.dimension) await this.load(this.dimension);
  }

  select(itemId: string): void {
    if (this.view?.items.some((item) => item.item_id === itemId)) {
      this.currentItemId = itemId;
      this.emit();
    }
  }

  /** Reload the assignment so local state exactly mirrors the server. */
  private async reconcile(): Promise<void> {
    if (!this.dimension) return;
    try {
      this.view = await this.api.loadAssignment(this.dimension);
      this.settlePhase();
    } catch {
      this.notice = "Could not refresh from the server.";
    }
  }

  async choose(itemId: string, verdict: Verdict): Promise<void> {
    if (!this.view || this.inFlightItemId !== null) return;
    const item = this.item(itemId);
    if (!item || item.status === "chosen") return;

    // optimistic: the verdict shows immediately; progress advances on ack
    item.status = "chosen";
    item.verdict = verdict;
    this.inFlightItemId = itemId;
    this.notice = null;
    this.emit();

    try {
      const ack = await this.api.submitChoice(itemId, verdict);
      if (ack.progress) this.view.progress = ack.progress;
      this.currentItemId = this.firstPendingId();
      this.settlePhase();
    } catch (error) {
      if (error instanceof DuplicateChoiceError) {
        // another tab got there first: server truth wins
        this.notice = "This item was already judged; showing the recorded verdict.";
        await this.reconcile();
      } else if (error instanceof NetworkError) {
        // the api layer already retried once; roll the optimistic update back
        item.status = "pending";
        item.verdict = null;
        this.notice = "Submission failed twice; your verdict was not recorded.";
      } else {
        this.notice = "The server rejected the submission.";
        await this.reconcile();
      }
    } finally {
      this.inFlightItemId = null;
      this.emit();
    }
  }
}
