import { ApiError, ReviewApi } from "./api.js";
import type { ReviewTask } from "./types.js";

export type Screen =
  | { kind: "loading" }
  | { kind: "review"; task: ReviewTask }
  | { kind: "done" }
  | { kind: "error"; message: string };

export interface SessionState {
  screen: Screen;
  /** A request is in flight; all controls must be disabled. */
  busy: boolean;
  done: number;
  remaining: number;
  skipped: number;
  /** One-shot message, e.g. a discarded verdict. Cleared on the next action. */
  notice: string | null;
}

export type StateListener = (state: SessionState) => void;

/** Client-side review session: one reviewer, one task on screen at a time.
 *
 * The flow invariants live here, not in the DOM layer:
 * - the verdict POST settles before the next task is requested;
 * - at most one request in flight (`busy` guards double submission);
 * - a rejected verdict is discarded with a notice and the session moves on;
 * - skipped tasks are excluded client-side only, the server keeps no skip
 *   state, so the exclude list rides along on every fetch.
 */
export class ReviewSession {
  readonly reviewerId: string;

  private readonly api: ReviewApi;
  private readonly listener: StateListener;
  private readonly excluded: string[] = [];
  private state: SessionState = {
    screen: { kind: "loading" },
    busy: false,
    done: 0,
    remaining: 0,
    skipped: 0,
    notice: null,
  };

  constructor(api: ReviewApi, reviewerId: string, listener: StateListener = () => {}) {
    if (!reviewerId) throw new Error("reviewer id must be non-empty");
    this.api = api;
    this.reviewerId = reviewerId;
    this.listener = listener;
  }

  get snapshot(): SessionState {
    return { ...this.state, screen: this.state.screen };
  }

  get currentTask(): ReviewTask | null {
    return this.state.screen.kind === "review" ? this.state.screen.task : null;
  }

  private update(patch: Partial<SessionState>): void {
    this.state = { ...this.state, ...patch };
    this.listener(this.snapshot);
  }

  private async fetchNext(): Promise<void> {
    const resp = await this.api.next(this.reviewerId, this.excluded);
    this.update({
      screen: resp.task ? { kind: "review", task: resp.task } : { kind: "done" },
      busy: false,
      done: resp.done,
      remaining: resp.remaining,
    });
  }

  async start(): Promise<void> {
    this.update({ screen: { kind: "loading" }, busy: true, notice: null });
    try {
      await this.fetchNext();
    } catch (err) {
      this.update({ screen: { kind: "error", message: String(err) }, busy: false });
    }
  }

  /** Post the verdict for the displayed task, then advance.
   *
   * Optimistic: the done counter bumps immediately and rolls back if the
   * server rejects the verdict. A conflict (409) means someone else filled
   * the task's last slot first; the verdict is dropped with a notice.
   */
  async submit(success: boolean): Promise<void> {
    const task = this.currentTask;
    if (task === null || this.state.busy) return;

    this.update({ busy: true, notice: null, done: this.state.done + 1 });
    try {
      await this.api.submit({
        task_id: task.task_id,
        reviewer: this.reviewerId,
        success,
      });
    } catch (err) {
      this.update({ done: this.state.done - 1 });
      if (err instanceof ApiError && err.status === 409) {
        this.update({ notice: "Verdict discarded: this task was already fully reviewed." });
      } else {
        this.update({ screen: { kind: "error", message: String(err) }, busy: false });
        return;
      }
    }
    try {
      await this.fetchNext();
    } catch (err) {
      this.update({ screen: { kind: "error", message: String(err) }, busy: false });
    }
  }

  /** Pass over the displayed task without judging it (broken image). */
  async skip(): Promise<void> {
    const task = this.currentTask;
    if (task === null || this.state.busy) return;

    this.excluded.push(task.task_id);
    this.update({ busy: true, notice: null, skipped: this.state.skipped + 1 });
    try {
      await this.fetchNext();
    } catch (err) {
      this.update({ screen: { kind: "error", message: String(err) }, busy: false });
    }
  }
}
