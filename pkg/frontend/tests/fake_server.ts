// In-memory stand-in for the review service, exposed as a fetch function.
// Mirrors the server's semantics closely enough for client-logic tests:
// per-reviewer ordering, the 3-reviewer cap, duplicate conflicts, stats.

import type { ReviewStats, ReviewTask } from "../src/types.js";

export interface FakeServerOptions {
  /** Tasks in global order; each reviewer sees them in this same order. */
  tasks: ReviewTask[];
  /** Force the next POST to fail with this HTTP status once. */
  failNextSubmit?: number;
}

export class FakeServer {
  readonly tasks: ReviewTask[];
  readonly verdicts = new Map<string, Map<string, boolean>>();
  readonly log: string[] = [];
  private failNextSubmit: number | null;

  constructor(options: FakeServerOptions) {
    this.tasks = options.tasks;
    this.failNextSubmit = options.failNextSubmit ?? null;
    for (const t of this.tasks) this.verdicts.set(t.task_id, new Map());
  }

  failOnce(status: number): void {
    this.failNextSubmit = status;
  }

  get fetch(): typeof fetch {
    return (input, init) => this.handle(String(input), init);
  }

  private json(status: number, body: unknown): Response {
    return new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  }

  private nextFor(reviewer: string, exclude: Set<string>): ReviewTask | null {
    for (const t of this.tasks) {
      const votes = this.verdicts.get(t.task_id)!;
      if (exclude.has(t.task_id)) continue;
      if (votes.has(reviewer)) continue;
      if (votes.size >= 3) continue;
      return t;
    }
    return null;
  }

  private counts(reviewer: string): { done: number; remaining: number } {
    let done = 0;
    let remaining = 0;
    for (const t of this.tasks) {
      const votes = this.verdicts.get(t.task_id)!;
      if (votes.has(reviewer)) done += 1;
      else if (votes.size < 3) remaining += 1;
    }
    return { done, remaining };
  }

  stats(): ReviewStats {
    let completed = 0;
    let majority = 0;
    let unanimous = 0;
    let total = 0;
    for (const votes of this.verdicts.values()) {
      total += votes.size;
      if (votes.size < 3) continue;
      completed += 1;
      const yes = [...votes.values()].filter(Boolean).length;
      if (yes >= 2) majority += 1;
      if (yes === 0 || yes === votes.size) unanimous += 1;
    }
    return {
      completed_tasks: completed,
      success_rate: completed ? majority / completed : null,
      agreement_rate: completed ? unanimous / completed : null,
      total_tasks: this.tasks.length,
      total_verdicts: total,
    };
  }

  private async handle(url: string, init?: RequestInit): Promise<Response> {
    const u = new URL(url, "http://fake");

    if (u.pathname === "/api/review/next") {
      const reviewer = u.searchParams.get("reviewer") ?? "";
      this.log.push(`next:${reviewer}`);
      if (!reviewer) return this.json(400, { error: "reviewer query parameter required" });
      const exclude = new Set((u.searchParams.get("exclude") ?? "").split(",").filter(Boolean));
      const task = this.nextFor(reviewer, exclude);
      return this.json(200, { task, ...this.counts(reviewer) });
    }

    if (u.pathname === "/api/review/verdict" && init?.method === "POST") {
      const doc = JSON.parse(String(init.body));
      this.log.push(`submit:${doc.reviewer}:${doc.task_id}:${doc.success}`);
      if (this.failNextSubmit !== null) {
        const status = this.failNextSubmit;
        this.failNextSubmit = null;
        return this.json(status, { error: `scripted ${status}` });
      }
      const votes = this.verdicts.get(doc.task_id);
      if (!votes) return this.json(404, { error: "unknown task" });
      if (votes.has(doc.reviewer)) return this.json(409, { error: "duplicate verdict" });
      if (votes.size >= 3) return this.json(409, { error: "task full" });
      votes.set(doc.reviewer, doc.success);
      return this.json(200, {
        recorded: true,
        completed: votes.size === 3,
        review: votes.size === 3 ? "accepted" : null,
      });
    }

    if (u.pathname === "/api/review/stats") {
      this.log.push("stats");
      return this.json(200, this.stats());
    }

    return this.json(404, { error: "not found" });
  }
}

export function makeTasks(n: number): ReviewTask[] {
  return Array.from({ length: n }, (_, i) => ({
    task_id: `rt-s${String(i).padStart(3, "0")}`,
    sample_id: `s${String(i).padStart(3, "0")}`,
    left_image: `priors/s${i}_rgb.png`,
    right_image: `images/s${i}.png`,
  }));
}
