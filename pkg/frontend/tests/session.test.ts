import { describe, expect, it } from "vitest";

import { ReviewApi } from "../src/api.js";
import { ReviewSession, SessionState } from "../src/session.js";
import { FakeServer, makeTasks } from "./fake_server.js";

function makeSession(server: FakeServer, reviewer = "alice") {
  const states: SessionState[] = [];
  const api = new ReviewApi("http://fake", server.fetch);
  const session = new ReviewSession(api, reviewer, (s) => states.push(s));
  return { session, states, api };
}

describe("ReviewSession", () => {
  it("rejects an empty reviewer id", () => {
    const api = new ReviewApi("http://fake", new FakeServer({ tasks: [] }).fetch);
    expect(() => new ReviewSession(api, "")).toThrow();
  });

  it("start() fetches the first task and the counters", async () => {
    const { session } = makeSession(new FakeServer({ tasks: makeTasks(4) }));
    await session.start();
    const s = session.snapshot;
    expect(s.screen.kind).toBe("review");
    expect(session.currentTask?.task_id).toBe("rt-s000");
    expect(s.done).toBe(0);
    expect(s.remaining).toBe(4);
    expect(s.busy).toBe(false);
  });

  it("submit posts the verdict before requesting the next task", async () => {
    const server = new FakeServer({ tasks: makeTasks(2) });
    const { session } = makeSession(server);
    await session.start();
    await session.submit(true);
    expect(server.log).toEqual([
      "next:alice",
      "submit:alice:rt-s000:true",
      "next:alice",
    ]);
    expect(session.currentTask?.task_id).toBe("rt-s001");
    expect(session.snapshot.done).toBe(1);
  });

  it("walks to the completion screen", async () => {
    const server = new FakeServer({ tasks: makeTasks(3) });
    const { session } = makeSession(server);
    await session.start();
    await session.submit(true);
    await session.submit(false);
    await session.submit(true);
    const s = session.snapshot;
    expect(s.screen.kind).toBe("done");
    expect(s.done).toBe(3);
    expect(s.remaining).toBe(0);
    expect(server.verdicts.get("rt-s001")?.get("alice")).toBe(false);
  });

  it("is optimistic: done bumps immediately, authoritative counts win", async () => {
    const server = new FakeServer({ tasks: makeTasks(2) });
    const { session, states } = makeSession(server);
    await session.start();
    states.length = 0;
    await session.submit(true);
    // first emitted state is the optimistic one, before the POST resolves
    expect(states[0].done).toBe(1);
    expect(states[0].busy).toBe(true);
    expect(states[states.length - 1].done).toBe(1);
  });

  it("rolls back and shows a notice on a 409 conflict", async () => {
    const server = new FakeServer({ tasks: makeTasks(2) });
    const { session, states } = makeSession(server);
    await session.start();
    server.failOnce(409);
    states.length = 0;
    await session.submit(true);

    const rolledBack = states.find((s) => s.notice !== null);
    expect(rolledBack).toBeDefined();
    expect(rolledBack!.done).toBe(0);
    expect(rolledBack!.notice).toMatch(/discarded/i);
    // the flow moved on to a re-fetched task, verdict dropped
    expect(session.snapshot.screen.kind).toBe("review");
    expect(server.verdicts.get("rt-s000")!.size).toBe(0);
    expect(server.log.filter((l) => l.startsWith("next:")).length).toBe(2);
  });

  it("keeps reviewing after a conflict (no stuck busy flag)", async () => {
    const server = new FakeServer({ tasks: makeTasks(2) });
    const { session } = makeSession(server);
    await session.start();
    server.failOnce(409);
    await session.submit(true);
    expect(session.snapshot.busy).toBe(false);
    await session.submit(true);
    expect(session.snapshot.done).toBe(1);
  });

  it("surfaces non-conflict failures as the error screen", async () => {
    const server = new FakeServer({ tasks: makeTasks(2) });
    const { session } = makeSession(server);
    await session.start();
    server.failOnce(500);
    await session.submit(true);
    const s = session.snapshot;
    expect(s.screen.kind).toBe("error");
    expect(s.done).toBe(0); // rolled back
  });

  it("ignores submit while another request is in flight", async () => {
    const server = new FakeServer({ tasks: makeTasks(3) });
    const { session } = makeSession(server);
    await session.start();
    const first = session.submit(true);
    const second = session.submit(true); // double-click; must be a no-op
    await Promise.all([first, second]);
    expect(server.log.filter((l) => l.startsWith("submit:")).length).toBe(1);
    expect(session.snapshot.done).toBe(1);
  });

  it("ignores submit on the completion screen", async () => {
    const server = new FakeServer({ tasks: makeTasks(1) });
    const { session } = makeSession(server);
    await session.start();
    await session.submit(true);
    expect(session.snapshot.screen.kind).toBe("done");
    await session.submit(true);
    expect(server.log.filter((l) => l.startsWith("submit:")).length).toBe(1);
  });

  it("skip advances without judging and counts separately", async () => {
    const server = new FakeServer({ tasks: makeTasks(3) });
    const { session } = makeSession(server);
    await session.start();
    await session.skip();
    const s = session.snapshot;
    expect(session.currentTask?.task_id).toBe("rt-s001");
    expect(s.skipped).toBe(1);
    expect(s.done).toBe(0);
    expect(server.log).toEqual(["next:alice", "next:alice"]);
    expect(server.verdicts.get("rt-s000")!.size).toBe(0);
  });

  it("skipped tasks stay excluded for the rest of the session", async () => {
    const server = new FakeServer({ tasks: makeTasks(2) });
    const { session } = makeSession(server);
    await session.start();
    await session.skip();
    await session.submit(true);
    // only the skipped task remains on the server, but we excluded it
    const s = session.snapshot;
    expect(s.screen.kind).toBe("done");
    expect(s.skipped).toBe(1);
    expect(s.done).toBe(1);
  });

  it("a session with no tasks at all lands on the completion screen", async () => {
    const { session } = makeSession(new FakeServer({ tasks: [] }));
    await session.start();
    expect(session.snapshot.screen.kind).toBe("done");
    expect(session.snapshot.done).toBe(0);
  });

  it("start() failure becomes the error screen", async () => {
    const api = new ReviewApi("http://fake", () => Promise.reject(new TypeError("offline")));
    const session = new ReviewSession(api, "alice");
    await session.start();
    expect(session.snapshot.screen.kind).toBe("error");
  });
});

describe("ReviewApi", () => {
  it("builds image URLs under the service origin", () => {
    const api = new ReviewApi("http://h:1/", new FakeServer({ tasks: [] }).fetch);
    expect(api.imageUrl("priors/a_rgb.png")).toBe("http://h:1/api/images/priors/a_rgb.png");
  });

  it("stats are returned verbatim", async () => {
    const server = new FakeServer({ tasks: makeTasks(1) });
    for (const r of ["a", "b", "c"]) {
      server.verdicts.get("rt-s000")!.set(r, true);
    }
    const api = new ReviewApi("http://fake", server.fetch);
    expect(await api.stats()).toEqual({
      completed_tasks: 1,
      success_rate: 1,
      agreement_rate: 1,
      total_tasks: 1,
      total_verdicts: 3,
    });
  });

  it("wraps HTTP errors with their status", async () => {
    const api = new ReviewApi("http://fake", new FakeServer({ tasks: [] }).fetch);
    await expect(api.next("")).rejects.toMatchObject({ status: 400 });
  });
});
