import { ReviewApi } from "./api.js";
import { bindReviewKeyboard } from "./keyboard.js";
import { ReviewSession, SessionState } from "./session.js";
import type { ReviewStats } from "./types.js";

const QUESTION = "Does the right image preserve the 3D geometry and structure of the left image?";

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className = "",
  text = "",
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

/** The whole interface. One instance per page; screens are re-rendered
 * from session state, the DOM holds no state of its own beyond the
 * broken-image flag for the task on screen.
 */
export class App {
  private readonly root: HTMLElement;
  private readonly api: ReviewApi;
  private readonly doc: Document;
  private session: ReviewSession | null = null;
  private state: SessionState | null = null;
  private brokenTask: string | null = null;
  private statsOpen = false;
  private unbindKeyboard: (() => void) | null = null;

  constructor(root: HTMLElement, api: ReviewApi) {
    this.root = root;
    this.api = api;
    this.doc = root.ownerDocument;
  }

  mount(): void {
    this.unbindKeyboard = bindReviewKeyboard(this.doc, {
      isActive: () => this.controlsEnabled(),
      onYes: () => void this.session?.submit(true),
      onNo: () => void this.session?.submit(false),
      onSkip: () => {
        if (this.skipOffered()) void this.session?.skip();
      },
    });
    this.renderLogin();
  }

  unmount(): void {
    this.unbindKeyboard?.();
    this.unbindKeyboard = null;
  }

  private controlsEnabled(): boolean {
    return this.state !== null && !this.state.busy && this.state.screen.kind === "review";
  }

  private skipOffered(): boolean {
    return (
      this.state !== null &&
      this.state.screen.kind === "review" &&
      this.state.screen.task.task_id === this.brokenTask
    );
  }

  private startSession(reviewerId: string): void {
    this.session = new ReviewSession(this.api, reviewerId, (state) => {
      if (
        state.screen.kind === "review" &&
        (this.state?.screen.kind !== "review" ||
          this.state.screen.task.task_id !== state.screen.task.task_id)
      ) {
        this.brokenTask = null; // fresh task, fresh benefit of the doubt
      }
      this.state = state;
      this.render();
    });
    void this.session.start();
  }

  // -- screens

  private renderLogin(): void {
    this.root.replaceChildren();
    const card = el(this.doc, "div", "card login");
    card.appendChild(el(this.doc, "h1", "", "Image review"));
    card.appendChild(
      el(
        this.doc,
        "p",
        "hint",
        "You will see pairs of images and judge whether the right one keeps the structure of the left one.",
      ),
    );
    const input = el(this.doc, "input", "reviewer-input");
    input.id = "reviewer";
    input.placeholder = "reviewer id";
    const button = el(this.doc, "button", "primary", "Start reviewing");
    button.id = "start";
    const begin = () => {
      const id = input.value.trim();
      if (id) this.startSession(id);
    };
    button.addEventListener("click", begin);
    input.addEventListener("keydown", (e) => {
      if ((e as KeyboardEvent).key === "Enter") begin();
    });
    card.append(input, button);
    this.root.appendChild(card);
    input.focus();
  }

  private render(): void {
    if (this.state === null || this.session === null) return;
    const state = this.state;
    this.root.replaceChildren();
    this.root.appendChild(this.renderHeader(state));
    if (state.notice) {
      this.root.appendChild(el(this.doc, "div", "notice", state.notice));
    }
    switch (state.screen.kind) {
      case "loading":
        this.root.appendChild(el(this.doc, "p", "status", "Loading…"));
        break;
      case "review":
        this.root.appendChild(this.renderTask(state));
        break;
      case "done":
        this.root.appendChild(this.renderDone(state));
        break;
      case "error":
        this.root.appendChild(el(this.doc, "div", "error", state.screen.message));
        break;
    }
    if (this.statsOpen) {
      const panel = el(this.doc, "div", "card stats");
      panel.id = "stats-panel";
      panel.appendChild(el(this.doc, "p", "status", "Loading stats…"));
      this.root.appendChild(panel);
      void this.fillStats(panel);
    }
  }

  private renderHeader(state: SessionState): HTMLElement {
    const header = el(this.doc, "header", "topbar");
    header.appendChild(el(this.doc, "span", "who", this.session?.reviewerId ?? ""));
    const counts = el(this.doc, "span", "counts");
    counts.id = "counts";
    counts.textContent = `done ${state.done} · remaining ${state.remaining}`;
    header.appendChild(counts);
    const statsButton = el(this.doc, "button", "linkish", this.statsOpen ? "hide stats" : "stats");
    statsButton.id = "toggle-stats";
    statsButton.addEventListener("click", () => {
      this.statsOpen = !this.statsOpen;
      this.render();
    });
    header.appendChild(statsButton);
    return header;
  }

  private renderTask(state: SessionState): HTMLElement {
    if (state.screen.kind !== "review") throw new Error("not reviewing");
    const task = state.screen.task;
    const main = el(this.doc, "div", "review");

    const pair = el(this.doc, "div", "pair");
    for (const [side, rel] of [
      ["left", task.left_image],
      ["right", task.right_image],
    ] as const) {
      const img = el(this.doc, "img", `pane ${side}`);
      img.id = `image-${side}`;
      img.src = this.api.imageUrl(rel);
      img.alt = side === "left" ? "reference render" : "generated image";
      img.addEventListener("error", () => {
        this.brokenTask = task.task_id;
        this.render();
      });
      pair.appendChild(img);
    }
    main.appendChild(pair);

    main.appendChild(el(this.doc, "p", "question", QUESTION));

    const buttons = el(this.doc, "div", "verdict-buttons");
    const yes = el(this.doc, "button", "yes", "Yes (Y)");
    yes.id = "yes";
    yes.disabled = state.busy;
    yes.addEventListener("click", () => void this.session?.submit(true));
    const no = el(this.doc, "button", "no", "No (N)");
    no.id = "no";
    no.disabled = state.busy;
    no.addEventListener("click", () => void this.session?.submit(false));
    buttons.append(yes, no);

    if (this.skipOffered()) {
      const skip = el(this.doc, "button", "skip", "Image broken: skip (S)");
      skip.id = "skip";
      skip.disabled = state.busy;
      skip.addEventListener("click", () => void this.session?.skip());
      buttons.appendChild(skip);
    }
    main.appendChild(buttons);
    return main;
  }

  private renderDone(state: SessionState): HTMLElement {
    const card = el(this.doc, "div", "card done");
    card.id = "completion";
    card.appendChild(el(this.doc, "h1", "", "All done"));
    const skippedNote = state.skipped > 0 ? `, skipped ${state.skipped}` : "";
    card.appendChild(
      el(this.doc, "p", "", `You reviewed ${state.done} image pair${state.done === 1 ? "" : "s"}${skippedNote}.`),
    );
    card.appendChild(el(this.doc, "p", "hint", "There are no tasks left for you."));
    return card;
  }

  private async fillStats(panel: HTMLElement): Promise<void> {
    let stats: ReviewStats;
    try {
      stats = await this.api.stats();
    } catch (err) {
      panel.replaceChildren(el(this.doc, "div", "error", String(err)));
      return;
    }
    panel.replaceChildren();
    panel.appendChild(el(this.doc, "h2", "", "Study progress"));
    const list = el(this.doc, "dl", "stats-list");
    for (const [key, value] of Object.entries(stats)) {
      list.appendChild(el(this.doc, "dt", "", key));
      list.appendChild(el(this.doc, "dd", "", JSON.stringify(value)));
    }
    panel.appendChild(list);
  }
}

export function bootstrap(doc: Document): App {
  const root = doc.getElementById("app");
  if (!root) throw new Error("missing #app element");
  const app = new App(root, new ReviewApi(""));
  app.mount();
  return app;
}
