import type { NextResponse, ReviewStats, VerdictRequest, VerdictResponse } from "./types.js";

export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, message: string) {
    super(message);
    this.name = "ApiError";
    this.status = status;
  }
}

async function parseError(resp: Response): Promise<ApiError> {
  let message = `${resp.status} ${resp.statusText}`;
  try {
    const doc = await resp.json();
    if (doc && typeof doc.error === "string") message = doc.error;
  } catch {
    // non-JSON error body; keep the status line
  }
  return new ApiError(resp.status, message);
}

/** Thin typed wrapper over the review service endpoints.
 *
 * `base` is the service origin ("" when the UI is served by the service
 * itself). `fetchFn` is injectable so tests can script the wire.
 */
export class ReviewApi {
  private readonly base: string;
  private readonly fetchFn: typeof fetch;

  constructor(base = "", fetchFn: typeof fetch = fetch) {
    this.base = base.replace(/\/$/, "");
    this.fetchFn = fetchFn;
  }

  imageUrl(relPath: string): string {
    return `${this.base}/api/images/${relPath}`;
  }

  async next(reviewer: string, exclude: string[] = []): Promise<NextResponse> {
    const params = new URLSearchParams({ reviewer });
    if (exclude.length > 0) params.set("exclude", exclude.join(","));
    const resp = await this.fetchFn(`${this.base}/api/review/next?${params}`);
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as NextResponse;
  }

  async submit(verdict: VerdictRequest): Promise<VerdictResponse> {
    const resp = await this.fetchFn(`${this.base}/api/review/verdict`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(verdict),
    });
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as VerdictResponse;
  }

  async stats(): Promise<ReviewStats> {
    const resp = await this.fetchFn(`${this.base}/api/review/stats`);
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as ReviewStats;
  }
}
