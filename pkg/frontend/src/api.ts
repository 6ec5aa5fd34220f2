// REST client for the retrieval service. All numbers shown in the UI
// come verbatim from these responses; no similarity math happens here.

import type {
  HealthResponse,
  JobView,
  QueryParams,
  QueryResponse,
  TileIdView,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

export function buildQueryBody(p: QueryParams): Record<string, unknown> {
  const body: Record<string, unknown> = {
    text: p.text,
    method: p.method,
    alpha: p.alpha,
    beta: p.beta,
    n: p.n,
    threshold: p.threshold,
  };
  if (p.imageId) {
    body.image_id = p.imageId;
  }
  return body;
}

async function parseError(resp: Response): Promise<ApiError> {
  let code = "http_error";
  let message = `${resp.status} ${resp.statusText}`;
  try {
    const body = await resp.json();
    if (body && typeof body.code === "string") {
      code = body.code;
      message = body.message ?? message;
    }
  } catch {
    // non-JSON error body; keep the status line
  }
  return new ApiError(resp.status, code, message);
}

export type FetchFn = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchFn = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, init);
    if (!resp.ok) {
      throw await parseError(resp);
    }
    return (await resp.json()) as T;
  }

  health(): Promise<HealthResponse> {
    return this.request("/healthz");
  }

  uploadImage(file: Blob, name: string): Promise<{ image_id: string }> {
    const form = new FormData();
    form.append("file", file, name);
    return this.request("/images", { method: "POST", body: form });
  }

  startIndex(imageId: string): Promise<{ job_id: string }> {
    return this.request(`/images/${encodeURIComponent(imageId)}/index`, {
      method: "POST",
    });
  }

  getJob(jobId: string): Promise<JobView> {
    return this.request(`/jobs/${encodeURIComponent(jobId)}`);
  }

  query(params: QueryParams): Promise<QueryResponse> {
    return this.request("/query", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(buildQueryBody(params)),
    });
  }

  tileUrl(tile: TileIdView): string {
    return `${this.baseUrl}/tiles/${encodeURIComponent(tile.image_id)}/${tile.row}/${tile.col}.png`;
  }
}
