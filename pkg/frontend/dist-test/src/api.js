// REST client for the retrieval service. All numbers shown in the UI
// come verbatim from these responses; no similarity math happens here.
export class ApiError extends Error {
    status;
    code;
    constructor(status, code, message) {
        super(message);
        this.status = status;
        this.code = code;
    }
}
export function buildQueryBody(p) {
    const body = {
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
async function parseError(resp) {
    let code = "http_error";
    let message = `${resp.status} ${resp.statusText}`;
    try {
        const body = await resp.json();
        if (body && typeof body.code === "string") {
            code = body.code;
            message = body.message ?? message;
        }
    }
    catch {
        // non-JSON error body; keep the status line
    }
    return new ApiError(resp.status, code, message);
}
export class ApiClient {
    baseUrl;
    fetchFn;
    constructor(baseUrl = "", fetchFn = (input, init) => fetch(input, init)) {
        this.baseUrl = baseUrl;
        this.fetchFn = fetchFn;
    }
    async request(path, init) {
        const resp = await this.fetchFn(this.baseUrl + path, init);
        if (!resp.ok) {
            throw await parseError(resp);
        }
        return (await resp.json());
    }
    health() {
        return this.request("/healthz");
    }
    uploadImage(file, name) {
        const form = new FormData();
        form.append("file", file, name);
        return this.request("/images", { method: "POST", body: form });
    }
    startIndex(imageId) {
        return this.request(`/images/${encodeURIComponent(imageId)}/index`, {
            method: "POST",
        });
    }
    getJob(jobId) {
        return this.request(`/jobs/${encodeURIComponent(jobId)}`);
    }
    query(params) {
        return this.request("/query", {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(buildQueryBody(params)),
        });
    }
    tileUrl(tile) {
        return `${this.baseUrl}/tiles/${encodeURIComponent(tile.image_id)}/${tile.row}/${tile.col}.png`;
    }
}
