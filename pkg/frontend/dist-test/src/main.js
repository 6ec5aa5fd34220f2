// Console wiring: upload/progress pane, query + parameter panel,
// evidence grid with overview overlay, query history.
import { ApiClient, ApiError } from "./api.js";
import { initialState, withJob, withResult, withSelectedImage, } from "./state.js";
import { describeContext, evidenceGrid, formatSim, overlayBox, progressPercent, } from "./viewmodel.js";
const api = new ApiClient("");
let state = initialState();
let overviewUrl = null;
let queryInFlight = false;
const $ = (id) => {
    const el = document.getElementById(id);
    if (!el) {
        throw new Error(`missing element #${id}`);
    }
    return el;
};
function banner(message, kind = "error") {
    const el = $("banner");
    el.textContent = message;
    el.className = `banner ${kind}`;
    el.hidden = false;
    if (kind === "info") {
        setTimeout(() => {
            el.hidden = true;
        }, 4000);
    }
}
function describeError(err) {
    if (err instanceof ApiError) {
        return `${err.status} ${err.code}: ${err.message}`;
    }
    return err instanceof Error ? err.message : String(err);
}
async function refreshHealth() {
    try {
        const health = await api.health();
        $("store-stats").textContent =
            `${health.store.record_count} tiles / ${health.store.image_count} image(s), dim ${health.store.dim}`;
    }
    catch {
        $("store-stats").textContent = "service unreachable";
    }
}
// -- upload & indexing ------------------------------------------------
async function pollJob(jobId) {
    const bar = $("progress-bar");
    const label = $("progress-label");
    for (;;) {
        const job = await api.getJob(jobId);
        state = withJob(state, job);
        bar.value = progressPercent(job);
        label.textContent = `${job.state}: ${job.tiles_done}/${job.tiles_total}`;
        if (job.state === "done") {
            banner(`indexed ${job.tiles_total} tiles`, "info");
            await refreshHealth();
            return;
        }
        if (job.state === "failed") {
            banner(`indexing failed: ${job.error ?? "unknown error"}`);
            return;
        }
        await new Promise((r) => setTimeout(r, 1000));
    }
}
async function uploadAndIndex(file) {
    try {
        const { image_id } = await api.uploadImage(file, file.name);
        state = withSelectedImage(state, image_id);
        $("selected-image").textContent = image_id;
        if (overviewUrl) {
            URL.revokeObjectURL(overviewUrl);
        }
        overviewUrl = URL.createObjectURL(file);
        $("overview").src = overviewUrl;
        const { job_id } = await api.startIndex(image_id);
        await pollJob(job_id);
    }
    catch (err) {
        banner(describeError(err));
    }
}
// -- query ------------------------------------------------------------
function readParams() {
    return {
        text: $("query-text").value,
        method: $("method").value,
        alpha: Number($("alpha").value),
        beta: Number($("beta").value),
        n: Number($("surroundings").value),
        threshold: Number($("threshold").value),
        imageId: state.selectedImage,
    };
}
function renderResult(result) {
    $("result-count").textContent =
        `${result.count} tile(s) retrieved by ${result.method}`;
    $("result-context").textContent = describeContext(result);
    const grid = $("evidence-grid");
    grid.replaceChildren();
    for (const item of evidenceGrid(result)) {
        const cell = document.createElement("figure");
        cell.className = "tile";
        if (item.url) {
            const img = document.createElement("img");
            img.src = item.url;
            img.alt = item.key;
            img.loading = "lazy";
            cell.appendChild(img);
        }
        const caption = document.createElement("figcaption");
        caption.textContent = `${item.caption} · ${item.winningLabel} · ${formatSim(item.sim)}`;
        cell.appendChild(caption);
        if (item.rect) {
            const rect = item.rect;
            cell.addEventListener("click", () => highlight(rect));
        }
        grid.appendChild(cell);
    }
}
function highlight(rect) {
    const overview = $("overview");
    const marker = $("overlay-marker");
    if (!overview.naturalWidth) {
        return;
    }
    const box = overlayBox(rect, overview.naturalWidth, overview.clientWidth);
    marker.style.left = `${box.left}px`;
    marker.style.top = `${box.top}px`;
    marker.style.width = `${box.width}px`;
    marker.style.height = `${box.height}px`;
    marker.hidden = false;
}
function renderHistory() {
    const list = $("history");
    list.replaceChildren();
    for (const entry of [...state.history].reverse()) {
        const li = document.createElement("li");
        const button = document.createElement("button");
        button.textContent =
            `${entry.text} [${entry.method} α=${entry.alpha} β=${entry.beta} ` +
                `n=${entry.n}] → ${entry.count}`;
        button.addEventListener("click", () => {
            $("query-text").value = entry.text;
            $("method").value = entry.method;
            $("alpha").value = String(entry.alpha);
            $("beta").value = String(entry.beta);
            $("surroundings").value = String(entry.n);
            $("threshold").value = String(entry.threshold);
            void runQuery();
        });
        li.appendChild(button);
        list.appendChild(li);
    }
}
async function runQuery() {
    if (queryInFlight) {
        return;
    }
    const params = readParams();
    if (!params.text.trim()) {
        banner("enter a query first");
        return;
    }
    queryInFlight = true;
    $("run-query").disabled = true;
    try {
        const result = await api.query(params);
        state = withResult(state, params, result);
        renderResult(result);
        renderHistory();
        if ($("compare-plain").checked && params.method === "opensat_refined") {
            const plain = await api.query({ ...params, method: "opensat_plain" });
            $("result-count").textContent =
                `refined: ${result.count} vs plain: ${plain.count} tile(s)`;
        }
    }
    catch (err) {
        banner(describeError(err));
    }
    finally {
        queryInFlight = false;
        $("run-query").disabled = false;
    }
}
// -- boot -------------------------------------------------------------
function boot() {
    $("upload").addEventListener("change", (e) => {
        const input = e.target;
        if (input.files && input.files.length > 0) {
            void uploadAndIndex(input.files[0]);
        }
    });
    $("run-query").addEventListener("click", () => void runQuery());
    $("query-text").addEventListener("keydown", (e) => {
        if (e.key === "Enter") {
            void runQuery();
        }
    });
    void refreshHealth();
}
boot();
