import assert from "node:assert/strict";
import { test } from "node:test";
import { ApiClient, ApiError, buildQueryBody } from "../src/api.js";
const params = {
    text: "river",
    method: "opensat_refined",
    alpha: 0.7,
    beta: 1.3,
    n: 4,
    threshold: 0.31,
    imageId: null,
};
test("query body carries the parameter panel verbatim", () => {
    const body = buildQueryBody(params);
    assert.deepEqual(body, {
        text: "river",
        method: "opensat_refined",
        alpha: 0.7,
        beta: 1.3,
        n: 4,
        threshold: 0.31,
    });
});
test("image filter included only when an image is selected", () => {
    assert.ok(!("image_id" in buildQueryBody(params)));
    const body = buildQueryBody({ ...params, imageId: "abc123" });
    assert.equal(body.image_id, "abc123");
});
function stubFetch(status, payload) {
    const calls = [];
    const fetchFn = async (url, init) => {
        calls.push({ url, init });
        return new Response(JSON.stringify(payload), {
            status,
            headers: { "Content-Type": "application/json" },
        });
    };
    return { calls, fetchFn };
}
test("client posts the panel parameters in the request body", async () => {
    const { calls, fetchFn } = stubFetch(200, {
        schema_version: 1,
        query: "river",
        method: "opensat_refined",
        count: 0,
        params: { alpha: 0.7, beta: 1.3, n: 4, threshold: 0.31, normalize_stage: "per_term" },
        context: null,
        retrieved: [],
        per_tile: [],
        evidence: [],
    });
    const client = new ApiClient("http://svc", fetchFn);
    await client.query(params);
    assert.equal(calls.length, 1);
    assert.equal(calls[0].url, "http://svc/query");
    const sent = JSON.parse(String(calls[0].init?.body));
    assert.equal(sent.alpha, 0.7);
    assert.equal(sent.beta, 1.3);
    assert.equal(sent.n, 4);
    assert.equal(sent.threshold, 0.31);
    assert.equal(sent.method, "opensat_refined");
});
test("structured errors surface status, code, and message", async () => {
    const { fetchFn } = stubFetch(503, {
        code: "provider_unavailable",
        message: "LLM endpoint unreachable",
    });
    const client = new ApiClient("http://svc", fetchFn);
    await assert.rejects(() => client.query(params), (err) => {
        assert.ok(err instanceof ApiError);
        assert.equal(err.status, 503);
        assert.equal(err.code, "provider_unavailable");
        assert.match(err.message, /unreachable/);
        return true;
    });
});
test("tile urls address the evidence endpoint", () => {
    const client = new ApiClient("http://svc");
    assert.equal(client.tileUrl({ image_id: "img 1", row: 2, col: 3 }), "http://svc/tiles/img%201/2/3.png");
});
