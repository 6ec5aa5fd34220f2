// End-to-end console flow against a live mock-provider service:
// upload -> index -> query, grid count matching the API response, and
// the parameter panel round-tripping into the request body.

import assert from "node:assert/strict";
import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { after, before, test } from "node:test";

import { ApiClient, type FetchFn } from "../src/api.js";
import type { QueryParams } from "../src/types.js";
import { evidenceGrid } from "../src/viewmodel.js";

// 1x1 PNG; the tiler emits a single undersized tile for it
const TINY_PNG = Buffer.from(
  "iVBORw0KGgoAAAANSUhEUgAAAAEAAAABCAYAAAAfFcSJAAAADUlEQVR42mP8z8BQDwAEhQGAhKmMIQAAAABJRU5ErkJggg==",
  "base64",
);

const FIXTURE = {
  river: {
    object: "river",
    surroundings: ["road", "mountain", "bridge", "forest", "field"],
  },
};

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = createServer();
    srv.listen(0, "127.0.0.1", () => {
      const address = srv.address();
      if (address && typeof address === "object") {
        const port = address.port;
        srv.close(() => resolve(port));
      } else {
        reject(new Error("no port"));
      }
    });
  });
}

let proc: ChildProcess | null = null;
let base = "";

before(async () => {
  const root = mkdtempSync(join(tmpdir(), "osat-console-"));
  const fixture = join(root, "fixture.json");
  writeFileSync(fixture, JSON.stringify(FIXTURE));
  const port = await freePort();
  base = `http://127.0.0.1:${port}`;
  proc = spawn(
    "python3",
    [
      "-m",
      "opensat.cli",
      "serve",
      "--store",
      join(root, "store"),
      "--embedder",
      "mock",
      "--dim",
      "32",
      "--fixture",
      fixture,
      "--port",
      String(port),
    ],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  const deadline = Date.now() + 20000;
  for (;;) {
    try {
      const r = await fetch(`${base}/healthz`);
      if (r.ok) {
        return;
      }
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) {
      throw new Error("service never became healthy");
    }
    await new Promise((r) => setTimeout(r, 150));
  }
});

after(() => {
  proc?.kill("SIGTERM");
});

test("upload -> index -> query flow with grid matching the response", async () => {
  const sent: { url: string; body?: string }[] = [];
  const recordingFetch: FetchFn = async (url, init) => {
    sent.push({ url, body: typeof init?.body === "string" ? init.body : undefined });
    return fetch(url, init);
  };
  const client = new ApiClient(base, recordingFetch);

  const { image_id } = await client.uploadImage(new Blob([TINY_PNG]), "tiny.png");
  assert.ok(image_id);

  const { job_id } = await client.startIndex(image_id);
  const deadline = Date.now() + 20000;
  let job = await client.getJob(job_id);
  while (job.state !== "done" && job.state !== "failed") {
    assert.ok(Date.now() < deadline, "indexing timed out");
    await new Promise((r) => setTimeout(r, 100));
    job = await client.getJob(job_id);
  }
  assert.equal(job.state, "done");
  assert.equal(job.tiles_total, 1);

  const params: QueryParams = {
    text: "river",
    method: "opensat_refined",
    alpha: 0.9,
    beta: 1.1,
    n: 3,
    threshold: 0.28,
    imageId: image_id,
  };
  const result = await client.query(params);

  // parameter panel round-trips into the request body
  const queryCall = sent.find((c) => c.url.endsWith("/query"));
  assert.ok(queryCall?.body);
  const body = JSON.parse(queryCall.body);
  assert.equal(body.alpha, 0.9);
  assert.equal(body.beta, 1.1);
  assert.equal(body.n, 3);
  assert.equal(body.image_id, image_id);

  // the service echoes the params and derived context
  assert.equal(result.params.alpha, 0.9);
  assert.equal(result.context?.object_of_interest, "river");
  assert.equal(result.context?.surroundings.length, 3);

  // evidence grid renders exactly count items
  const grid = evidenceGrid(result);
  assert.equal(grid.length, result.count);
  assert.equal(result.per_tile.length, 1);

  // evidence tiles are fetchable when present
  for (const item of grid) {
    assert.ok(item.url);
    const tile = await fetch(base + item.url);
    assert.equal(tile.status, 200);
    assert.equal(tile.headers.get("content-type"), "image/png");
  }
});

test("threshold sweep returns the whole store at -0.999", async () => {
  const client = new ApiClient(base);
  const result = await client.query({
    text: "river",
    method: "threshold",
    alpha: 1,
    beta: 1,
    n: 5,
    threshold: -0.999,
    imageId: null,
  });
  assert.equal(result.count, 1);
  assert.equal(result.count, result.retrieved.length);
});

test("duplicate index request surfaces 409 verbatim", async () => {
  const client = new ApiClient(base);
  const { image_id } = await client.uploadImage(new Blob([TINY_PNG]), "again.png");
  await client.startIndex(image_id);
  // wait for completion, then try again
  const deadline = Date.now() + 20000;
  for (;;) {
    try {
      await client.startIndex(image_id);
    } catch (err) {
      const e = err as { status?: number; code?: string };
      if (e.status === 409) {
        assert.equal(e.code, "already_indexed");
        return;
      }
      throw err;
    }
    assert.ok(Date.now() < deadline, "never saw 409");
    await new Promise((r) => setTimeout(r, 100));
  }
});
