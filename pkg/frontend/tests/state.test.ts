import assert from "node:assert/strict";
import { test } from "node:test";

import { initialState, withJob, withResult, withSelectedImage } from "../src/state.js";
import type { JobView, QueryParams, QueryResponse } from "../src/types.js";

const params: QueryParams = {
  text: "river",
  method: "opensat_refined",
  alpha: 1,
  beta: 1,
  n: 5,
  threshold: 0.28,
  imageId: null,
};

const result: QueryResponse = {
  schema_version: 1,
  query: "river",
  method: "opensat_refined",
  count: 2,
  params: { alpha: 1, beta: 1, n: 5, threshold: 0.28, normalize_stage: "per_term" },
  context: null,
  retrieved: [],
  per_tile: [],
  evidence: [],
};

test("selecting an image clears any previous job", () => {
  const job: JobView = {
    job_id: "j",
    image_id: "old",
    state: "done",
    tiles_total: 4,
    tiles_done: 4,
    error: null,
  };
  let s = withJob(initialState(), job);
  s = withSelectedImage(s, "new-image");
  assert.equal(s.selectedImage, "new-image");
  assert.equal(s.activeJob, null);
});

test("results append to history with their parameters and count", () => {
  let s = initialState();
  s = withResult(s, params, result);
  s = withResult(s, { ...params, alpha: 2 }, { ...result, count: 7 });
  assert.equal(s.history.length, 2);
  assert.deepEqual(s.history[1], {
    text: "river",
    method: "opensat_refined",
    alpha: 2,
    beta: 1,
    n: 5,
    threshold: 0.28,
    count: 7,
  });
  assert.equal(s.lastResult?.count, 7);
});

test("state updates never mutate the previous value", () => {
  const before = initialState();
  withResult(before, params, result);
  assert.equal(before.history.length, 0);
  assert.equal(before.lastResult, null);
});
