// Session state as pure data: every view is derived from service
// responses plus the local parameter panel, so replaying history
// against a deterministic backend reproduces the same screens.

import type { JobView, QueryParams, QueryResponse } from "./types.js";

export interface HistoryEntry {
  text: string;
  method: string;
  alpha: number;
  beta: number;
  n: number;
  threshold: number;
  count: number;
}

export interface SessionState {
  selectedImage: string | null;
  activeJob: JobView | null;
  lastResult: QueryResponse | null;
  history: HistoryEntry[];
}

export function initialState(): SessionState {
  return { selectedImage: null, activeJob: null, lastResult: null, history: [] };
}

export function withSelectedImage(s: SessionState, imageId: string): SessionState {
  return { ...s, selectedImage: imageId, activeJob: null };
}

export function withJob(s: SessionState, job: JobView): SessionState {
  return { ...s, activeJob: job };
}

export function withResult(
  s: SessionState,
  params: QueryParams,
  result: QueryResponse,
): SessionState {
  const entry: HistoryEntry = {
    text: params.text,
    method: params.method,
    alpha: params.alpha,
    beta: params.beta,
    n: params.n,
    threshold: params.threshold,
    count: result.count,
  };
  return { ...s, lastResult: result, history: [...s.history, entry] };
}
