// Shapes of the service JSON documents (schemas/ in the repo root is
// the normative contract; keep these in sync).

export interface TileIdView {
  image_id: string;
  row: number;
  col: number;
}

export interface ContextView {
  raw_query: string;
  object_of_interest: string;
  surroundings: string[];
  source: "llm" | "fixture" | "user_supplied";
}

export interface TileDiagnosticView {
  tile_id: TileIdView;
  winning_label: string;
  sim_to_object: number;
  max_sim_to_surroundings: number | null;
}

export interface EvidenceItem {
  tile_id: TileIdView;
  url: string | null;
  rect: [number, number, number, number] | null;
  winning_label: string;
  sim_to_object: number;
}

export interface QueryResponse {
  schema_version: number;
  query: string;
  method: Method;
  count: number;
  params: {
    alpha: number;
    beta: number;
    n: number;
    threshold: number;
    normalize_stage: string;
  };
  context: ContextView | null;
  retrieved: TileIdView[];
  per_tile: TileDiagnosticView[];
  evidence: EvidenceItem[];
  elapsed_ms?: number;
}

export interface JobView {
  job_id: string;
  image_id: string;
  state: "pending" | "tiling" | "embedding" | "indexing" | "done" | "failed";
  tiles_total: number;
  tiles_done: number;
  error: string | null;
}

export interface HealthResponse {
  status: string;
  store: { dim: number; record_count: number; image_count: number };
}

export type Method = "threshold" | "opensat_plain" | "opensat_refined";

export interface QueryParams {
  text: string;
  method: Method;
  alpha: number;
  beta: number;
  n: number;
  threshold: number;
  imageId: string | null;
}
