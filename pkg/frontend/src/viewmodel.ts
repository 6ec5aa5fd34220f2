// Pure projections from service responses to what the DOM layer draws.

import type { EvidenceItem, JobView, QueryResponse } from "./types.js";

export interface GridItem {
  key: string;
  url: string | null;
  caption: string;
  winningLabel: string;
  sim: number;
  rect: [number, number, number, number] | null;
}

/** Evidence grid entries: exactly the retrieved tiles, in response order. */
export function evidenceGrid(result: QueryResponse): GridItem[] {
  return result.evidence.map((item: EvidenceItem) => ({
    key: `${item.tile_id.image_id}:${item.tile_id.row}:${item.tile_id.col}`,
    url: item.url,
    caption: `r${item.tile_id.row} c${item.tile_id.col}`,
    winningLabel: item.winning_label,
    sim: item.sim_to_object,
    rect: item.rect,
  }));
}

export function progressPercent(job: JobView): number {
  if (job.state === "done") {
    return 100;
  }
  if (job.tiles_total === 0) {
    return 0;
  }
  return Math.floor((job.tiles_done / job.tiles_total) * 100);
}

export interface OverlayBox {
  left: number;
  top: number;
  width: number;
  height: number;
}

/** Scale a source-pixel rect onto the downscaled overview image. */
export function overlayBox(
  rect: [number, number, number, number],
  naturalWidth: number,
  displayWidth: number,
): OverlayBox {
  const scale = naturalWidth > 0 ? displayWidth / naturalWidth : 0;
  return {
    left: rect[0] * scale,
    top: rect[1] * scale,
    width: rect[2] * scale,
    height: rect[3] * scale,
  };
}

export function formatSim(sim: number): string {
  return sim.toFixed(4);
}

export function describeContext(result: QueryResponse): string {
  if (!result.context) {
    return "";
  }
  const c = result.context;
  return `${c.object_of_interest} — surroundings: ${c.surroundings.join(", ")} (${c.source})`;
}
