// Pure projections from service responses to what the DOM layer draws.
/** Evidence grid entries: exactly the retrieved tiles, in response order. */
export function evidenceGrid(result) {
    return result.evidence.map((item) => ({
        key: `${item.tile_id.image_id}:${item.tile_id.row}:${item.tile_id.col}`,
        url: item.url,
        caption: `r${item.tile_id.row} c${item.tile_id.col}`,
        winningLabel: item.winning_label,
        sim: item.sim_to_object,
        rect: item.rect,
    }));
}
export function progressPercent(job) {
    if (job.state === "done") {
        return 100;
    }
    if (job.tiles_total === 0) {
        return 0;
    }
    return Math.floor((job.tiles_done / job.tiles_total) * 100);
}
/** Scale a source-pixel rect onto the downscaled overview image. */
export function overlayBox(rect, naturalWidth, displayWidth) {
    const scale = naturalWidth > 0 ? displayWidth / naturalWidth : 0;
    return {
        left: rect[0] * scale,
        top: rect[1] * scale,
        width: rect[2] * scale,
        height: rect[3] * scale,
    };
}
export function formatSim(sim) {
    return sim.toFixed(4);
}
export function describeContext(result) {
    if (!result.context) {
        return "";
    }
    const c = result.context;
    return `${c.object_of_interest} — surroundings: ${c.surroundings.join(", ")} (${c.source})`;
}
