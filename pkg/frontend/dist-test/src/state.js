// Session state as pure data: every view is derived from service
// responses plus the local parameter panel, so replaying history
// against a deterministic backend reproduces the same screens.
export function initialState() {
    return { selectedImage: null, activeJob: null, lastResult: null, history: [] };
}
export function withSelectedImage(s, imageId) {
    return { ...s, selectedImage: imageId, activeJob: null };
}
export function withJob(s, job) {
    return { ...s, activeJob: job };
}
export function withResult(s, params, result) {
    const entry = {
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
