// Shapes of the service JSON documents (schemas/ in the repo root is
// the normative contract; keep these in sync).
export {};
