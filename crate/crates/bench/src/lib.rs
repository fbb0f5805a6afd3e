//! Criterion benchmarks for the policy hot paths; see `benches/`.
