//! Criterion benchmarks for the active clustering library; see `benches/`.
