//! Criterion benchmarks for lika-core; see `benches/`.
