//! Criterion benchmarks for the dyca crate live in `benches/`.
