//! Criterion benchmarks for the eitlock pipelines live in `benches/`.
