//! Criterion benchmarks for the propagate, track and analyze pipeline.
//! The benchmarks live in `benches/`.
