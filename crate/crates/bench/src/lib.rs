//! Criterion benchmarks for `ssnerf-core`; see `benches/`.
