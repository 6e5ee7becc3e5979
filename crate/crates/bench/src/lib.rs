//! Criterion benchmarks for the `fpld-core` kernels; see `benches/kernels.rs`.
