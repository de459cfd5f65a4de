//! Criterion benchmarks for the `dkdhtl-core` kernels. See `benches/`.
