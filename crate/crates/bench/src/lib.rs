//! Criterion benchmarks for the estimation kernels live under `benches/`.
