//! Criterion benchmarks for the training and evaluation kernels; see `benches/`.
