//! Benchmarks for the gpssm toolkit live in `benches/`.
