//! Criterion benchmarks for the kinetics and laser solvers; see `benches/`.
