//! Criterion benchmarks for the simulator and lattice kernels; see `benches/`.
