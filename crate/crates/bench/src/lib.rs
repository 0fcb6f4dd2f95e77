//! Benchmarks for vawalk-core live under `benches/`.
