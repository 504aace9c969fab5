//! Criterion benchmarks for the hot paths of `ozonecast`; see `benches/core.rs`.
