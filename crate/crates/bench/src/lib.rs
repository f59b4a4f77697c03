//! Benchmark-only crate; see `benches/datapath.rs`.
