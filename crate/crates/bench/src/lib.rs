//! Benchmark-only crate; see `benches/hydraulics.rs`.
