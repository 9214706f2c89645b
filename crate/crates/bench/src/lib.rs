//! Empty library crate hosting the `benches/` targets; see `benches/kernels.rs`.
