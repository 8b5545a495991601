//! Criterion benchmarks for the model, its adjoint and the decomposed
//! solver; see `benches/`.
