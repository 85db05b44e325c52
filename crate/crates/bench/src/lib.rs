//! Benchmarks for qhedge-core live in `benches/`.
