//! Holds the criterion benchmarks; no library code of its own.
