//! Holds the `acceptance` test target (`tests/acceptance.rs`); no library code.
