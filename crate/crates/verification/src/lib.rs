//! Holds the workspace acceptance suite (`tests/acceptance.rs`), which runs
//! after the unit and integration tests of the other crates.
