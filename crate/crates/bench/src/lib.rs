//! Shared fixtures for the benchmarks.

use footnav::pipeline::{RunConfig, Variant};

/// One short lap with the given variant, seed 0.
pub fn short_lap(variant: Variant) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.gait.laps = 1;
    cfg.gait.side_strides = 5;
    cfg.variants = vec![variant];
    cfg
}
