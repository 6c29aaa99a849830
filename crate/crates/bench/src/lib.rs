//! Fixtures shared by the benchmarks.

use riskfl::learning::{partition, synthetic, DatasetShard, PartitionMode};
use riskfl::ExperimentConfig;

/// Default settings at a reduced area so setup stays cheap.
pub fn bench_config() -> ExperimentConfig {
    ExperimentConfig {
        area_side_m: 4_000.0,
        ..ExperimentConfig::default()
    }
}

/// One client's shard of a `features`-dimensional ten-class blob dataset.
pub fn shard(examples: usize, features: usize) -> DatasetShard {
    let data = synthetic(examples, features, 10, 1.0, 7);
    partition(&data, 1, PartitionMode::Iid, 0)
        .expect("one client always fits")
        .remove(0)
}
