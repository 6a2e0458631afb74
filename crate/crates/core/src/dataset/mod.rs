//! Offline log generation and the trajectory file format.

mod behavior;
mod generate;
mod io;

pub use behavior::{BehaviorKind, BehaviorPolicy, BehaviorRunner};
pub use generate::{
    desk_mixture,
    generate_dataset, inject_noise_trajectories, noise_policy, CampaignRanges, Dataset,
    DatasetManifest, DatasetSpec, ManifestEntry, GENERATOR_VERSION,
};
pub use io::{
    load_dataset, load_manifest, read_trajectories, save_dataset, save_manifest,
    write_trajectories, SCHEMA_VERSION,
};

/// Splitmix64 finalizer; derives independent sub-seeds from one seed.
pub(crate) fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
