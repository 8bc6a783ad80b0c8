//! Manifests, occlusion/pose test subsets and the synthetic localization task.

mod manifest;
mod subsets;
mod synthetic;

pub use manifest::{
    load_manifest, manifest_to_string, parse_manifest, write_manifest, ManifestRecord, Occlusion,
    Pose, MANIFEST_HEADER,
};
pub use subsets::{build_occlusion_subset, build_pose_subset, subset_stats, SubsetStats};
pub use synthetic::{
    canonical_landmarks, generate_synthetic, glyph_pattern, BoxRegion, Occluder, SyntheticSample,
    SyntheticSet, SyntheticSpec,
};
