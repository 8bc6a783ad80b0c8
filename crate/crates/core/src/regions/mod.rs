//! Region generation, cropping and resizing.
//!
//! Three schemes produce [`RegionSpec`]s for a face image: five fixed
//! crops, `n` random crops, or squares around five facial landmarks. Every
//! crop and the uncropped duplicate are then resized to the backbone input
//! size with [`extract_and_resize`].

mod geometry;
mod image;
mod resize;

pub use geometry::{
    fixed_crops, fixed_crops_scaled, landmark_crops, random_crops, CropScheme, Landmark,
    LandmarkName, RegionSpec, Scheme, DEFAULT_LANDMARK_RADIUS, FIXED_SCALES, RANDOM_SCALE_RANGE,
};
pub use image::{decode_pnm, encode_pnm, load_pnm, write_pnm, FaceImage, MIN_SIDE};
pub use resize::{area_downsample, build_crop_set, extract_and_resize, CropSet};
