//! Synthetic driving scenes and a 2D lidar simulator.
//!
//! Scenes are expressed in the ego frame: the ego vehicle sits at the
//! origin facing +x. Two sensors, one facing forward and one backward, each
//! sweep a half-plane; their scans are turned into evidence grids and fused
//! into one labelled grid per sample.

mod class;
mod generate;
mod geometry;
mod raycast;
mod scene;

pub use crate::ds_fusion::LidarScan;
pub use class::ContextClass;
pub use generate::{
    front_rear_poses, generate_dataset, generate_records, simulate_grid, DatasetManifest,
    GenerationSpec, ManifestEntry, MANIFEST_FILE,
};
pub use geometry::{Aabb, Segment};
pub use raycast::{cast_rays, ray_aabb, ray_segment};
pub use scene::{build_scene, build_scene_with, ClassParams, Scene, WORLD_BOUND};
