use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::class::ContextClass;
use super::raycast::cast_rays;
use super::scene::{build_scene_with, ClassParams, Scene};
use crate::dataset_io::{write_record, DatasetError, GridRecord};
use crate::ds_fusion::{
    fuse, inverse_sensor_model, FusionError, GridSpec, OccupancyGrid, SensorModel, SensorPose,
};
use crate::rng;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything that determines a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationSpec {
    pub samples_per_class: usize,
    pub seed: u64,
    pub grid: GridSpec,
    pub n_beams: usize,
    pub fov: f64,
    pub max_range: f64,
    /// Longitudinal offset of the front (+) and rear (−) sensors.
    pub sensor_offset: f64,
    pub sensor_model: SensorModel,
    pub class_params: ClassParams,
}

impl Default for GenerationSpec {
    fn default() -> Self {
        Self {
            samples_per_class: 400,
            seed: 0,
            grid: GridSpec::default(),
            n_beams: 720,
            fov: PI,
            max_range: 30.0,
            sensor_offset: 1.0,
            sensor_model: SensorModel::default(),
            class_params: ClassParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub grid: GridSpec,
    pub records: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn class_counts(&self) -> [usize; 5] {
        let mut counts = [0; 5];
        for r in &self.records {
            counts[r.label as usize] += 1;
        }
        counts
    }
}

/// Front sensor facing forward and rear sensor facing backward.
pub fn front_rear_poses(ego: &SensorPose, offset: f64) -> [SensorPose; 2] {
    let (c, s) = (ego.heading.cos(), ego.heading.sin());
    [
        SensorPose::new(ego.x + offset * c, ego.y + offset * s, ego.heading),
        SensorPose::new(ego.x - offset * c, ego.y - offset * s, ego.heading + PI),
    ]
}

/// Casts both scans of a scene and fuses their evidence into a fresh grid.
pub fn simulate_grid(scene: &Scene, spec: &GenerationSpec) -> Result<OccupancyGrid, FusionError> {
    let mut grid = OccupancyGrid::vacuous(spec.grid)?;
    for pose in front_rear_poses(&scene.ego_pose, spec.sensor_offset) {
        let scan = cast_rays(scene, &pose, spec.n_beams, spec.fov, spec.max_range);
        let evidence = inverse_sensor_model(&scan, &pose, &spec.grid, &spec.sensor_model)?;
        grid = fuse(&grid, &evidence, 1.0)?;
    }
    Ok(grid)
}

fn sample_seed(root: u64, class: ContextClass, index: usize) -> u64 {
    rng::derive_seed(root, &[class.index() as u64, index as u64])
}

fn file_name(class: ContextClass, index: usize) -> String {
    format!("{}_{index:05}.dgn", class.abbrev().to_ascii_lowercase())
}

/// All samples in class-major order. Each sample has its own seed, so the
/// result does not depend on how the work is scheduled.
pub fn generate_records(spec: &GenerationSpec) -> Result<Vec<GridRecord>, DatasetError> {
    spec.grid.validate()?;
    let jobs: Vec<(ContextClass, usize)> = ContextClass::ALL
        .iter()
        .flat_map(|&c| (0..spec.samples_per_class).map(move |i| (c, i)))
        .collect();
    jobs.par_iter()
        .map(|&(class, i)| {
            let scene = build_scene_with(class, sample_seed(spec.seed, class, i), &spec.class_params);
            let grid = simulate_grid(&scene, spec)?;
            Ok(GridRecord::quantized(&grid, class))
        })
        .collect()
}

/// Writes one record file per sample plus `manifest.json` into `out_dir`.
pub fn generate_dataset(spec: &GenerationSpec, out_dir: &Path) -> Result<DatasetManifest, DatasetError> {
    if spec.samples_per_class == 0 {
        return Err(DatasetError::EmptyDataset);
    }
    fs::create_dir_all(out_dir)?;
    let records = generate_records(spec)?;
    let mut entries = Vec::with_capacity(records.len());
    for (k, record) in records.iter().enumerate() {
        let name = file_name(record.label, k % spec.samples_per_class);
        write_record(record, &out_dir.join(&name))?;
        entries.push(ManifestEntry {
            file: name,
            label: record.label.index() as u8,
        });
    }
    let manifest = DatasetManifest {
        seed: spec.seed,
        grid: spec.grid,
        records: entries,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    fs::write(out_dir.join(MANIFEST_FILE), json + "\n")?;
    Ok(manifest)
}
