//! Evidential occupancy grids built with Dempster's rule of combination.
//!
//! Each cell carries a [`MassAssignment`] over the frame {Free, Occupied}:
//! mass on Free, mass on Occupied and mass on the whole frame (ignorance).
//! Lidar scans are converted to per-cell evidence by
//! [`inverse_sensor_model`] and accumulated with [`fuse`].

mod grid;
mod mass;
mod render;
pub(crate) mod sensor;

pub use grid::{fuse, GridSpec, OccupancyGrid};
pub use mass::{conflict, decay, ds_combine, MassAssignment, CONFLICT_EPS, MASS_TOLERANCE};
pub use render::{grid_to_ppm, grid_to_tensor, tensor_to_grid};
pub use sensor::{
    inverse_sensor_model, traverse_cells, LidarScan, SensorModel, SensorPose, DEFAULT_LAMBDA_FREE,
    DEFAULT_LAMBDA_OCC,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("invalid mass assignment ({m_free}, {m_occ}, {m_unknown})")]
    InvalidMass { m_free: f64, m_occ: f64, m_unknown: f64 },
    #[error("total conflict between mass assignments (1 - K = {normalizer:e})")]
    TotalConflict { normalizer: f64 },
    #[error("sensor at ({x:.3}, {y:.3}) lies outside the grid")]
    PoseOutsideGrid { x: f64, y: f64 },
    #[error("grid specs differ: {0:?} vs {1:?}")]
    SpecMismatch(GridSpec, GridSpec),
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),
    #[error("invalid sensor model parameter: {0}")]
    InvalidParameter(String),
    #[error("tensor shape {0:?} cannot be decoded as a grid")]
    BadTensorShape(Vec<usize>),
}
