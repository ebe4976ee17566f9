//! Driving-context classification from evidential occupancy grids.
//!
//! The crate is organised as a pipeline:
//!
//! * [`ds_fusion`] turns lidar scans into Dempster-Shafer occupancy grids.
//! * [`scenario_sim`] builds synthetic driving scenes and casts simulated scans.
//! * [`dataset_io`] stores labelled grids, splits datasets and scores classifiers.
//! * [`tensor_net`] is a small from-scratch CNN engine with backpropagation.
//! * [`neuroevolve`] searches the classifier's hyperparameters with a genetic algorithm.
//! * [`cli`] wires everything into the `dgn` binary.

pub mod cli;
pub mod dataset_io;
pub mod ds_fusion;
pub mod neuroevolve;
pub mod rng;
pub mod scenario_sim;
pub mod tensor_net;

pub use dataset_io::{ConfusionMatrix, GridRecord, Metrics, SplitDataset};
pub use ds_fusion::{GridSpec, MassAssignment, OccupancyGrid, SensorPose};
pub use scenario_sim::{ContextClass, LidarScan, Scene};
pub use tensor_net::{NetworkSpec, Parameters, Tensor};
