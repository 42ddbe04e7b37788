//! Radio environment map toolkit.
//!
//! Converts UE walk-test reports into RSSI samples, interpolates them onto
//! coverage rasters with six spatial methods, benchmarks those methods with
//! k-fold cross-validation, and generates synthetic log-distance scenes with
//! known ground truth.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`.

pub mod cli;
pub mod error;
pub mod eval;
pub mod geo_grid;
pub mod interp;
pub mod pipeline;
pub mod scalar;
pub mod scene;
pub mod signal;

pub use error::{Error, Result};
pub use eval::{crossval, kfold_split, mape, nmse, render_report, rmse, EvalReport, ReportFormat};
pub use geo_grid::{aggregate, bin_index, project, unproject, GeoPoint, Reducer};
pub use interp::{fit, predict, InterpolatorConfig, Method};
pub use pipeline::{build_map, build_sinr_map, compare_maps, ingest_walktest};
pub use scalar::Scalar;
pub use scene::{ground_truth_raster, sample_scene, synth_walk_path};
pub use signal::{rssi_from_report, validate_report};

pub type LocalPoint = geo_grid::LocalPoint<f64>;
pub type GridSpec = geo_grid::GridSpec<f64>;
pub type Raster = geo_grid::Raster<f64>;
pub type TrainingSet = interp::TrainingSet<f64>;
pub type FittedModel = interp::FittedModel<f64>;
pub type UeReport = signal::UeReport<f64>;
pub type Transmitter = scene::Transmitter<f64>;
pub type SceneConfig = scene::SceneConfig<f64>;
pub type WalkTestRecord = pipeline::WalkTestRecord<f64>;
