//! Calibrated heteroscedastic regression with temperature-annealed
//! likelihood objectives.
//!
//! The crate is organised bottom-up: [`losses`] holds the per-sample
//! objectives, [`optim`] the optimizer and schedules, [`models`] the
//! networks and trainer, [`data`] the generators and readers, [`metrics`]
//! the evaluation suite and [`harness`] the experiment drivers.

pub mod config;
pub mod data;
pub mod error;
pub mod harness;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod optim;

pub use config::{Method, Prior, TrainConfig};
pub use data::{Dataset, NoiseLevel, Split};
pub use error::{LikaError, Result};
pub use harness::{ExperimentReport, SummaryRow};
pub use losses::{LossEval, Objective, TemperaturePair, SIGMA_FLOOR};
pub use metrics::{EvalBatch, MetricsReport};
pub use models::{ModelParams, ModelSpec, PredictiveDistribution, TrainingTrace};
pub use optim::{TemperatureCurve, TemperatureSchedule};
