//! Federated learning viewed as stochastic approximation.
//!
//! Clients run local SGD with their own tapering step sizes and a server
//! averages them every `N` steps. The aggregate is compared against the
//! limiting ODE on the timescale of the dominant schedule.

pub mod config;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod ode;
pub mod rng;
pub mod schedules;
pub mod tasks;
pub mod vector;

pub use config::{parse_config, ExperimentConfig, ScheduleSpec, TaskConfig};
pub use engine::{AlgorithmVariant, ClientState, FederatedState, NoiseLog, RoundSummary};
pub use error::{Error, Result};
pub use metrics::{CsvSchema, CsvSink, MetricsRecord};
pub use schedules::{event_times, validate_and_rank, LimitingWeights, StepSizeSchedule};
pub use tasks::{LocalObjective, RegressionTask};
