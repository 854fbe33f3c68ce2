//! Experiment configuration (TOML).
//!
//! Every field has a documented default, so a file holding only `seed` and a
//! `[task]` table is a complete configuration. After parsing, all defaults
//! are resolved and [`ExperimentConfig::dump`] writes the normalized form,
//! which parses back to an identical value.

use serde::{Deserialize, Serialize};

use crate::engine::AlgorithmVariant;
use crate::error::{Error, Result};
use crate::ode::{DEFAULT_H_MAX, DEFAULT_HORIZON};
use crate::schedules::StepSizeSchedule;

fn default_clients() -> usize {
    10
}
fn default_period() -> usize {
    5
}
fn default_batch() -> usize {
    50
}
fn default_rounds() -> usize {
    2000
}
fn default_init_std() -> f64 {
    20.0
}
fn default_output() -> String {
    "out".into()
}

impl Default for AlgorithmVariant {
    fn default() -> Self {
        AlgorithmVariant::Proposed
    }
}

/// `{ c, delta }` for `c / n^delta`, or `{ constant = c }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleSpec {
    Tapering { c: f64, delta: f64 },
    Constant { constant: f64 },
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec::Tapering { c: 0.1, delta: 0.76 }
    }
}

impl ScheduleSpec {
    pub fn build(&self, path: &str, unsafe_delta: bool) -> Result<StepSizeSchedule> {
        match *self {
            ScheduleSpec::Tapering { c, delta } => {
                let built = if unsafe_delta {
                    StepSizeSchedule::tapering_unchecked(c, delta)
                } else {
                    StepSizeSchedule::tapering(c, delta)
                };
                built.map_err(|e| Error::validation(path, e.to_string()))
            }
            ScheduleSpec::Constant { constant } => {
                StepSizeSchedule::constant(constant).map_err(|e| Error::validation(path, e.to_string()))
            }
        }
    }
}

/// Feature scale: one value for all clients, one per client, or a set each
/// client draws from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaX {
    Shared(f64),
    PerClient(Vec<f64>),
    Choose { choose_from: Vec<f64> },
}

impl Default for SigmaX {
    fn default() -> Self {
        SigmaX::Shared(5.0)
    }
}

fn default_d() -> usize {
    3
}
fn default_snr() -> f64 {
    10.0
}
fn default_reg_samples() -> usize {
    5000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionConfig {
    #[serde(default = "default_d")]
    pub d: usize,
    /// Std of the per-client true parameters; ignored when `w_true` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_w: Option<f64>,
    /// Explicit true parameters: one vector shared by all clients, or one per client.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_true: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub sigma_x: SigmaX,
    #[serde(default = "default_snr")]
    pub snr_db: f64,
    #[serde(default = "default_reg_samples")]
    pub n_samples: usize,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            d: default_d(),
            sigma_w: Some(5.0),
            w_true: None,
            sigma_x: SigmaX::default(),
            snr_db: default_snr(),
            n_samples: default_reg_samples(),
        }
    }
}

fn default_classes() -> usize {
    4
}
fn default_cls_d() -> usize {
    5
}
fn default_separation() -> f64 {
    1.5
}
fn default_cls_sigma() -> f64 {
    1.0
}
fn default_cls_samples() -> usize {
    500
}
fn default_test_samples() -> usize {
    4000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassificationConfig {
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_cls_d")]
    pub d: usize,
    /// Class means are drawn from `N(0, separation^2 I)`.
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default = "default_cls_sigma")]
    pub sigma_x: f64,
    /// Training samples per client.
    #[serde(default = "default_cls_samples")]
    pub n_samples: usize,
    /// Balanced held-out set size.
    #[serde(default = "default_test_samples")]
    pub test_samples: usize,
    /// Fraction of a client's data drawn from its dominant class; absent means
    /// uniform over the classes the client holds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dominant_fraction: Option<f64>,
    /// Class held exclusively by client 1 (index 0).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rare_class: Option<usize>,
}

impl Default for ClassificationConfig {
    fn default() -> Self {
        Self {
            classes: default_classes(),
            d: default_cls_d(),
            separation: default_separation(),
            sigma_x: default_cls_sigma(),
            n_samples: default_cls_samples(),
            test_samples: default_test_samples(),
            dominant_fraction: None,
            rare_class: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TaskConfig {
    Regression(RegressionConfig),
    Classification(ClassificationConfig),
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig::Regression(RegressionConfig::default())
    }
}

fn default_true() -> bool {
    true
}
fn default_horizon() -> f64 {
    DEFAULT_HORIZON
}
fn default_h_max() -> f64 {
    DEFAULT_H_MAX
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostics {
    /// Per-round max-over-horizon tracking error (regression only).
    #[serde(default)]
    pub tracking: bool,
    /// Horizon in timescale units.
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_h_max")]
    pub h_max: f64,
    /// Rounds whose full tracking-error series is written to `<name>_tracking.csv`.
    #[serde(default)]
    pub tracking_starts: Vec<usize>,
    /// Keep per-step martingale noise (regression only; memory grows with the run).
    #[serde(default)]
    pub record_noise: bool,
    /// Append `wbar_1..wbar_d` columns.
    #[serde(default)]
    pub dump_wbar: bool,
    /// Write each client's regression dataset as CSV.
    #[serde(default)]
    pub dump_dataset: bool,
    /// Write the normalized config next to the metrics.
    #[serde(default = "default_true")]
    pub dump_config: bool,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Self {
            tracking: false,
            horizon: DEFAULT_HORIZON,
            h_max: DEFAULT_H_MAX,
            tracking_starts: Vec::new(),
            record_noise: false,
            dump_wbar: false,
            dump_dataset: false,
            dump_config: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Number of clients `L`.
    #[serde(default = "default_clients")]
    pub clients: usize,
    /// Aggregation period `N`.
    #[serde(default = "default_period")]
    pub period: usize,
    /// Mini-batch size `m`.
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    /// Std of the initial client iterates.
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    #[serde(default = "default_output")]
    pub output: String,
    /// Accept tapering exponents outside (0.75, 1].
    #[serde(default)]
    pub unsafe_delta: bool,
    #[serde(default)]
    pub algorithm: AlgorithmVariant,
    /// Broadcast schedule, used when `schedules` is absent.
    #[serde(default)]
    pub schedule: ScheduleSpec,
    /// Per-client schedules (length `clients`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedules: Option<Vec<ScheduleSpec>>,
    #[serde(default)]
    pub task: TaskConfig,
    #[serde(default)]
    pub diagnostics: Diagnostics,
}

impl ExperimentConfig {
    /// Default regression setup with the given seed.
    pub fn regression(seed: u64) -> Self {
        Self {
            seed,
            clients: default_clients(),
            period: default_period(),
            batch_size: default_batch(),
            rounds: default_rounds(),
            init_std: default_init_std(),
            output: default_output(),
            unsafe_delta: false,
            algorithm: AlgorithmVariant::Proposed,
            schedule: ScheduleSpec::default(),
            schedules: None,
            task: TaskConfig::Regression(RegressionConfig::default()),
            diagnostics: Diagnostics::default(),
        }
    }

    /// Default rare-class classification setup with the given seed.
    pub fn classification(seed: u64) -> Self {
        Self {
            task: TaskConfig::Classification(ClassificationConfig {
                rare_class: Some(0),
                ..Default::default()
            }),
            ..Self::regression(seed)
        }
    }

    pub fn regression_task(&self) -> Option<&RegressionConfig> {
        match &self.task {
            TaskConfig::Regression(r) => Some(r),
            TaskConfig::Classification(_) => None,
        }
    }

    pub fn regression_task_mut(&mut self) -> Option<&mut RegressionConfig> {
        match &mut self.task {
            TaskConfig::Regression(r) => Some(r),
            TaskConfig::Classification(_) => None,
        }
    }

    /// Per-client schedules after broadcasting.
    pub fn resolve_schedules(&self) -> Result<Vec<StepSizeSchedule>> {
        let built = match &self.schedules {
            Some(list) => {
                if list.len() != self.clients {
                    return Err(Error::validation(
                        "schedules",
                        format!("expected {} entries, found {}", self.clients, list.len()),
                    ));
                }
                list.iter()
                    .enumerate()
                    .map(|(i, s)| s.build(&format!("schedules[{i}]"), self.unsafe_delta))
                    .collect::<Result<Vec<_>>>()?
            }
            None => vec![self.schedule.build("schedule", self.unsafe_delta)?; self.clients],
        };
        if self.algorithm == AlgorithmVariant::Proposed && built.iter().any(|s| !s.is_tapering()) {
            return Err(Error::validation(
                "schedule",
                "constant step sizes are only allowed for the fedavg, fedprox and fednova baselines",
            ));
        }
        Ok(built)
    }

    /// True when some schedule lies outside the admissible exponent band.
    pub fn outside_theory(&self) -> bool {
        self.resolve_schedules()
            .map(|s| s.iter().any(|x| !x.within_band()))
            .unwrap_or(false)
    }

    /// Checks every invariant and resolves defaults that depend on other
    /// fields.
    pub fn validate(mut self) -> Result<Self> {
        if self.clients == 0 {
            return Err(Error::validation("clients", "need at least one client"));
        }
        if self.period < 2 {
            return Err(Error::validation("period", "aggregation period N must be at least 2"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size", "must be at least 1"));
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(Error::validation("init_std", "must be non-negative"));
        }
        self.algorithm
            .validate()
            .map_err(|_| Error::validation("algorithm.mu", "fedprox mu must be positive"))?;
        self.resolve_schedules()?;
        let d = &self.diagnostics;
        if !(d.horizon > 0.0 && d.horizon.is_finite()) {
            return Err(Error::validation("diagnostics.horizon", "must be positive"));
        }
        if !(d.h_max > 0.0 && d.h_max.is_finite()) {
            return Err(Error::validation("diagnostics.h_max", "must be positive"));
        }
        if let Some(&bad) = d.tracking_starts.iter().find(|&&n| n >= self.rounds) {
            return Err(Error::validation(
                "diagnostics.tracking_starts",
                format!("round {bad} is not before the last round {}", self.rounds),
            ));
        }
        let clients = self.clients;
        match &mut self.task {
            TaskConfig::Regression(r) => validate_regression(r, clients)?,
            TaskConfig::Classification(c) => validate_classification(c, clients)?,
        }
        Ok(self)
    }

    pub fn dump(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }
}

fn validate_regression(r: &mut RegressionConfig, clients: usize) -> Result<()> {
    if r.d == 0 {
        return Err(Error::validation("task.d", "must be at least 1"));
    }
    if r.n_samples == 0 {
        return Err(Error::validation("task.n_samples", "must be at least 1"));
    }
    if !r.snr_db.is_finite() {
        return Err(Error::validation("task.snr_db", "must be finite"));
    }
    match &r.w_true {
        Some(ws) => {
            if ws.len() != 1 && ws.len() != clients {
                return Err(Error::validation(
                    "task.w_true",
                    format!("expected 1 or {clients} vectors, found {}", ws.len()),
                ));
            }
            if let Some(i) = ws.iter().position(|w| w.len() != r.d) {
                return Err(Error::validation(format!("task.w_true[{i}]"), format!("expected length {}", r.d)));
            }
            if let Some(i) = ws.iter().position(|w| w.iter().all(|&x| x == 0.0)) {
                return Err(Error::validation(format!("task.w_true[{i}]"), "zero vector has no SNR"));
            }
            r.sigma_w = None;
        }
        None => {
            let s = *r.sigma_w.get_or_insert(5.0);
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::validation("task.sigma_w", "must be positive"));
            }
        }
    }
    let scales: &[f64] = match &r.sigma_x {
        SigmaX::Shared(s) => std::slice::from_ref(s),
        SigmaX::PerClient(v) => {
            if v.len() != clients {
                return Err(Error::validation(
                    "task.sigma_x",
                    format!("expected {clients} entries, found {}", v.len()),
                ));
            }
            v
        }
        SigmaX::Choose { choose_from } => {
            if choose_from.is_empty() {
                return Err(Error::validation("task.sigma_x.choose_from", "must not be empty"));
            }
            choose_from
        }
    };
    if scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::validation("task.sigma_x", "feature scales must be positive"));
    }
    Ok(())
}

fn validate_classification(c: &ClassificationConfig, clients: usize) -> Result<()> {
    if c.classes < 2 {
        return Err(Error::validation("task.classes", "need at least 2 classes"));
    }
    if c.d == 0 {
        return Err(Error::validation("task.d", "must be at least 1"));
    }
    if !(c.separation > 0.0 && c.sigma_x > 0.0) {
        return Err(Error::validation("task.separation", "separation and sigma_x must be positive"));
    }
    if c.n_samples == 0 || c.test_samples == 0 {
        return Err(Error::validation("task.n_samples", "sample counts must be positive"));
    }
    if let Some(f) = c.dominant_fraction {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::validation("task.dominant_fraction", "must lie in [0, 1]"));
        }
    }
    if let Some(r) = c.rare_class {
        if r >= c.classes {
            return Err(Error::validation("task.rare_class", format!("must be below {}", c.classes)));
        }
        if clients < 2 {
            return Err(Error::validation("task.rare_class", "needs at least two clients"));
        }
    }
    Ok(())
}

/// Parses a TOML experiment configuration without validating it, so callers
/// can apply overrides first.
pub fn parse_config_unvalidated(text: &str) -> Result<ExperimentConfig> {
    toml::from_str(text).map_err(|e| {
        let span = e.span().map(|s| format!(" (bytes {}..{})", s.start, s.end)).unwrap_or_default();
        Error::validation("<config>", format!("{}{span}", e.message()))
    })
}

/// Parses and validates a TOML experiment configuration.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_config_unvalidated(text)?.validate()
}
