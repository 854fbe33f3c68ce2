//! Experiment orchestration: building clients from a configuration, running
//! the federated loop while emitting metrics, and the sweep, baseline and
//! classification studies built on top of it.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::{ClassificationConfig, ExperimentConfig, ScheduleSpec, SigmaX, TaskConfig};
use crate::engine::{AlgorithmVariant, FederatedState, NoiseLog};
use crate::error::{Error, Result};
use crate::metrics::{self, CsvSchema, CsvSink, MetricsRecord};
use crate::ode::{self, InterpolatedPath};
use crate::rng::{stream, Domain};
use crate::schedules::{event_times, validate_and_rank, LimitingWeights, StepSizeSchedule};
use crate::tasks::softmax::{generate_classification_data, LabeledSamples, SoftmaxClient, SoftmaxParams, SoftmaxTask};
use crate::tasks::{closed_form_optimum, generate_regression_data, noise_sigma_from_snr, RegressionClient, RegressionTask};
use crate::vector;

/// Fraction of the run treated as its tail in summaries.
pub const TAIL_FRACTION: f64 = 0.2;

fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize, std: f64) -> Vec<f64> {
    (0..dim).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Regression clients, their schedules and the resulting optimum.
#[derive(Debug, Clone)]
pub struct RegressionSetup {
    pub clients: Vec<RegressionClient>,
    pub schedules: Vec<StepSizeSchedule>,
    pub weights: LimitingWeights,
    /// Index of the schedule that defines the timescale.
    pub reference: usize,
    pub w_star: Vec<f64>,
    pub inits: Vec<Vec<f64>>,
}

impl RegressionSetup {
    pub fn tasks(&self) -> Vec<RegressionTask> {
        self.clients.iter().map(|c| c.task.clone()).collect()
    }
}

/// Limiting weights for tapering runs; equal weights for constant-step runs.
fn weights_for(schedules: &[StepSizeSchedule]) -> Result<(LimitingWeights, usize)> {
    if schedules.iter().all(StepSizeSchedule::is_tapering) {
        let w = validate_and_rank(schedules)?;
        let r = w.ref_index();
        Ok((w, r))
    } else {
        let reference = (0..schedules.len())
            .max_by(|&a, &b| schedules[a].step_size(1).total_cmp(&schedules[b].step_size(1)).then(b.cmp(&a)))
            .unwrap_or(0);
        Ok((LimitingWeights::uniform(schedules.len()), reference))
    }
}

pub fn build_regression(cfg: &ExperimentConfig) -> Result<RegressionSetup> {
    let task_cfg = cfg
        .regression_task()
        .ok_or_else(|| Error::validation("task.kind", "expected a regression task"))?;
    let schedules = cfg.resolve_schedules()?;
    let (weights, reference) = weights_for(&schedules)?;
    let d = task_cfg.d;
    let mut clients = Vec::with_capacity(cfg.clients);
    let mut inits = Vec::with_capacity(cfg.clients);
    for i in 0..cfg.clients {
        let mut task_rng = stream(cfg.seed, Domain::Task, i as u32);
        let w_true = match &task_cfg.w_true {
            Some(ws) if ws.len() == 1 => ws[0].clone(),
            Some(ws) => ws[i].clone(),
            None => gaussian_vector(&mut task_rng, d, task_cfg.sigma_w.unwrap_or(5.0)),
        };
        let sigma_x = match &task_cfg.sigma_x {
            SigmaX::Shared(s) => *s,
            SigmaX::PerClient(v) => v[i],
            SigmaX::Choose { choose_from } => choose_from[task_rng.random_range(0..choose_from.len())],
        };
        let sigma_eps = noise_sigma_from_snr(sigma_x, &w_true, task_cfg.snr_db)?;
        let task = RegressionTask::new(w_true, sigma_x, sigma_eps, task_cfg.n_samples)?;
        let data = generate_regression_data(&task, &mut stream(cfg.seed, Domain::Data, i as u32));
        clients.push(RegressionClient { task, data });
        inits.push(gaussian_vector(&mut stream(cfg.seed, Domain::Init, i as u32), d, cfg.init_std));
    }
    let tasks: Vec<RegressionTask> = clients.iter().map(|c| c.task.clone()).collect();
    let w_star = closed_form_optimum(&tasks, &weights)?;
    Ok(RegressionSetup {
        clients,
        schedules,
        weights,
        reference,
        w_star,
        inits,
    })
}

/// Everything a regression run leaves behind.
#[derive(Debug, Clone)]
pub struct RegressionRun {
    pub setup: RegressionSetup,
    pub records: Vec<MetricsRecord>,
    /// Aggregates `w_bar_{nN}` for `n = 0..=rounds`.
    pub w_bars: Vec<Vec<f64>>,
    /// Event times `T_0..T_rounds` of the reference schedule.
    pub times: Vec<f64>,
    pub noise: Option<NoiseLog>,
    pub final_state: FederatedState,
}

impl RegressionRun {
    pub fn final_w_bar(&self) -> &[f64] {
        self.w_bars.last().expect("at least the initial aggregate")
    }

    pub fn path(&self) -> Result<InterpolatedPath> {
        InterpolatedPath::new(self.times.clone(), self.w_bars.clone())
    }

    /// Tracking-error series launched at round `n_start`, horizon in
    /// timescale units, clamped to the recorded rounds.
    pub fn tracking_series(&self, n_start: usize, horizon: f64, h_max: f64) -> Result<Vec<f64>> {
        let m = ode::horizon_rounds(&self.times, n_start, horizon);
        ode::tracking_error(&self.path()?, &self.setup.weights, &self.setup.tasks(), n_start, m, h_max)
    }
}

fn regression_schema(cfg: &ExperimentConfig) -> CsvSchema {
    CsvSchema::Regression {
        clients: cfg.clients,
        wbar_dim: cfg
            .diagnostics
            .dump_wbar
            .then(|| cfg.regression_task().map_or(0, |r| r.d)),
    }
}

pub fn schema_for(cfg: &ExperimentConfig) -> CsvSchema {
    match cfg.task {
        TaskConfig::Regression(_) => regression_schema(cfg),
        TaskConfig::Classification(_) => CsvSchema::Classification,
    }
}

/// Runs a regression experiment. Records go to `sink` as each round
/// finishes; with per-round tracking enabled they are held back until the
/// run ends, since each entry looks ahead one horizon. On failure, whatever
/// was produced is flushed before the error is returned.
pub fn run_regression<W: Write>(cfg: &ExperimentConfig, mut sink: Option<&mut CsvSink<W>>) -> Result<RegressionRun> {
    let setup = build_regression(cfg)?;
    let tasks = setup.tasks();
    let times = event_times(&setup.schedules[setup.reference], cfg.period, cfg.rounds);
    let mut state = FederatedState::new(
        setup.inits.clone(),
        setup.schedules.clone(),
        cfg.period,
        cfg.algorithm,
        cfg.seed,
    )?;
    let mut noise = cfg.diagnostics.record_noise.then(NoiseLog::default);
    let defer = cfg.diagnostics.tracking;

    let mut records = Vec::with_capacity(cfg.rounds + 1);
    let mut w_bars = Vec::with_capacity(cfg.rounds + 1);
    state.aggregate()?;
    let first = metrics::record_round(0, 0, Some(times[0]), &state.w_bar, None, &tasks, &setup.weights, Some(&setup.w_star));
    let emit = |sink: &mut Option<&mut CsvSink<W>>, r: &MetricsRecord| -> Result<()> {
        match sink.as_deref_mut() {
            Some(s) if !defer => s.write(r),
            _ => Ok(()),
        }
    };
    emit(&mut sink, &first)?;
    records.push(first);
    w_bars.push(state.w_bar.clone());

    for _ in 0..cfg.rounds {
        let prev = state.w_bar.clone();
        let summary = match state.run_round(&setup.clients, cfg.batch_size, noise.as_mut()) {
            Ok(s) => s,
            Err(e) => {
                if let Some(s) = sink.as_deref_mut() {
                    if defer {
                        for r in &records {
                            s.write(r)?;
                        }
                    }
                    s.flush()?;
                }
                return Err(e);
            }
        };
        let r = metrics::record_round(
            summary.round,
            summary.global_step,
            Some(times[summary.round]),
            &state.w_bar,
            Some(&prev),
            &tasks,
            &setup.weights,
            Some(&setup.w_star),
        );
        emit(&mut sink, &r)?;
        records.push(r);
        w_bars.push(state.w_bar.clone());
    }

    let mut run = RegressionRun {
        setup,
        records,
        w_bars,
        times,
        noise,
        final_state: state,
    };
    if defer {
        for n in 0..cfg.rounds {
            let series = run.tracking_series(n, cfg.diagnostics.horizon, cfg.diagnostics.h_max)?;
            run.records[n].tracking_error = Some(series.iter().copied().fold(0.0, f64::max));
        }
        if let Some(s) = sink.as_deref_mut() {
            for r in &run.records {
                s.write(r)?;
            }
        }
    }
    if let Some(s) = sink {
        s.flush()?;
    }
    Ok(run)
}

/// Classification clients, shared evaluation sets and schedules.
#[derive(Debug, Clone)]
pub struct ClassificationSetup {
    pub task: SoftmaxTask,
    pub clients: Vec<SoftmaxClient>,
    pub train: LabeledSamples,
    pub test: LabeledSamples,
    pub schedules: Vec<StepSizeSchedule>,
    pub rare_class: Option<usize>,
}

/// Class proportions for client `i`.
///
/// With a rare class, client 0 holds only that class and the others share the
/// remaining classes; otherwise client `i` favors class `i mod K` when a
/// dominant fraction is set.
pub fn client_proportions(c: &ClassificationConfig, i: usize) -> Vec<f64> {
    let k = c.classes;
    let pool: Vec<usize> = match c.rare_class {
        Some(r) if i == 0 => return (0..k).map(|j| if j == r { 1.0 } else { 0.0 }).collect(),
        Some(r) => (0..k).filter(|&j| j != r).collect(),
        None => (0..k).collect(),
    };
    let mut p = vec![0.0; k];
    match c.dominant_fraction {
        Some(f) if pool.len() > 1 => {
            let dominant_slot = match c.rare_class {
                Some(_) => (i - 1) % pool.len(),
                None => i % pool.len(),
            };
            let rest = (1.0 - f) / (pool.len() - 1) as f64;
            for (slot, &j) in pool.iter().enumerate() {
                p[j] = if slot == dominant_slot { f } else { rest };
            }
        }
        _ => {
            for &j in &pool {
                p[j] = 1.0 / pool.len() as f64;
            }
        }
    }
    p
}

pub fn build_classification(cfg: &ExperimentConfig) -> Result<ClassificationSetup> {
    let c = match &cfg.task {
        TaskConfig::Classification(c) => c,
        TaskConfig::Regression(_) => return Err(Error::validation("task.kind", "expected a classification task")),
    };
    let task = SoftmaxTask::with_random_means(
        c.classes,
        c.d,
        c.separation,
        c.sigma_x,
        c.n_samples,
        &mut stream(cfg.seed, Domain::Task, 0),
    )?;
    let mut clients = Vec::with_capacity(cfg.clients);
    let mut train = LabeledSamples::new(c.d);
    for i in 0..cfg.clients {
        let props = client_proportions(c, i);
        let data = generate_classification_data(&task, &props, c.n_samples, &mut stream(cfg.seed, Domain::Data, i as u32))?;
        train.extend(&data);
        clients.push(SoftmaxClient {
            classes: c.classes,
            data,
        });
    }
    let uniform = vec![1.0 / c.classes as f64; c.classes];
    let test = generate_classification_data(&task, &uniform, c.test_samples, &mut stream(cfg.seed, Domain::Test, 0))?;
    Ok(ClassificationSetup {
        task,
        clients,
        train,
        test,
        schedules: cfg.resolve_schedules()?,
        rare_class: c.rare_class,
    })
}

#[derive(Debug, Clone)]
pub struct ClassificationRun {
    pub setup: ClassificationSetup,
    pub records: Vec<MetricsRecord>,
    pub final_params: SoftmaxParams,
}

/// Runs the linear-softmax experiment. Models start at zero.
pub fn run_classification<W: Write>(
    cfg: &ExperimentConfig,
    mut sink: Option<&mut CsvSink<W>>,
) -> Result<ClassificationRun> {
    let setup = build_classification(cfg)?;
    let (k, d) = (setup.task.classes(), setup.task.dim());
    let dim = SoftmaxParams::flat_len(k, d);
    let mut state = FederatedState::new(
        vec![vec![0.0; dim]; cfg.clients],
        setup.schedules.clone(),
        cfg.period,
        cfg.algorithm,
        cfg.seed,
    )?;
    state.aggregate()?;
    let mut records = Vec::with_capacity(cfg.rounds + 1);
    let record = |round: usize, step: u64, w: &[f64], delta: Option<f64>| -> Result<MetricsRecord> {
        let params = SoftmaxParams::from_flat(k, d, w)?;
        Ok(metrics::record_classification_round(
            round,
            step,
            &params,
            delta,
            &setup.train,
            &setup.test,
            setup.rare_class,
        ))
    };
    let first = record(0, 0, &state.w_bar, None)?;
    if let Some(s) = sink.as_deref_mut() {
        s.write(&first)?;
    }
    records.push(first);
    for _ in 0..cfg.rounds {
        let summary = match state.run_round(&setup.clients, cfg.batch_size, None) {
            Ok(s) => s,
            Err(e) => {
                if let Some(s) = sink.as_deref_mut() {
                    s.flush()?;
                }
                return Err(e);
            }
        };
        let r = record(summary.round, summary.global_step, &state.w_bar, Some(summary.delta_wbar))?;
        if let Some(s) = sink.as_deref_mut() {
            s.write(&r)?;
        }
        records.push(r);
    }
    if let Some(s) = sink {
        s.flush()?;
    }
    let final_params = SoftmaxParams::from_flat(k, d, &state.w_bar)?;
    Ok(ClassificationRun {
        setup,
        records,
        final_params,
    })
}

/// Outcome of [`run_experiment`].
#[derive(Debug, Clone)]
pub enum RunOutput {
    Regression(Box<RegressionRun>),
    Classification(Box<ClassificationRun>),
}

impl RunOutput {
    pub fn records(&self) -> &[MetricsRecord] {
        match self {
            RunOutput::Regression(r) => &r.records,
            RunOutput::Classification(c) => &c.records,
        }
    }

    pub fn final_w_bar(&self) -> Vec<f64> {
        match self {
            RunOutput::Regression(r) => r.final_w_bar().to_vec(),
            RunOutput::Classification(c) => c.final_params.to_flat(),
        }
    }
}

pub fn run_experiment<W: Write>(cfg: &ExperimentConfig, sink: Option<&mut CsvSink<W>>) -> Result<RunOutput> {
    match cfg.task {
        TaskConfig::Regression(_) => run_regression(cfg, sink).map(|r| RunOutput::Regression(Box::new(r))),
        TaskConfig::Classification(_) => {
            run_classification(cfg, sink).map(|r| RunOutput::Classification(Box::new(r)))
        }
    }
}

/// Files written by [`run_to_dir`].
#[derive(Debug, Clone)]
pub struct RunFiles {
    pub metrics: PathBuf,
    pub config: Option<PathBuf>,
    pub tracking: Option<PathBuf>,
    pub datasets: Vec<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Runs `cfg`, writing `<name>.csv` (plus the normalized `<name>.toml`, and
/// optional tracking and dataset files) into `dir`. Runs whose schedules lie
/// outside the admissible band get an `_unsupported` suffix.
pub fn run_to_dir(cfg: &ExperimentConfig, dir: &Path, name: &str) -> Result<(RunOutput, RunFiles)> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let name = if cfg.outside_theory() {
        format!("{name}_unsupported")
    } else {
        name.to_string()
    };
    let metrics_path = dir.join(format!("{name}.csv"));
    let config_path = cfg.diagnostics.dump_config.then(|| dir.join(format!("{name}.toml")));
    if let Some(p) = &config_path {
        let mut text = String::new();
        if cfg.outside_theory() {
            text.push_str("# step-size exponents outside (0.75, 1]: convergence is not covered by the theory\n");
        }
        text.push_str(&cfg.dump());
        fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
    }
    let mut sink = CsvSink::new(create(&metrics_path)?, schema_for(cfg))?;
    let output = run_experiment(cfg, Some(&mut sink))?;
    drop(sink);

    let mut files = RunFiles {
        metrics: metrics_path,
        config: config_path,
        tracking: None,
        datasets: Vec::new(),
    };
    if let RunOutput::Regression(run) = &output {
        if !cfg.diagnostics.tracking_starts.is_empty() {
            let series = cfg
                .diagnostics
                .tracking_starts
                .iter()
                .map(|&n| {
                    run.tracking_series(n, cfg.diagnostics.horizon, cfg.diagnostics.h_max)
                        .map(|s| (n, s))
                })
                .collect::<Result<Vec<_>>>()?;
            let path = dir.join(format!("{name}_tracking.csv"));
            metrics::write_tracking_csv(&series, &run.times, create(&path)?)?;
            files.tracking = Some(path);
        }
        if cfg.diagnostics.dump_dataset {
            for (i, c) in run.setup.clients.iter().enumerate() {
                let path = dir.join(format!("{name}_data_c{}.csv", i + 1));
                c.data.write_csv(create(&path)?)?;
                files.datasets.push(path);
            }
        }
    }
    Ok((output, files))
}

/// Parameters a sweep may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Delta,
    SnrDb,
    Period,
    SigmaW,
    /// Each value is a `/`-separated set of feature scales clients draw from.
    SigmaXSet,
}

impl SweepParam {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "delta" => Ok(SweepParam::Delta),
            "snr_db" | "snr" => Ok(SweepParam::SnrDb),
            "N" | "period" => Ok(SweepParam::Period),
            "sigma_w" => Ok(SweepParam::SigmaW),
            "sigma_x-set" | "sigma_x_set" | "sigma_x" => Ok(SweepParam::SigmaXSet),
            other => Err(Error::validation(
                "sweep.param",
                format!("unknown parameter `{other}` (expected delta, snr_db, N, sigma_w or sigma_x-set)"),
            )),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::Delta => "delta",
            SweepParam::SnrDb => "snr_db",
            SweepParam::Period => "N",
            SweepParam::SigmaW => "sigma_w",
            SweepParam::SigmaXSet => "sigma_x-set",
        }
    }
}

fn parse_number(value: &str) -> Result<f64> {
    value
        .trim()
        .parse::<f64>()
        .map_err(|e| Error::validation("sweep.values", format!("`{value}`: {e}")))
}

/// `cfg` with one parameter replaced, re-validated.
pub fn apply_sweep(cfg: &ExperimentConfig, param: SweepParam, value: &str) -> Result<ExperimentConfig> {
    let mut out = cfg.clone();
    match param {
        SweepParam::Delta => {
            let delta = parse_number(value)?;
            let rewrite = |s: &ScheduleSpec| match *s {
                ScheduleSpec::Tapering { c, .. } => Ok(ScheduleSpec::Tapering { c, delta }),
                ScheduleSpec::Constant { .. } => Err(Error::validation("schedule", "cannot sweep delta of a constant schedule")),
            };
            out.schedule = rewrite(&out.schedule)?;
            if let Some(list) = &out.schedules {
                out.schedules = Some(list.iter().map(rewrite).collect::<Result<_>>()?);
            }
        }
        SweepParam::Period => {
            let n = parse_number(value)?;
            if n.fract() != 0.0 || n < 0.0 {
                return Err(Error::validation("sweep.values", format!("N = {value} is not an integer")));
            }
            out.period = n as usize;
        }
        SweepParam::SnrDb | SweepParam::SigmaW | SweepParam::SigmaXSet => {
            let r = out
                .regression_task_mut()
                .ok_or_else(|| Error::validation("sweep.param", "this parameter needs a regression task"))?;
            match param {
                SweepParam::SnrDb => r.snr_db = parse_number(value)?,
                SweepParam::SigmaW => {
                    r.sigma_w = Some(parse_number(value)?);
                    r.w_true = None;
                }
                _ => {
                    let set = value.split('/').map(parse_number).collect::<Result<Vec<_>>>()?;
                    r.sigma_x = if set.len() == 1 {
                        SigmaX::Shared(set[0])
                    } else {
                        SigmaX::Choose { choose_from: set }
                    };
                }
            }
        }
    }
    out.validate()
}

fn file_safe(value: &str) -> String {
    value
        .chars()
        .map(|ch| if ch.is_ascii_alphanumeric() || ch == '.' || ch == '-' { ch } else { '_' })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub value: String,
    pub metrics: PathBuf,
    pub output: RunOutput,
}

/// One run per value, all on the configuration's seed, plus `sweep_index.csv`
/// (`param,value,csv`).
pub fn run_sweep(cfg: &ExperimentConfig, param: SweepParam, values: &[String], dir: &Path) -> Result<(PathBuf, Vec<SweepEntry>)> {
    if values.is_empty() {
        return Err(Error::validation("sweep.values", "need at least one value"));
    }
    let configs = values
        .iter()
        .map(|v| apply_sweep(cfg, param, v))
        .collect::<Result<Vec<_>>>()?;
    let mut entries = Vec::with_capacity(values.len());
    for (value, c) in values.iter().zip(&configs) {
        let name = format!("{}_{}", file_safe(param.name()), file_safe(value));
        let (output, files) = run_to_dir(c, dir, &name)?;
        entries.push(SweepEntry {
            value: value.clone(),
            metrics: files.metrics,
            output,
        });
    }
    let index = dir.join("sweep_index.csv");
    let mut w = create(&index)?;
    writeln!(w, "param,value,csv")?;
    for e in &entries {
        let file = e.metrics.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
        writeln!(w, "{},{},{}", param.name(), e.value, file)?;
    }
    w.flush()?;
    Ok((index, entries))
}

fn tail<T: Copy>(values: &[T], fraction: f64) -> &[T] {
    let n = ((values.len() as f64 * fraction).ceil() as usize).clamp(1.min(values.len()), values.len());
    &values[values.len() - n..]
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median `delta_wbar` over the last `TAIL_FRACTION` of rounds.
pub fn tail_median_delta(records: &[MetricsRecord]) -> f64 {
    let deltas: Vec<f64> = records.iter().filter_map(|r| r.delta_wbar).collect();
    median(tail(&deltas, TAIL_FRACTION))
}

/// Population standard deviation of a series' last `fraction`.
pub fn tail_std(values: &[f64], fraction: f64) -> f64 {
    let t = tail(values, fraction);
    let mean = t.iter().sum::<f64>() / t.len() as f64;
    (t.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t.len() as f64).sqrt()
}

pub fn tail_mean(values: &[f64], fraction: f64) -> f64 {
    let t = tail(values, fraction);
    t.iter().sum::<f64>() / t.len() as f64
}

/// One row of the baseline comparison.
#[derive(Debug, Clone)]
pub struct BaselineRow {
    /// `constant` or `tapering`.
    pub group: &'static str,
    pub algorithm: AlgorithmVariant,
    pub metrics: PathBuf,
    /// `Err` carries the failure when the run aborted (e.g. divergence).
    pub outcome: std::result::Result<BaselineStats, String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineStats {
    pub tail_median_delta: f64,
    pub final_param_error: f64,
    pub final_rel_error: f64,
    pub final_agg_grad_norm: f64,
}

pub const BASELINE_CONSTANT_STEP: f64 = 0.1;

/// The eight runs of the baseline comparison: in each group the proposed
/// method with `0.1 / n^0.76`, then FedAvg, FedProx and FedNova with either
/// the constant step 0.1 or the same tapering schedule.
pub fn baseline_configs(cfg: &ExperimentConfig) -> Vec<(&'static str, ExperimentConfig)> {
    let tapering = ScheduleSpec::Tapering { c: 0.1, delta: 0.76 };
    let mu = match cfg.algorithm {
        AlgorithmVariant::Fedprox { mu } => mu,
        _ => crate::engine::DEFAULT_PROX_MU,
    };
    let mut out = Vec::with_capacity(8);
    for (group, schedule) in [
        ("constant", ScheduleSpec::Constant { constant: BASELINE_CONSTANT_STEP }),
        ("tapering", tapering),
    ] {
        for algorithm in [
            AlgorithmVariant::Proposed,
            AlgorithmVariant::Fedavg,
            AlgorithmVariant::Fedprox { mu },
            AlgorithmVariant::Fednova,
        ] {
            let mut c = cfg.clone();
            c.algorithm = algorithm;
            c.schedules = None;
            c.schedule = if algorithm == AlgorithmVariant::Proposed { tapering } else { schedule };
            out.push((group, c));
        }
    }
    out
}

fn baseline_stats(run: &RegressionRun) -> BaselineStats {
    let last = run.records.last().expect("initial record");
    let err = last.param_error.unwrap_or(f64::NAN);
    BaselineStats {
        tail_median_delta: tail_median_delta(&run.records),
        final_param_error: err,
        final_rel_error: err / vector::norm(&run.setup.w_star),
        final_agg_grad_norm: last.agg_grad_norm.unwrap_or(f64::NAN),
    }
}

/// Runs all baseline configurations into `dir` and writes
/// `baselines_summary.csv`. A run that aborts is reported in its row rather
/// than stopping the comparison.
pub fn compare_baselines(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<BaselineRow>> {
    if cfg.regression_task().is_none() {
        return Err(Error::validation("task.kind", "baseline comparison needs a regression task"));
    }
    let mut rows = Vec::with_capacity(8);
    for (group, c) in baseline_configs(cfg) {
        let name = format!("{group}_{}", c.algorithm.name());
        let outcome = match run_to_dir(&c, dir, &name) {
            Ok((RunOutput::Regression(run), _)) => Ok(baseline_stats(&run)),
            Ok(_) => unreachable!("regression config"),
            Err(Error::Io(e)) => return Err(Error::Io(e)),
            Err(e) => Err(e.to_string()),
        };
        rows.push(BaselineRow {
            group,
            algorithm: c.algorithm,
            metrics: dir.join(format!("{name}.csv")),
            outcome,
        });
    }
    let mut w = create(&dir.join("baselines_summary.csv"))?;
    writeln!(w, "group,algorithm,tail_median_delta_wbar,final_param_error,final_rel_error,final_agg_grad_norm,status")?;
    for r in &rows {
        match &r.outcome {
            Ok(s) => writeln!(
                w,
                "{},{},{},{},{},{},ok",
                r.group,
                r.algorithm.name(),
                metrics::format_float(s.tail_median_delta),
                metrics::format_float(s.final_param_error),
                metrics::format_float(s.final_rel_error),
                metrics::format_float(s.final_agg_grad_norm)
            )?,
            Err(msg) => writeln!(w, "{},{},,,,,\"failed: {}\"", r.group, r.algorithm.name(), msg.replace('"', "'"))?,
        }
    }
    w.flush()?;
    Ok(rows)
}

/// The three rare-class step-size regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassRegime {
    /// Every client uses `0.1 / n^0.76` (`p = 1` for all).
    Uniform,
    /// Rare-class client `0.1 / n^0.76`, others `0.01 / n^0.76` (`p = 0.1`).
    Finite,
    /// Rare-class client `0.1 / n`, others `0.1 / n^0.76` (`p_1 = 0`).
    Vanishing,
}

impl ClassRegime {
    pub const ALL: [ClassRegime; 3] = [ClassRegime::Uniform, ClassRegime::Finite, ClassRegime::Vanishing];

    pub fn name(&self) -> &'static str {
        match self {
            ClassRegime::Uniform => "uniform",
            ClassRegime::Finite => "finite",
            ClassRegime::Vanishing => "vanishing",
        }
    }

    pub fn schedules(&self, clients: usize) -> Vec<ScheduleSpec> {
        let (first, rest) = match self {
            ClassRegime::Uniform => ((0.1, 0.76), (0.1, 0.76)),
            ClassRegime::Finite => ((0.1, 0.76), (0.01, 0.76)),
            ClassRegime::Vanishing => ((0.1, 1.0), (0.1, 0.76)),
        };
        (0..clients)
            .map(|i| {
                let (c, delta) = if i == 0 { first } else { rest };
                ScheduleSpec::Tapering { c, delta }
            })
            .collect()
    }

    pub fn apply(&self, cfg: &ExperimentConfig) -> ExperimentConfig {
        let mut c = cfg.clone();
        c.schedules = Some(self.schedules(cfg.clients));
        c.algorithm = AlgorithmVariant::Proposed;
        if let TaskConfig::Classification(t) = &mut c.task {
            t.rare_class.get_or_insert(0);
        }
        c
    }
}

#[derive(Debug, Clone)]
pub struct RegimeSummary {
    pub regime: ClassRegime,
    pub metrics: PathBuf,
    pub tail_test_acc: f64,
    pub tail_rare_acc: f64,
    pub majority_baseline: f64,
}

/// Accuracy of always predicting the most frequent test label.
pub fn majority_baseline(test: &LabeledSamples, classes: usize) -> f64 {
    let mut counts = vec![0usize; classes];
    for &y in test.labels() {
        counts[y] += 1;
    }
    *counts.iter().max().unwrap_or(&0) as f64 / test.len().max(1) as f64
}

/// Runs the three rare-class regimes and writes `classify_summary.csv`.
pub fn classify_regimes(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<RegimeSummary>> {
    if !matches!(cfg.task, TaskConfig::Classification(_)) {
        return Err(Error::validation("task.kind", "classification study needs a classification task"));
    }
    let mut out = Vec::with_capacity(3);
    for regime in ClassRegime::ALL {
        let c = regime.apply(cfg).validate()?;
        let (output, files) = run_to_dir(&c, dir, &format!("classify_{}", regime.name()))?;
        let RunOutput::Classification(run) = output else {
            unreachable!("classification config")
        };
        let test_acc: Vec<f64> = run.records.iter().filter_map(|r| r.test_acc).collect();
        let rare_acc: Vec<f64> = run.records.iter().filter_map(|r| r.rare_class_acc).collect();
        out.push(RegimeSummary {
            regime,
            metrics: files.metrics,
            tail_test_acc: tail_mean(&test_acc, TAIL_FRACTION),
            tail_rare_acc: tail_mean(&rare_acc, TAIL_FRACTION),
            majority_baseline: majority_baseline(&run.setup.test, run.setup.task.classes()),
        });
    }
    let mut w = create(&dir.join("classify_summary.csv"))?;
    writeln!(w, "regime,tail_test_acc,tail_rare_class_acc,majority_baseline")?;
    for s in &out {
        writeln!(
            w,
            "{},{},{},{}",
            s.regime.name(),
            metrics::format_float(s.tail_test_acc),
            metrics::format_float(s.tail_rare_acc),
            metrics::format_float(s.majority_baseline)
        )?;
    }
    w.flush()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> ExperimentConfig {
        let mut c = ExperimentConfig::regression(seed);
        c.rounds = 20;
        c.clients = 3;
        c
    }

    #[test]
    fn zero_rounds_emit_initial_record_only() {
        let mut cfg = small(1);
        cfg.rounds = 0;
        let run = run_regression::<Vec<u8>>(&cfg, None).unwrap();
        assert_eq!(run.records.len(), 1);
        assert_eq!(run.records[0].round, 0);
        let mean = vector::mean(run.setup.inits.iter().map(Vec::as_slice), 3);
        assert_eq!(run.final_w_bar(), mean.as_slice());
    }

    #[test]
    fn initial_aggregate_averages_inits() {
        let run = run_regression::<Vec<u8>>(&small(2), None).unwrap();
        let mean = vector::mean(run.setup.inits.iter().map(Vec::as_slice), 3);
        assert_eq!(run.w_bars[0], mean);
        assert_eq!(run.records.len(), 21);
        assert_eq!(run.records[20].global_step, 100);
    }

    #[test]
    fn proportions() {
        let mut c = ClassificationConfig {
            rare_class: Some(2),
            ..Default::default()
        };
        assert_eq!(client_proportions(&c, 0), vec![0.0, 0.0, 1.0, 0.0]);
        let p = client_proportions(&c, 1);
        assert_eq!(p[2], 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        c.rare_class = None;
        c.dominant_fraction = Some(0.7);
        let p = client_proportions(&c, 5);
        assert_eq!(p[1], 0.7);
        assert!((p[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn sweep_rewrites() {
        let cfg = small(1);
        let c = apply_sweep(&cfg, SweepParam::Delta, "1.0").unwrap();
        assert_eq!(c.schedule, ScheduleSpec::Tapering { c: 0.1, delta: 1.0 });
        assert_eq!(apply_sweep(&cfg, SweepParam::Period, "10").unwrap().period, 10);
        assert!(apply_sweep(&cfg, SweepParam::Period, "2.5").is_err());
        assert!(apply_sweep(&cfg, SweepParam::Delta, "0.6").is_err());
        let c = apply_sweep(&cfg, SweepParam::SigmaXSet, "5/10/15").unwrap();
        assert!(matches!(c.regression_task().unwrap().sigma_x, SigmaX::Choose { .. }));
        assert_eq!(apply_sweep(&cfg, SweepParam::SnrDb, "25").unwrap().regression_task().unwrap().snr_db, 25.0);
        assert!(SweepParam::parse("bogus").is_err());
    }

    #[test]
    fn baseline_config_layout() {
        let configs = baseline_configs(&small(1));
        assert_eq!(configs.len(), 8);
        assert_eq!(configs[0].1, configs[4].1);
        assert!(configs.iter().all(|(_, c)| c.clone().validate().is_ok()));
    }

    #[test]
    fn tail_helpers() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let v: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(tail(&v, 0.2), &[8.0, 9.0]);
        assert_eq!(tail_mean(&v, 0.2), 8.5);
        assert_eq!(tail_std(&v, 0.2), 0.5);
    }
}
