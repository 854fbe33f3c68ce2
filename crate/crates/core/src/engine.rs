//! The federated iteration: clients take mini-batch SGD steps on a shared
//! global clock and the server replaces every client model with the average
//! at steps `0, N, 2N, ...`.
//!
//! A round is `N - 1` local gradient steps followed by one aggregation step.
//! The aggregation step consumes a clock index but no gradient, so client
//! step sizes are evaluated at every index that is not a multiple of `N`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain, Stream};
use crate::schedules::StepSizeSchedule;
use crate::tasks::LocalObjective;
use crate::vector;

pub const DEFAULT_PROX_MU: f64 = 0.1;

fn default_mu() -> f64 {
    DEFAULT_PROX_MU
}

/// Local-update and aggregation rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AlgorithmVariant {
    /// Client-specific schedules with plain averaging.
    Proposed,
    Fedavg,
    /// Adds `mu (w - w_bar_last)` to every local gradient.
    Fedprox {
        #[serde(default = "default_mu")]
        mu: f64,
    },
    /// Averages per-step-normalized client displacements.
    Fednova,
}

impl AlgorithmVariant {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmVariant::Proposed => "proposed",
            AlgorithmVariant::Fedavg => "fedavg",
            AlgorithmVariant::Fedprox { .. } => "fedprox",
            AlgorithmVariant::Fednova => "fednova",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            AlgorithmVariant::Fedprox { mu } if !(mu > 0.0 && mu.is_finite()) => {
                Err(Error::validation("algorithm.mu", "must be positive"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    pub w: Vec<f64>,
    pub schedule: StepSizeSchedule,
    /// Gradient steps taken since the last aggregation.
    pub local_steps: usize,
    rng: Stream,
}

/// One executed local step, kept for noise diagnostics.
#[derive(Debug, Clone)]
pub struct StepTrace {
    pub step_size: f64,
    /// Iterate the gradient was evaluated at.
    pub w_before: Vec<f64>,
    /// Stochastic gradient of the local loss (without any proximal term).
    pub grad: Vec<f64>,
}

impl ClientState {
    pub fn new(id: usize, w: Vec<f64>, schedule: StepSizeSchedule, rng: Stream) -> Self {
        Self {
            id,
            w,
            schedule,
            local_steps: 0,
            rng,
        }
    }

    /// Draws `batch_size` indices uniformly with replacement.
    pub fn draw_batch(&mut self, n_samples: usize, batch_size: usize) -> Vec<usize> {
        (0..batch_size).map(|_| self.rng.random_range(0..n_samples)).collect()
    }

    /// `w <- w - a_n (S_m + prox)` at global step `n`.
    ///
    /// `prox` carries `(mu, w_bar_last)` for the proximal variant.
    pub fn local_step<O: LocalObjective + ?Sized>(
        &mut self,
        step: u64,
        objective: &O,
        batch_size: usize,
        prox: Option<(f64, &[f64])>,
    ) -> Result<StepTrace> {
        let batch = self.draw_batch(objective.n_samples(), batch_size);
        let grad = objective.minibatch_grad(&self.w, &batch)?;
        self.apply_gradient(step, grad, prox)
    }

    /// Applies a precomputed stochastic gradient at global step `n`.
    pub fn apply_gradient(&mut self, step: u64, grad: Vec<f64>, prox: Option<(f64, &[f64])>) -> Result<StepTrace> {
        if grad.len() != self.w.len() {
            return Err(Error::DimensionMismatch {
                expected: self.w.len(),
                got: grad.len(),
            });
        }
        let a = self.schedule.step_size(step);
        let w_before = self.w.clone();
        match prox {
            Some((mu, anchor)) => {
                let mut g = grad.clone();
                for ((gi, wi), ai) in g.iter_mut().zip(&self.w).zip(anchor) {
                    *gi += mu * (wi - ai);
                }
                vector::axpy(-a, &g, &mut self.w);
            }
            None => vector::axpy(-a, &grad, &mut self.w),
        }
        if !vector::all_finite(&self.w) {
            return Err(Error::NonFiniteIterate { client: self.id, step });
        }
        self.local_steps += 1;
        Ok(StepTrace {
            step_size: a,
            w_before,
            grad,
        })
    }
}

/// `(1/L) sum_i (w_i - w_prev)`.
pub fn server_pseudo_gradient(w_prev: &[f64], client_ws: &[&[f64]]) -> Result<Vec<f64>> {
    let dim = w_prev.len();
    let mut delta = vec![0.0; dim];
    for w in client_ws {
        if w.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: w.len(),
            });
        }
        for ((d, wi), wp) in delta.iter_mut().zip(*w).zip(w_prev) {
            *d += wi - wp;
        }
    }
    let inv = 1.0 / client_ws.len() as f64;
    delta.iter_mut().for_each(|d| *d *= inv);
    Ok(delta)
}

/// Per-step noise realizations. The noise is taken relative to the
/// full-dataset gradient, the conditional mean of a mini-batch draw.
#[derive(Debug, Clone, Default)]
pub struct NoiseLog {
    /// `M = -(S_m + h(w))` with `h = -full_grad` for every client step, in step-then-client order.
    pub client_noise: Vec<Vec<f64>>,
    /// `(1/L) sum_i a_k^(i) M^(i)_{k+1}` per global local-step index.
    pub weighted_increments: Vec<Vec<f64>>,
    pub steps: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundSummary {
    pub round: usize,
    /// Clock index of the aggregation that closed the round.
    pub global_step: u64,
    pub delta_wbar: f64,
}

#[derive(Debug, Clone)]
pub struct FederatedState {
    pub clients: Vec<ClientState>,
    pub w_bar: Vec<f64>,
    pub round: usize,
    /// Next clock index to execute.
    pub global_step: u64,
    pub period: usize,
    pub algorithm: AlgorithmVariant,
}

impl FederatedState {
    /// Clients start from `inits`; batch streams derive from `seed`. No
    /// aggregation has happened yet: call [`FederatedState::aggregate`] to
    /// execute step 0.
    pub fn new(
        inits: Vec<Vec<f64>>,
        schedules: Vec<StepSizeSchedule>,
        period: usize,
        algorithm: AlgorithmVariant,
        seed: u64,
    ) -> Result<Self> {
        if inits.is_empty() {
            return Err(Error::validation("clients", "need at least one client"));
        }
        if inits.len() != schedules.len() {
            return Err(Error::DimensionMismatch {
                expected: inits.len(),
                got: schedules.len(),
            });
        }
        if period < 2 {
            return Err(Error::validation("period", "aggregation period must be at least 2"));
        }
        algorithm.validate()?;
        let dim = inits[0].len();
        if let Some(bad) = inits.iter().find(|w| w.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        let clients = inits
            .into_iter()
            .zip(schedules)
            .enumerate()
            .map(|(i, (w, s))| ClientState::new(i, w, s, rng::stream(seed, Domain::Batch, i as u32)))
            .collect();
        Ok(Self {
            clients,
            w_bar: vec![0.0; dim],
            round: 0,
            global_step: 0,
            period,
            algorithm,
        })
    }

    pub fn dim(&self) -> usize {
        self.w_bar.len()
    }

    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    /// Executes the aggregation step at the current clock index, which must be
    /// a multiple of `N`. Every client is re-initialized to the new average.
    pub fn aggregate(&mut self) -> Result<()> {
        if self.global_step % self.period as u64 != 0 {
            return Err(Error::validation(
                "global_step",
                format!("aggregation at step {} is not a multiple of {}", self.global_step, self.period),
            ));
        }
        let dim = self.dim();
        if let Some(c) = self.clients.iter().find(|c| c.w.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: c.w.len(),
            });
        }
        let taken: usize = self.clients.iter().map(|c| c.local_steps).sum();
        self.w_bar = match self.algorithm {
            AlgorithmVariant::Fednova if taken > 0 => self.nova_average(),
            _ => vector::mean(self.clients.iter().map(|c| c.w.as_slice()), dim),
        };
        for c in &mut self.clients {
            c.w.copy_from_slice(&self.w_bar);
            c.local_steps = 0;
        }
        self.global_step += 1;
        Ok(())
    }

    /// `w_last + tau_eff * (1/L) sum_i (w_i - w_last) / tau_i`, with
    /// `tau_eff` the mean local step count.
    fn nova_average(&self) -> Vec<f64> {
        let l = self.clients.len() as f64;
        let tau_eff = self.clients.iter().map(|c| c.local_steps as f64).sum::<f64>() / l;
        let mut acc = vec![0.0; self.dim()];
        for c in &self.clients {
            let tau = c.local_steps.max(1) as f64;
            for ((a, wi), wl) in acc.iter_mut().zip(&c.w).zip(&self.w_bar) {
                *a += (wi - wl) / tau;
            }
        }
        self.w_bar
            .iter()
            .zip(&acc)
            .map(|(wl, a)| wl + tau_eff * a / l)
            .collect()
    }

    /// Runs `N - 1` local steps on every client, then aggregates.
    pub fn run_round<O: LocalObjective>(
        &mut self,
        objectives: &[O],
        batch_size: usize,
        mut noise: Option<&mut NoiseLog>,
    ) -> Result<RoundSummary> {
        if objectives.len() != self.clients.len() {
            return Err(Error::DimensionMismatch {
                expected: self.clients.len(),
                got: objectives.len(),
            });
        }
        if let Some(c) = objectives.iter().find(|o| o.dim() != self.dim()) {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: c.dim(),
            });
        }
        let prev = self.w_bar.clone();
        let anchor = self.w_bar.clone();
        let prox_mu = match self.algorithm {
            AlgorithmVariant::Fedprox { mu } => Some(mu),
            _ => None,
        };
        let l = self.clients.len() as f64;
        for _ in 1..self.period {
            let step = self.global_step;
            let mut weighted = noise.as_ref().map(|_| vec![0.0; self.dim()]);
            for (client, objective) in self.clients.iter_mut().zip(objectives) {
                let prox = prox_mu.map(|mu| (mu, anchor.as_slice()));
                let trace = client.local_step(step, objective, batch_size, prox)?;
                if let (Some(log), Some(acc)) = (noise.as_deref_mut(), weighted.as_mut()) {
                    let full = objective.full_grad(&trace.w_before)?;
                    let m: Vec<f64> = full.iter().zip(&trace.grad).map(|(f, g)| f - g).collect();
                    vector::axpy(trace.step_size / l, &m, acc);
                    log.client_noise.push(m);
                }
            }
            if let (Some(log), Some(acc)) = (noise.as_deref_mut(), weighted) {
                log.weighted_increments.push(acc);
                log.steps.push(step);
            }
            self.global_step += 1;
        }
        self.aggregate()?;
        self.round += 1;
        Ok(RoundSummary {
            round: self.round,
            global_step: self.global_step - 1,
            delta_wbar: vector::dist(&self.w_bar, &prev),
        })
    }
}

/// Summary of recorded martingale noise.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseStats {
    /// Number of client-step realizations pooled into the mean.
    pub count: usize,
    pub mean: Vec<f64>,
    /// Standard error of `mean`, per coordinate.
    pub std_error: Vec<f64>,
    /// Mean squared norm `E|M|^2`.
    pub second_moment: f64,
    /// Running sums `R_n = sum_{p <= n} (1/L) sum_i a_p M_{p+1}`.
    pub running_sums: Vec<Vec<f64>>,
    /// `max_{n > n0} |R_n - R_last|` with `n0` the midpoint of the record.
    pub tail_variation: f64,
    pub last_norm: f64,
}

/// Reduces a noise log to its C2/C5-style diagnostics.
pub fn noise_realization_stats(log: &NoiseLog) -> Result<NoiseStats> {
    let dim = log
        .client_noise
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::validation("noise", "no recorded steps"))?;
    let n = log.client_noise.len();
    let mean = vector::mean(log.client_noise.iter().map(Vec::as_slice), dim);
    let mut var = vec![0.0; dim];
    let mut second_moment = 0.0;
    for m in &log.client_noise {
        for ((v, x), mu) in var.iter_mut().zip(m).zip(&mean) {
            *v += (x - mu) * (x - mu);
        }
        second_moment += vector::dot(m, m);
    }
    let denom = (n.max(2) - 1) as f64;
    let std_error = var.iter().map(|v| (v / denom / n as f64).sqrt()).collect();

    let mut running_sums = Vec::with_capacity(log.weighted_increments.len());
    let mut acc = vec![0.0; dim];
    for inc in &log.weighted_increments {
        vector::axpy(1.0, inc, &mut acc);
        running_sums.push(acc.clone());
    }
    let last = acc;
    let half = running_sums.len() / 2;
    let tail_variation = running_sums[half..]
        .iter()
        .map(|r| vector::dist(r, &last))
        .fold(0.0, f64::max);
    Ok(NoiseStats {
        count: n,
        mean,
        std_error,
        second_moment: second_moment / n as f64,
        last_norm: vector::norm(&last),
        running_sums,
        tail_variation,
    })
}
