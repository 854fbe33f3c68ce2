//! Limiting-ODE diagnostic.
//!
//! The aggregate is compared against `w' = (1/L) sum_i p_i h_i(w)` on the
//! timescale `T_n`: the ODE is launched from the aggregate at `T_n` and its
//! solution at the later event times is compared with the aggregates that the
//! simulation actually produced there.

use crate::error::{Error, Result};
use crate::schedules::LimitingWeights;
use crate::tasks::RegressionTask;
use crate::vector;

pub const DEFAULT_H_MAX: f64 = 1e-2;
pub const DEFAULT_HORIZON: f64 = 1.0;

/// `(1/L) sum_i p_i h_i(w)` with analytic regression `h`.
pub fn ode_rhs(p: &LimitingWeights, tasks: &[RegressionTask], w: &[f64]) -> Vec<f64> {
    let l = tasks.len() as f64;
    let mut out = vec![0.0; w.len()];
    for (task, &pi) in tasks.iter().zip(p.as_slice()) {
        if pi != 0.0 {
            vector::axpy(pi / l, &task.population_h(w), &mut out);
        }
    }
    out
}

/// Solution samples at the event times.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeTrajectory {
    pub start: f64,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl OdeTrajectory {
    pub fn initial(&self) -> &[f64] {
        &self.values[0]
    }

    pub fn last(&self) -> &[f64] {
        self.values.last().expect("trajectory has at least one sample")
    }
}

fn rk4_step<F: Fn(&[f64]) -> Vec<f64>>(rhs: &F, w: &[f64], h: f64) -> Vec<f64> {
    let k1 = rhs(w);
    let mut tmp: Vec<f64> = w.iter().zip(&k1).map(|(x, k)| x + 0.5 * h * k).collect();
    let k2 = rhs(&tmp);
    for ((t, x), k) in tmp.iter_mut().zip(w).zip(&k2) {
        *t = x + 0.5 * h * k;
    }
    let k3 = rhs(&tmp);
    for ((t, x), k) in tmp.iter_mut().zip(w).zip(&k3) {
        *t = x + h * k;
    }
    let k4 = rhs(&tmp);
    w.iter()
        .enumerate()
        .map(|(j, x)| x + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
        .collect()
}

/// Classical RK4 for an autonomous RHS from `s = event_times[0]`, with each
/// inter-event interval split into equal substeps no longer than `h_max`.
pub fn integrate<F: Fn(&[f64]) -> Vec<f64>>(
    rhs: F,
    w0: &[f64],
    s: f64,
    event_times: &[f64],
    h_max: f64,
) -> Result<OdeTrajectory> {
    if !(h_max > 0.0 && h_max.is_finite()) {
        return Err(Error::validation("diagnostics.h_max", "must be positive"));
    }
    match event_times.first() {
        Some(&t0) if t0 == s => {}
        Some(&t0) => {
            return Err(Error::OutOfRange { t: t0, lo: s, hi: s });
        }
        None => {
            return Err(Error::validation("event_times", "need at least one event time"));
        }
    }
    let mut values = Vec::with_capacity(event_times.len());
    values.push(w0.to_vec());
    let mut w = w0.to_vec();
    for pair in event_times.windows(2) {
        let (t, next) = (pair[0], pair[1]);
        let gap = next - t;
        if !(gap > f64::EPSILON * t.abs().max(1.0)) {
            return Err(Error::StepTooLarge { t, gap });
        }
        let substeps = (gap / h_max).ceil().max(1.0) as usize;
        let h = gap / substeps as f64;
        for _ in 0..substeps {
            w = rk4_step(&rhs, &w, h);
        }
        values.push(w.clone());
    }
    Ok(OdeTrajectory {
        start: s,
        times: event_times.to_vec(),
        values,
    })
}

/// Piecewise-linear path through the aggregates at the event times.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolatedPath {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl InterpolatedPath {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                got: values.len(),
            });
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation("path.times", "knot times must increase strictly"));
        }
        Ok(Self { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

pub fn interpolate(path: &InterpolatedPath, t: f64) -> Result<Vec<f64>> {
    let times = &path.times;
    let (lo, hi) = (times[0], times[times.len() - 1]);
    if !(t >= lo && t <= hi) {
        return Err(Error::OutOfRange { t, lo, hi });
    }
    // first knot strictly greater than t
    let upper = times.partition_point(|&k| k <= t);
    if upper == 0 {
        return Ok(path.values[0].clone());
    }
    let n = upper - 1;
    if times[n] == t || n + 1 == times.len() {
        return Ok(path.values[n].clone());
    }
    let frac = (t - times[n]) / (times[n + 1] - times[n]);
    Ok(path.values[n]
        .iter()
        .zip(&path.values[n + 1])
        .map(|(a, b)| a + (b - a) * frac)
        .collect())
}

/// Largest `m` with `T_{n+m} <= T_n + horizon`, clamped to the recorded path.
pub fn horizon_rounds(times: &[f64], n_start: usize, horizon: f64) -> usize {
    let limit = times[n_start] + horizon;
    times[n_start..].iter().take_while(|&&t| t <= limit).count() - 1
}

/// `|w_bar_{(n+m)N} - w^{T_n}(T_{n+m})|` indexed by `m = 0..=m_horizon`.
/// Entry 0 is zero: both paths start from the same aggregate.
pub fn tracking_error(
    path: &InterpolatedPath,
    p: &LimitingWeights,
    tasks: &[RegressionTask],
    n_start: usize,
    m_horizon: usize,
    h_max: f64,
) -> Result<Vec<f64>> {
    let end = n_start + m_horizon;
    if end >= path.len() {
        return Err(Error::OutOfRange {
            t: end as f64,
            lo: 0.0,
            hi: (path.len() - 1) as f64,
        });
    }
    if m_horizon == 0 {
        return Ok(vec![0.0]);
    }
    let times = &path.times[n_start..=end];
    let trajectory = integrate(
        |w| ode_rhs(p, tasks, w),
        &path.values[n_start],
        times[0],
        times,
        h_max,
    )?;
    Ok(trajectory
        .values
        .iter()
        .zip(&path.values[n_start..=end])
        .map(|(ode, actual)| vector::dist(ode, actual))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reg(w: Vec<f64>, sx: f64) -> RegressionTask {
        RegressionTask::new(w, sx, 0.0, 1).unwrap()
    }

    #[test]
    fn rhs_vanishes_at_optimum() {
        let tasks = vec![reg(vec![1.0, 2.0], 5.0), reg(vec![-3.0, 0.0], 2.0), reg(vec![0.5, 0.5], 1.0)];
        let p = LimitingWeights::from_values(vec![1.0, 0.5, 0.0], 0).unwrap();
        let w_star = crate::tasks::closed_form_optimum(&tasks, &p).unwrap();
        assert!(vector::norm(&ode_rhs(&p, &tasks, &w_star)) < 1e-10);
    }

    #[test]
    fn rhs_single_and_symmetric() {
        let t = reg(vec![1.0, -1.0], 2.0);
        let w = [0.3, 0.4];
        assert_eq!(ode_rhs(&LimitingWeights::uniform(1), &[t.clone()], &w), t.population_h(&w));
        let many = ode_rhs(&LimitingWeights::uniform(3), &vec![t.clone(); 3], &w);
        assert!(vector::dist(&many, &t.population_h(&w)) < 1e-12);
    }

    #[test]
    fn zero_rhs_is_constant() {
        let traj = integrate(|w| vec![0.0; w.len()], &[1.0, 2.0], 0.0, &[0.0, 0.5, 2.0], 1e-2).unwrap();
        assert!(traj.values.iter().all(|v| v == &vec![1.0, 2.0]));
    }

    #[test]
    fn exponential_decay() {
        // w' = -lambda w with lambda = 2 sigma_x^2, sigma_x = 1
        let lambda = 2.0;
        let times: Vec<f64> = (0..=50).map(|k| k as f64 * 0.1).collect();
        let traj = integrate(|w| vec![-lambda * w[0]], &[3.0], 0.0, &times, 1e-2).unwrap();
        for (t, v) in traj.times.iter().zip(&traj.values) {
            assert!((v[0] - 3.0 * (-lambda * t).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn integrate_rejects_degenerate_gaps() {
        assert!(matches!(
            integrate(|w| w.to_vec(), &[1.0], 0.0, &[0.0, 0.0], 1e-2),
            Err(Error::StepTooLarge { .. })
        ));
        assert!(integrate(|w| w.to_vec(), &[1.0], 1.0, &[0.0, 1.0], 1e-2).is_err());
    }

    #[test]
    fn interpolation() {
        let path = InterpolatedPath::new(vec![0.0, 1.0, 3.0], vec![vec![0.0], vec![2.0], vec![6.0]]).unwrap();
        assert_eq!(interpolate(&path, 1.0).unwrap(), vec![2.0]);
        assert_eq!(interpolate(&path, 3.0).unwrap(), vec![6.0]);
        assert_eq!(interpolate(&path, 2.0).unwrap(), vec![4.0]);
        assert_eq!(interpolate(&path, 0.25).unwrap(), vec![0.5]);
        assert!(matches!(interpolate(&path, 3.5), Err(Error::OutOfRange { .. })));
        assert!(InterpolatedPath::new(vec![0.0, 0.0], vec![vec![0.0], vec![1.0]]).is_err());
    }

    #[test]
    fn horizon_mapping() {
        let times = [0.0, 0.4, 0.8, 1.2, 1.6];
        assert_eq!(horizon_rounds(&times, 0, 1.0), 2);
        assert_eq!(horizon_rounds(&times, 1, 1.0), 2);
        assert_eq!(horizon_rounds(&times, 3, 1.0), 1);
        assert_eq!(horizon_rounds(&times, 4, 1.0), 0);
    }

    #[test]
    fn tracking_zero_horizon_and_range() {
        let path = InterpolatedPath::new(vec![0.0, 1.0], vec![vec![0.0], vec![1.0]]).unwrap();
        let tasks = [reg(vec![1.0], 1.0)];
        let p = LimitingWeights::uniform(1);
        assert_eq!(tracking_error(&path, &p, &tasks, 0, 0, 1e-2).unwrap(), vec![0.0]);
        assert!(tracking_error(&path, &p, &tasks, 0, 5, 1e-2).is_err());
    }
}
